//! Independent reference implementations and randomized checks.
//!
//! The oracles here never touch the tensor-engine path the layers use
//! (contraction, permutation, merged weights, `conv_kd`). They loop over
//! algebra elements and call [`Algebra::mul`] directly, one output element
//! at a time.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::Algebra;
use crate::error::{Error, Result};
use crate::layers::{Activation, HyperConv, HyperDense, Layer};
use crate::tensor::{Padding, Tensor};

/// Central-difference step used by the gradient checks.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for per-entry gradient relative error, so entries
/// whose true gradient is near zero are judged against the roundoff level
/// of the finite difference instead of against zero.
pub const GRAD_REL_FLOOR: f64 = 1e-6;

/// `max |a - b| / max |b|`, or the absolute difference when `b` is all
/// zeros. Shapes must match.
pub fn rel_error(actual: &Tensor, expected: &Tensor) -> Result<f64> {
    if actual.shape() != expected.shape() {
        return Err(Error::shape(format!(
            "comparing {:?} with {:?}",
            actual.shape(),
            expected.shape()
        )));
    }
    let diff = actual
        .data()
        .iter()
        .zip(expected.data())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if diff.is_nan() || actual.data().iter().any(|v| v.is_nan()) {
        return Ok(f64::NAN);
    }
    let scale = expected.max_abs();
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

fn activate(v: f64, act: Option<Activation>) -> f64 {
    act.map_or(v, |a| a.apply(v))
}

/// Dense layer computed element by element: `out_u = Σ_i x_i · K_iu` in
/// the algebra, plus bias, then the activation per component.
pub fn naive_dense(
    alg: &Algebra,
    kernel: &Tensor,
    bias: Option<&Tensor>,
    activation: Option<Activation>,
    x: &Tensor,
) -> Result<Tensor> {
    let al = alg.dim();
    let [ka, n_in, units] = *kernel.shape() else {
        return Err(Error::shape("dense kernel must be rank 3"));
    };
    if ka != al || x.rank() != 2 || x.shape()[1] != al * n_in {
        return Err(Error::shape("naive_dense: incompatible shapes"));
    }
    let batch = x.shape()[0];
    let mut out = Tensor::zeros(&[batch, al * units]);
    for b in 0..batch {
        for u in 0..units {
            let mut acc = vec![0.0; al];
            for i in 0..n_in {
                let xi: Vec<f64> = (0..al).map(|c| x.get(&[b, c * n_in + i])).collect();
                let ki: Vec<f64> = (0..al).map(|c| kernel.get(&[c, i, u])).collect();
                for (a, p) in acc.iter_mut().zip(alg.mul(&xi, &ki)?) {
                    *a += p;
                }
            }
            for (c, &a) in acc.iter().enumerate() {
                let bias_v = bias.map_or(0.0, |t| t.get(&[c * units + u]));
                out.set(&[b, c * units + u], activate(a + bias_v, activation));
            }
        }
    }
    Ok(out)
}

fn same_pad(n: usize, l: usize, s: usize) -> (usize, usize) {
    let m = n.div_ceil(s);
    let need = (m - 1) * s + l;
    (m, if need > n { (need - n) / 2 } else { 0 })
}

fn for_each_index(shape: &[usize], mut f: impl FnMut(&[usize])) {
    let total: usize = shape.iter().product();
    let mut ix = vec![0; shape.len()];
    for _ in 0..total {
        f(&ix);
        for d in (0..shape.len()).rev() {
            ix[d] += 1;
            if ix[d] < shape[d] {
                break;
            }
            ix[d] = 0;
        }
    }
}

/// Convolution over algebra-valued feature maps, one output element at a
/// time: `out[b, p, f] = Σ_{offset, i} x[b, p·s + offset - pad, i] · K[offset, i, f]`.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv(
    alg: &Algebra,
    kernel: &Tensor,
    bias: Option<&Tensor>,
    activation: Option<Activation>,
    strides: &[usize],
    padding: Padding,
    x: &Tensor,
) -> Result<Tensor> {
    let al = alg.dim();
    let k = kernel.rank() - 3;
    let ksize = &kernel.shape()[1..=k];
    let n_in = kernel.shape()[k + 1];
    let filters = kernel.shape()[k + 2];
    let batch = x.shape()[0];
    let spatial = &x.shape()[1..=k];
    let mut out_sp = Vec::new();
    let mut pad = Vec::new();
    for d in 0..k {
        let (m, p) = match padding {
            Padding::Valid => ((spatial[d] - ksize[d]) / strides[d] + 1, 0),
            Padding::Same => same_pad(spatial[d], ksize[d], strides[d]),
        };
        out_sp.push(m);
        pad.push(p);
    }
    let mut oshape = vec![batch];
    oshape.extend(&out_sp);
    oshape.push(al * filters);
    let mut out = Tensor::zeros(&oshape);
    let mut err = None;
    for b in 0..batch {
        for_each_index(&out_sp, |o| {
            for f in 0..filters {
                let mut acc = vec![0.0; al];
                for_each_index(ksize, |l| {
                    let mut pos = vec![b];
                    for d in 0..k {
                        let p = (o[d] * strides[d] + l[d]) as isize - pad[d] as isize;
                        if p < 0 || p as usize >= spatial[d] {
                            return;
                        }
                        pos.push(p as usize);
                    }
                    for i in 0..n_in {
                        let xi: Vec<f64> = (0..al)
                            .map(|c| {
                                let mut ix = pos.clone();
                                ix.push(c * n_in + i);
                                x.get(&ix)
                            })
                            .collect();
                        let ki: Vec<f64> = (0..al)
                            .map(|c| {
                                let mut ix = vec![c];
                                ix.extend_from_slice(l);
                                ix.extend([i, f]);
                                kernel.get(&ix)
                            })
                            .collect();
                        match alg.mul(&xi, &ki) {
                            Ok(p) => acc.iter_mut().zip(p).for_each(|(a, v)| *a += v),
                            Err(e) => err = Some(e),
                        }
                    }
                });
                for (c, &a) in acc.iter().enumerate() {
                    let mut ix = vec![b];
                    ix.extend_from_slice(o);
                    ix.push(c * filters + f);
                    let bias_v = bias.map_or(0.0, |t| t.get(&[c, f]));
                    out.set(&ix, activate(a + bias_v, activation));
                }
            }
        });
    }
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Ordinary affine layer `x · K + b` on real matrices.
pub fn classical_dense(x: &Tensor, kernel: &Tensor, bias: Option<&Tensor>) -> Tensor {
    let (batch, n_in) = (x.shape()[0], x.shape()[1]);
    let units = kernel.shape()[1];
    Tensor::from_fn(&[batch, units], |ix| {
        let mut acc = 0.0;
        for i in 0..n_in {
            acc += x.get(&[ix[0], i]) * kernel.get(&[i, ix[1]]);
        }
        acc + bias.map_or(0.0, |b| b.get(&[ix[1]]))
    })
}

/// Ordinary real channels-last convolution with "valid" padding, written
/// as plain nested loops.
pub fn classical_conv_valid(x: &Tensor, kernel: &Tensor, strides: &[usize]) -> Tensor {
    let k = kernel.rank() - 2;
    let ksize = &kernel.shape()[..k];
    let c_in = kernel.shape()[k];
    let filters = kernel.shape()[k + 1];
    let mut oshape = vec![x.shape()[0]];
    for d in 0..k {
        oshape.push((x.shape()[d + 1] - ksize[d]) / strides[d] + 1);
    }
    oshape.push(filters);
    Tensor::from_fn(&oshape, |o| {
        let mut acc = 0.0;
        for_each_index(ksize, |l| {
            for c in 0..c_in {
                let mut xi = vec![o[0]];
                for d in 0..k {
                    xi.push(o[d + 1] * strides[d] + l[d]);
                }
                xi.push(c);
                let mut wi = l.to_vec();
                wi.extend([c, o[k + 1]]);
                acc += x.get(&xi) * kernel.get(&wi);
            }
        });
        acc
    })
}

/// Which layer a randomized trial builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Dense,
    Conv1d,
    Conv2d,
    Conv3d,
}

impl LayerKind {
    pub const ALL: [LayerKind; 4] = [
        LayerKind::Dense,
        LayerKind::Conv1d,
        LayerKind::Conv2d,
        LayerKind::Conv3d,
    ];

    pub fn conv_rank(self) -> Option<usize> {
        match self {
            LayerKind::Dense => None,
            LayerKind::Conv1d => Some(1),
            LayerKind::Conv2d => Some(2),
            LayerKind::Conv3d => Some(3),
        }
    }
}

impl std::str::FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(LayerKind::Dense),
            "conv1d" => Ok(LayerKind::Conv1d),
            "conv2d" => Ok(LayerKind::Conv2d),
            "conv3d" => Ok(LayerKind::Conv3d),
            other => Err(Error::Config(format!(
                "unknown layer kind '{other}' (expected dense, conv1d, conv2d or conv3d)"
            ))),
        }
    }
}

impl std::fmt::Display for LayerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LayerKind::Dense => "dense",
            LayerKind::Conv1d => "conv1d",
            LayerKind::Conv2d => "conv2d",
            LayerKind::Conv3d => "conv3d",
        };
        f.write_str(s)
    }
}

pub fn random_tensor<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// A randomly sized layer with random parameters and a matching input.
///
/// Sizes: batch ≤ 4, in ≤ 3, units/filters ≤ 3, spatial extents ≤ 6,
/// kernel extents ≤ 3, strides 1..=3.
pub fn random_trial<R: Rng + ?Sized>(
    alg: &Arc<Algebra>,
    kind: LayerKind,
    activation: Option<Activation>,
    rng: &mut R,
) -> Result<(Layer, Tensor)> {
    let al = alg.dim();
    let batch = rng.random_range(1..=4);
    let n_in = rng.random_range(1..=3);
    let out = rng.random_range(1..=3);
    let with_bias = rng.random_bool(0.5);
    match kind.conv_rank() {
        None => {
            let mut layer = HyperDense::new(alg.clone(), n_in, out, with_bias, activation)?;
            layer.set_kernel(random_tensor(&[al, n_in, out], rng))?;
            if with_bias {
                layer.set_bias(Some(random_tensor(&[al * out], rng)))?;
            }
            let x = random_tensor(&[batch, al * n_in], rng);
            Ok((Layer::Dense(layer), x))
        }
        Some(k) => {
            let padding = if rng.random_bool(0.5) {
                Padding::Valid
            } else {
                Padding::Same
            };
            let mut spatial = Vec::with_capacity(k);
            let mut ksize = Vec::with_capacity(k);
            let mut strides = Vec::with_capacity(k);
            for _ in 0..k {
                let n = rng.random_range(1..=6usize);
                let l = rng.random_range(1..=3usize.min(n));
                spatial.push(n);
                ksize.push(l);
                strides.push(rng.random_range(1..=3));
            }
            let mut layer = HyperConv::new(
                alg.clone(),
                n_in,
                out,
                ksize.clone(),
                strides,
                padding,
                with_bias,
                activation,
            )?;
            let mut kshape = vec![al];
            kshape.extend(&ksize);
            kshape.extend([n_in, out]);
            layer.set_kernel(random_tensor(&kshape, rng))?;
            if with_bias {
                layer.set_bias(Some(random_tensor(&[al, out], rng)))?;
            }
            let mut xshape = vec![batch];
            xshape.extend(&spatial);
            xshape.push(al * n_in);
            Ok((Layer::Conv(layer), random_tensor(&xshape, rng)))
        }
    }
}

/// Reference output for any layer via the naive oracles.
pub fn oracle_forward(layer: &Layer, x: &Tensor) -> Result<Tensor> {
    match layer {
        Layer::Dense(d) => naive_dense(d.algebra(), d.kernel(), d.bias(), d.activation(), x),
        Layer::Conv(c) => naive_conv(
            c.algebra(),
            c.kernel(),
            c.bias(),
            c.activation(),
            c.strides(),
            c.padding(),
            x,
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialSummary {
    pub trials: usize,
    pub max_rel_error: f64,
    pub all_finite: bool,
}

/// Compares the tensorial forward pass against the naive oracle on
/// `trials` random layers.
pub fn oracle_trials(
    alg: &Arc<Algebra>,
    kind: LayerKind,
    trials: usize,
    seed: u64,
) -> Result<TrialSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut all_finite = true;
    for _ in 0..trials {
        let (layer, x) = random_trial(alg, kind, None, &mut rng)?;
        let got = layer.forward(&x)?;
        let want = oracle_forward(&layer, &x)?;
        all_finite &= got.is_finite() && want.is_finite();
        let e = rel_error(&got, &want)?;
        worst = if e.is_nan() { f64::NAN } else { worst.max(e) };
    }
    Ok(TrialSummary {
        trials,
        max_rel_error: worst,
        all_finite,
    })
}

/// Largest per-entry relative gradient error of one layer and input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub entries: usize,
}

fn entry_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_REL_FLOOR)
}

/// Checks every input, kernel and bias gradient of `layer` at `x` against
/// central differences, using the loss `Σ r ⊙ forward(x)` with a random
/// `r`.
pub fn gradient_check<R: Rng + ?Sized>(
    layer: &Layer,
    x: &Tensor,
    rng: &mut R,
) -> Result<GradCheck> {
    let out = layer.forward(x)?;
    let r = random_tensor(out.shape(), rng);
    let loss = |l: &Layer, x: &Tensor| -> Result<f64> {
        let y = l.forward(x)?;
        Ok(y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum())
    };
    let grads = layer.backward(x, &r)?;
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_param: String::new(),
        entries: 0,
    };
    let record = |name: &str, a: f64, n: f64, report: &mut GradCheck| {
        let e = entry_error(a, n);
        report.entries += 1;
        if e > report.max_rel_error || e.is_nan() {
            report.max_rel_error = e;
            report.worst_param = name.to_string();
        }
    };

    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + FD_STEP;
        let up = loss(layer, &xp)?;
        xp.data_mut()[i] = orig - FD_STEP;
        let down = loss(layer, &xp)?;
        xp.data_mut()[i] = orig;
        record(
            "input",
            grads.input.data()[i],
            (up - down) / (2.0 * FD_STEP),
            &mut report,
        );
    }

    let n_params = layer.params().len();
    for p in 0..n_params {
        let name = if p == 0 { "kernel" } else { "bias" };
        let analytic = if p == 0 {
            &grads.kernel
        } else {
            grads
                .bias
                .as_ref()
                .expect("bias gradient present when bias is")
        };
        let mut probe = layer.clone();
        let len = probe.params()[p].len();
        for i in 0..len {
            let orig = probe.params()[p].data()[i];
            probe.params_mut()[p].data_mut()[i] = orig + FD_STEP;
            let up = loss(&probe, x)?;
            probe.params_mut()[p].data_mut()[i] = orig - FD_STEP;
            let down = loss(&probe, x)?;
            probe.params_mut()[p].data_mut()[i] = orig;
            record(
                name,
                analytic.data()[i],
                (up - down) / (2.0 * FD_STEP),
                &mut report,
            );
        }
    }
    Ok(report)
}

/// Runs `checks` gradient checks on random layers of `kind` with a random
/// activation from {none, sigmoid, tanh}.
pub fn gradient_trials(
    alg: &Arc<Algebra>,
    kind: LayerKind,
    checks: usize,
    seed: u64,
) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        worst_param: String::new(),
        entries: 0,
    };
    for _ in 0..checks {
        let act = match rng.random_range(0..3) {
            0 => None,
            1 => Some(Activation::Sigmoid),
            _ => Some(Activation::Tanh),
        };
        let (layer, x) = random_trial(alg, kind, act, &mut rng)?;
        let g = gradient_check(&layer, &x, &mut rng)?;
        worst.entries += g.entries;
        if g.max_rel_error > worst.max_rel_error || g.max_rel_error.is_nan() {
            worst.max_rel_error = g.max_rel_error;
            worst.worst_param = g.worst_param;
        }
    }
    Ok(worst)
}
