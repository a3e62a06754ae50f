//! Channels-last k-dimensional cross-correlation (the deep-learning
//! "convolution": the kernel is not flipped).
//!
//! Input is `(batch, n_1, .., n_k, c_in)`, kernel `(l_1, .., l_k, c_in, f)`,
//! output `(batch, m_1, .., m_k, f)`. With `Valid` padding
//! `m = floor((n - l) / s) + 1`; with `Same` padding `m = ceil(n / s)` and
//! the input is zero-padded by `max((m - 1) s + l - n, 0)`, with the odd
//! element going after.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Valid,
    Same,
}

impl std::str::FromStr for Padding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "valid" => Ok(Padding::Valid),
            "same" => Ok(Padding::Same),
            other => Err(Error::Config(format!(
                "unknown padding '{other}' (expected valid or same)"
            ))),
        }
    }
}

/// Per-axis output size and leading pad.
fn axis_geometry(n: usize, l: usize, s: usize, padding: Padding) -> Result<(usize, usize)> {
    if s == 0 {
        return Err(Error::shape("strides must be positive"));
    }
    if l == 0 {
        return Err(Error::shape("kernel extents must be positive"));
    }
    match padding {
        Padding::Valid => {
            if l > n {
                return Err(Error::shape(format!(
                    "kernel extent {l} larger than input extent {n}"
                )));
            }
            Ok(((n - l) / s + 1, 0))
        }
        Padding::Same => {
            let m = n.div_ceil(s);
            let total = ((m - 1) * s + l).saturating_sub(n);
            Ok((m, total / 2))
        }
    }
}

/// Output spatial dimensions for inputs with spatial extents `spatial`.
pub fn conv_output_shape(
    spatial: &[usize],
    kernel: &[usize],
    strides: &[usize],
    padding: Padding,
) -> Result<Vec<usize>> {
    if spatial.len() != kernel.len() || kernel.len() != strides.len() {
        return Err(Error::shape(format!(
            "spatial {spatial:?}, kernel {kernel:?} and strides {strides:?} disagree in rank"
        )));
    }
    spatial
        .iter()
        .zip(kernel)
        .zip(strides)
        .map(|((&n, &l), &s)| axis_geometry(n, l, s, padding).map(|(m, _)| m))
        .collect()
}

struct Geometry {
    batch: usize,
    spatial: Vec<usize>,
    kernel: Vec<usize>,
    out: Vec<usize>,
    pad: Vec<usize>,
    strides: Vec<usize>,
    c_in: usize,
    filters: usize,
}

impl Geometry {
    fn new(x: &[usize], w: &[usize], strides: &[usize], padding: Padding) -> Result<Self> {
        let k = w.len().saturating_sub(2);
        if !(1..=3).contains(&k) {
            return Err(Error::shape(format!(
                "kernel shape {w:?} is not (l_1, .., l_k, c_in, f) with k in 1..=3"
            )));
        }
        if x.len() != k + 2 {
            return Err(Error::shape(format!(
                "input shape {x:?} is not (batch, n_1, .., n_{k}, c_in)"
            )));
        }
        if strides.len() != k {
            return Err(Error::shape(format!(
                "expected {k} strides, got {}",
                strides.len()
            )));
        }
        let c_in = x[k + 1];
        if w[k] != c_in {
            return Err(Error::shape(format!(
                "input has {c_in} channels, kernel expects {}",
                w[k]
            )));
        }
        let mut out = Vec::with_capacity(k);
        let mut pad = Vec::with_capacity(k);
        for d in 0..k {
            let (m, p) = axis_geometry(x[d + 1], w[d], strides[d], padding)?;
            out.push(m);
            pad.push(p);
        }
        Ok(Geometry {
            batch: x[0],
            spatial: x[1..=k].to_vec(),
            kernel: w[..k].to_vec(),
            out,
            pad,
            strides: strides.to_vec(),
            c_in,
            filters: w[k + 1],
        })
    }

    fn out_shape(&self) -> Vec<usize> {
        let mut shape = vec![self.batch];
        shape.extend(&self.out);
        shape.push(self.filters);
        shape
    }

    /// Calls `visit(x_offset, w_offset, out_offset)` for every in-bounds
    /// (batch, output position, kernel position) triple, where offsets point
    /// at channel 0 / filter 0. Order: batch, output position (row-major),
    /// kernel position (row-major).
    fn for_each_tap(&self, mut visit: impl FnMut(usize, usize, usize)) {
        let k = self.kernel.len();
        let out_positions: usize = self.out.iter().product();
        let taps: usize = self.kernel.iter().product();
        let in_positions: usize = self.spatial.iter().product();
        let mut opos = vec![0usize; k];
        let mut kpos = vec![0usize; k];
        for b in 0..self.batch {
            for o in 0..out_positions {
                unravel(o, &self.out, &mut opos);
                let out_offset = (b * out_positions + o) * self.filters;
                'tap: for t in 0..taps {
                    unravel(t, &self.kernel, &mut kpos);
                    let mut flat = 0usize;
                    for d in 0..k {
                        let pos = opos[d] * self.strides[d] + kpos[d];
                        if pos < self.pad[d] || pos - self.pad[d] >= self.spatial[d] {
                            continue 'tap;
                        }
                        flat = flat * self.spatial[d] + (pos - self.pad[d]);
                    }
                    let x_offset = (b * in_positions + flat) * self.c_in;
                    let w_offset = t * self.c_in * self.filters;
                    visit(x_offset, w_offset, out_offset);
                }
            }
        }
    }
}

fn unravel(mut flat: usize, shape: &[usize], index: &mut [usize]) {
    for d in (0..shape.len()).rev() {
        index[d] = flat % shape[d];
        flat /= shape[d];
    }
}

/// Channels-last cross-correlation for k = 1, 2, 3.
pub fn conv_kd(x: &Tensor, w: &Tensor, strides: &[usize], padding: Padding) -> Result<Tensor> {
    let g = Geometry::new(x.shape(), w.shape(), strides, padding)?;
    let mut out = Tensor::zeros(&g.out_shape());
    let (xd, wd) = (x.data(), w.data());
    let (c_in, f) = (g.c_in, g.filters);
    let od = out.data_mut();
    g.for_each_tap(|xo, wo, oo| {
        let acc = &mut od[oo..oo + f];
        for c in 0..c_in {
            let xv = xd[xo + c];
            let wrow = &wd[wo + c * f..wo + (c + 1) * f];
            for (a, &wv) in acc.iter_mut().zip(wrow) {
                *a += xv * wv;
            }
        }
    });
    Ok(out)
}

/// Gradients of [`conv_kd`] with respect to the input and the kernel.
pub fn conv_kd_vjp(
    x: &Tensor,
    w: &Tensor,
    strides: &[usize],
    padding: Padding,
    grad: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let g = Geometry::new(x.shape(), w.shape(), strides, padding)?;
    if grad.shape() != g.out_shape() {
        return Err(Error::shape(format!(
            "upstream gradient has shape {:?}, convolution output is {:?}",
            grad.shape(),
            g.out_shape()
        )));
    }
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(w.shape());
    let (xd, wd, gd) = (x.data(), w.data(), grad.data());
    let (c_in, f) = (g.c_in, g.filters);
    {
        let gxd = gx.data_mut();
        let gwd = gw.data_mut();
        g.for_each_tap(|xo, wo, oo| {
            let up = &gd[oo..oo + f];
            for c in 0..c_in {
                let wrow = &wd[wo + c * f..wo + (c + 1) * f];
                gxd[xo + c] += up.iter().zip(wrow).map(|(u, w)| u * w).sum::<f64>();
                let xv = xd[xo + c];
                for (gwv, &u) in gwd[wo + c * f..wo + (c + 1) * f].iter_mut().zip(up) {
                    *gwv += xv * u;
                }
            }
        });
    }
    Ok((gx, gw))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_d_valid_hand_sum() {
        let x = Tensor::new(vec![1, 3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let w = Tensor::new(vec![2, 1, 1], vec![1.0, 1.0]).unwrap();
        let y = conv_kd(&x, &w, &[1], Padding::Valid).unwrap();
        assert_eq!(y.shape(), &[1, 2, 1]);
        assert_eq!(y.data(), &[3.0, 5.0]);
    }

    #[test]
    fn pointwise_scaling_kernel() {
        let x = Tensor::from_fn(&[2, 3, 4, 1], |ix| {
            (ix[1] * 4 + ix[2]) as f64 - ix[0] as f64
        });
        let w = Tensor::new(vec![1, 1, 1, 1], vec![2.0]).unwrap();
        let y = conv_kd(&x, &w, &[1, 1], Padding::Valid).unwrap();
        assert_eq!(y, x.scale(2.0));
    }

    #[test]
    fn same_padding_sizes_and_split() {
        // n = 5, l = 4, s = 2: m = 3, total pad = 4 + 4 - 5 = 3 -> 1 before, 2 after
        assert_eq!(axis_geometry(5, 4, 2, Padding::Same).unwrap(), (3, 1));
        assert_eq!(axis_geometry(4, 3, 1, Padding::Same).unwrap(), (4, 1));
        assert_eq!(axis_geometry(4, 2, 1, Padding::Same).unwrap(), (4, 0));
        assert_eq!(axis_geometry(7, 3, 3, Padding::Valid).unwrap(), (2, 0));
    }

    #[test]
    fn same_padding_one_d_values() {
        let x = Tensor::new(vec![1, 4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::new(vec![2, 1, 1], vec![1.0, 10.0]).unwrap();
        let y = conv_kd(&x, &w, &[1], Padding::Same).unwrap();
        // no pad before, one zero after
        assert_eq!(y.data(), &[21.0, 32.0, 43.0, 4.0]);
    }

    #[test]
    fn errors() {
        let x = Tensor::zeros(&[1, 2, 1]);
        let w = Tensor::zeros(&[3, 1, 1]);
        assert!(conv_kd(&x, &w, &[1], Padding::Valid).is_err());
        assert!(conv_kd(&x, &w, &[0], Padding::Same).is_err());
        assert!(conv_kd(&x, &Tensor::zeros(&[1, 2, 1]), &[1], Padding::Valid).is_err());
        let w4 = Tensor::zeros(&[1, 1, 1, 1, 1, 1]);
        assert!(conv_kd(
            &Tensor::zeros(&[1, 1, 1, 1, 1, 1]),
            &w4,
            &[1, 1, 1, 1],
            Padding::Valid
        )
        .is_err());
    }
}
