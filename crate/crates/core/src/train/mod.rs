//! Minibatch SGD with optional momentum.
//!
//! Runs are deterministic for a given seed: shuffling uses a seeded
//! ChaCha stream, batches are processed one at a time, and rows inside a
//! batch are always visited in ascending order so the gradient sum does
//! not depend on the shuffle.

mod uat;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{DataBinding, Dataset};
use crate::layers::Model;
use crate::tensor::Tensor;

pub use uat::{
    sup_error, uat_fit, uat_model, uat_sweep, uat_train_spec, UatFit, UatPoint, UatTarget,
    UAT_HIDDEN_SCALE, UAT_REGRESSION_BOUND, UAT_SEEDS,
};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` before taking
/// logarithms.
pub const BCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    /// Mean of squared differences over every element.
    #[default]
    #[serde(rename = "mse")]
    Mse,
    /// Mean binary cross-entropy over every element; predictions are
    /// probabilities.
    #[serde(rename = "binary-cross-entropy")]
    BinaryCrossEntropy,
}

impl std::str::FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(Loss::Mse),
            "binary-cross-entropy" => Ok(Loss::BinaryCrossEntropy),
            other => Err(Error::Config(format!(
                "unknown loss '{other}' (expected mse or binary-cross-entropy)"
            ))),
        }
    }
}

impl std::fmt::Display for Loss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Loss::Mse => "mse",
            Loss::BinaryCrossEntropy => "binary-cross-entropy",
        })
    }
}

fn check_pair(pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(())
}

impl Loss {
    pub fn value(self, pred: &Tensor, target: &Tensor) -> Result<f64> {
        check_pair(pred, target)?;
        let n = pred.len().max(1) as f64;
        let pairs = pred.data().iter().zip(target.data());
        let total: f64 = match self {
            Loss::Mse => pairs.map(|(p, t)| (p - t) * (p - t)).sum(),
            Loss::BinaryCrossEntropy => pairs
                .map(|(&p, &t)| {
                    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
                })
                .sum(),
        };
        Ok(total / n)
    }

    /// Derivative of [`Loss::value`] with respect to `pred`.
    pub fn gradient(self, pred: &Tensor, target: &Tensor) -> Result<Tensor> {
        check_pair(pred, target)?;
        let n = pred.len().max(1) as f64;
        pred.zip_map(target, |p, t| match self {
            Loss::Mse => 2.0 * (p - t) / n,
            Loss::BinaryCrossEntropy => {
                let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                (p - t) / (p * (1.0 - p)) / n
            }
        })
    }
}

fn default_batch() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub loss: Loss,
    #[serde(default)]
    pub shuffle: bool,
    /// CSV column binding used by the command-line front end.
    #[serde(default)]
    pub data: DataBinding,
}

impl TrainSpec {
    pub fn new(epochs: usize, batch_size: usize, learning_rate: f64) -> Self {
        TrainSpec {
            epochs,
            batch_size,
            learning_rate,
            momentum: 0.0,
            seed: 0,
            loss: Loss::Mse,
            shuffle: false,
            data: DataBinding::default(),
        }
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let spec: TrainSpec = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        spec.validate(None)?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Field ranges, plus `batch_size <= rows` when the dataset size is
    /// known. A learning rate of zero is allowed (a dry run).
    pub fn validate(&self, rows: Option<usize>) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!(
                "learning_rate {} must be finite and >= 0",
                self.learning_rate
            ));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return bad(format!("momentum {} must lie in [0, 1)", self.momentum));
        }
        if let Some(rows) = rows {
            if self.batch_size > rows {
                return bad(format!(
                    "batch_size {} exceeds the {rows} training rows",
                    self.batch_size
                ));
            }
        }
        Ok(())
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub epoch: usize,
    /// Loss over the whole training set after the epoch's updates.
    pub train_loss: f64,
    pub eval_loss: Option<f64>,
    /// Elapsed time since training started; zero unless wall-clock
    /// recording was requested, so metrics files stay reproducible.
    pub wall_ms: u64,
}

/// Writes one JSON object per line.
pub fn write_metrics(path: &Path, metrics: &[Metrics]) -> Result<()> {
    let mut out = Vec::new();
    for m in metrics {
        serde_json::to_writer(&mut out, m).expect("metrics serialize");
        out.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Mean loss of `model` over all of `data`.
pub fn evaluate(model: &Model, data: &Dataset, loss: Loss) -> Result<f64> {
    check_compatible(model, data)?;
    let pred = model.forward(data.features())?;
    loss.value(&pred, data.targets())
}

fn check_compatible(model: &Model, data: &Dataset) -> Result<()> {
    if model.input_shape() != data.feature_shape() {
        return Err(Error::shape(format!(
            "model input {:?} does not match dataset features {:?}",
            model.input_shape(),
            data.feature_shape()
        )));
    }
    if model.output_width() != data.target_width() {
        return Err(Error::shape(format!(
            "model output width {} does not match {} target columns",
            model.output_width(),
            data.target_width()
        )));
    }
    Ok(())
}

/// `v ← μ·v + g`, `θ ← θ − lr·v`. With `μ = 0` this is exactly
/// `θ − lr·g`.
pub fn sgd_step(
    params: Vec<&mut Tensor>,
    grads: &[&Tensor],
    velocity: &mut [Tensor],
    learning_rate: f64,
    momentum: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::shape(
            "parameter, gradient and velocity counts differ",
        ));
    }
    for ((p, g), v) in params.into_iter().zip(grads).zip(velocity.iter_mut()) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(Error::shape(format!(
                "gradient {:?} does not match parameter {:?}",
                g.shape(),
                p.shape()
            )));
        }
        for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = momentum * *vv + gv;
            *pv -= learning_rate * *vv;
        }
    }
    Ok(())
}

/// Trains `model` in place and returns one [`Metrics`] entry per epoch.
pub fn train(
    model: &mut Model,
    data: &Dataset,
    spec: &TrainSpec,
    eval: Option<&Dataset>,
    wall_clock: bool,
) -> Result<Vec<Metrics>> {
    run(model, data, spec, eval, wall_clock, true)
}

/// Like [`train`] but only evaluates the loss after the last epoch, which
/// returns a single [`Metrics`] entry.
pub fn train_quiet(model: &mut Model, data: &Dataset, spec: &TrainSpec) -> Result<Metrics> {
    let mut history = run(model, data, spec, None, false, false)?;
    Ok(history.pop().expect("at least one epoch"))
}

fn run(
    model: &mut Model,
    data: &Dataset,
    spec: &TrainSpec,
    eval: Option<&Dataset>,
    wall_clock: bool,
    every_epoch: bool,
) -> Result<Vec<Metrics>> {
    spec.validate(Some(data.rows()))?;
    check_compatible(model, data)?;
    if let Some(e) = eval {
        check_compatible(model, e)?;
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..data.rows()).collect();
    let mut velocity: Vec<Tensor> = model
        .params()
        .iter()
        .map(|p| Tensor::zeros(p.shape()))
        .collect();
    let mut history = Vec::with_capacity(if every_epoch { spec.epochs } else { 1 });
    for epoch in 1..=spec.epochs {
        if spec.shuffle {
            order.shuffle(&mut rng);
        }
        for (step, chunk) in order.chunks(spec.batch_size).enumerate() {
            let mut rows = chunk.to_vec();
            rows.sort_unstable();
            let (x, y) = data.select(&rows)?;
            let (_, grads) = model.forward_backward(&x, |pred| spec.loss.gradient(pred, &y))?;
            let grads = grads.params();
            if grads.iter().any(|t| !t.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient at epoch {epoch}, step {step}; try a smaller learning rate"
                )));
            }
            sgd_step(
                model.params_mut(),
                &grads,
                &mut velocity,
                spec.learning_rate,
                spec.momentum,
            )?;
        }
        if !every_epoch && epoch < spec.epochs {
            continue;
        }
        let train_loss = evaluate(model, data, spec.loss)?;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss {train_loss} after epoch {epoch}; try a smaller learning rate"
            )));
        }
        let eval_loss = eval.map(|e| evaluate(model, e, spec.loss)).transpose()?;
        history.push(Metrics {
            epoch,
            train_loss,
            eval_loss,
            wall_ms: if wall_clock {
                start.elapsed().as_millis() as u64
            } else {
                0
            },
        });
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_basics() {
        let a = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(vec![2, 2], vec![1.0, 0.0, 3.0, 5.0]).unwrap();
        assert_eq!(Loss::Mse.value(&a, &a).unwrap(), 0.0);
        assert_eq!(Loss::Mse.value(&a, &b).unwrap(), 5.0 / 4.0);
        let g = Loss::Mse.gradient(&a, &b).unwrap();
        assert_eq!(g.data(), &[0.0, 1.0, 0.0, -0.5]);
    }

    #[test]
    fn bce_matches_closed_form_and_clamps() {
        let p = Tensor::new(vec![1, 2], vec![0.25, 1.0]).unwrap();
        let t = Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
        let v = Loss::BinaryCrossEntropy.value(&p, &t).unwrap();
        let want = (-(0.25f64.ln()) - (1.0 - (1.0 - BCE_EPS)).ln()) / 2.0;
        assert!((v - want).abs() < 1e-9);
        assert!(Loss::BinaryCrossEntropy
            .gradient(&p, &t)
            .unwrap()
            .is_finite());
    }

    #[test]
    fn spec_validation() {
        assert!(TrainSpec::parse(r#"{"epochs": 1, "learning_rate": 0.1}"#, Path::new("t")).is_ok());
        for bad in [
            r#"{"epochs": 0, "learning_rate": 0.1}"#,
            r#"{"epochs": 1, "learning_rate": -1}"#,
            r#"{"epochs": 1, "learning_rate": 0.1, "momentum": 1.0}"#,
            r#"{"epochs": 1, "learning_rate": 0.1, "batch_size": 0}"#,
            r#"{"epochs": 1, "learning_rate": 0.1, "loss": "hinge"}"#,
            r#"{"epochs": 1, "learning_rate": 0.1, "optimizer": "adam"}"#,
        ] {
            assert!(TrainSpec::parse(bad, Path::new("t")).is_err(), "{bad}");
        }
        assert!(TrainSpec::new(1, 10, 0.1).validate(Some(5)).is_err());
    }

    #[test]
    fn momentum_accumulates() {
        let mut p = Tensor::new(vec![1], vec![1.0]).unwrap();
        let g = Tensor::new(vec![1], vec![1.0]).unwrap();
        let mut v = vec![Tensor::zeros(&[1])];
        sgd_step(vec![&mut p], &[&g], &mut v, 0.1, 0.5).unwrap();
        sgd_step(vec![&mut p], &[&g], &mut v, 0.1, 0.5).unwrap();
        assert!((p.data()[0] - (1.0 - 0.1 - 0.15)).abs() < 1e-15);
    }
}
