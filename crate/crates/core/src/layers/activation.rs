use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Real scalar nonlinearities. On algebra-valued signals they act on every
/// real component separately (split activation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
    Relu,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative at pre-activation `x`, given `y = self.apply(x)`. Same
    /// value as [`Activation::derivative`] without a second `exp`/`tanh`.
    pub fn derivative_given(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative at pre-activation value `x`.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Activation::Identity),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!(
                "unknown activation '{other}' (expected identity, sigmoid, tanh or relu)"
            ))),
        }
    }
}

fn check_split(x: &Tensor, al: usize) -> Result<usize> {
    let width = *x
        .shape()
        .last()
        .ok_or_else(|| Error::shape("split activation needs at least one axis"))?;
    if al == 0 || width % al != 0 {
        return Err(Error::shape(format!(
            "trailing width {width} is not a multiple of the algebra dimension {al}"
        )));
    }
    Ok(width / al)
}

/// Applies `act` to every real component of an algebra-valued signal whose
/// trailing axis holds `al` components (component-major, `al × m`).
pub fn split_activation(x: &Tensor, act: Activation, al: usize) -> Result<Tensor> {
    check_split(x, al)?;
    Ok(x.map(|v| act.apply(v)))
}

/// Component `k` of an algebra-valued signal: the `m` trailing entries
/// belonging to basis element `e_k`.
pub fn project(x: &Tensor, al: usize, k: usize) -> Result<Tensor> {
    let m = check_split(x, al)?;
    if k >= al {
        return Err(Error::shape(format!(
            "component {k} out of range for algebra dimension {al}"
        )));
    }
    x.slice_axis(x.rank() - 1, k * m, m)
}
