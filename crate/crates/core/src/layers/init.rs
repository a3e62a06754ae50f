use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Kernel initialization schemes. Biases always start at zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum InitScheme {
    Zeros,
    /// Uniform on `(-limit, limit)`.
    Uniform {
        limit: f64,
    },
    /// Normal with mean 0 and standard deviation `std`.
    Normal {
        std: f64,
    },
    /// Uniform on `±sqrt(6 / (fan_in + fan_out))`.
    #[default]
    GlorotUniform,
}

impl std::str::FromStr for InitScheme {
    type Err = Error;

    /// Parameter-free names only; `uniform` and `normal` need the JSON form.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zeros" => Ok(InitScheme::Zeros),
            "glorot_uniform" => Ok(InitScheme::GlorotUniform),
            other => Err(Error::Config(format!("unknown init scheme '{other}'"))),
        }
    }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Fills `kernel` in row-major order from `rng`.
pub(crate) fn fill<R: Rng + ?Sized>(
    kernel: &mut Tensor,
    scheme: InitScheme,
    fans: (usize, usize),
    rng: &mut R,
) -> Result<()> {
    match scheme {
        InitScheme::Zeros => kernel.data_mut().fill(0.0),
        InitScheme::Uniform { limit } => uniform(kernel, limit, rng)?,
        InitScheme::GlorotUniform => uniform(kernel, glorot_bound(fans.0, fans.1), rng)?,
        InitScheme::Normal { std } => {
            let dist = Normal::new(0.0, std)
                .map_err(|e| Error::Config(format!("normal init with std {std}: {e}")))?;
            for v in kernel.data_mut() {
                *v = dist.sample(rng);
            }
        }
    }
    Ok(())
}

fn uniform<R: Rng + ?Sized>(kernel: &mut Tensor, limit: f64, rng: &mut R) -> Result<()> {
    if !(limit.is_finite() && limit >= 0.0) {
        return Err(Error::Config(format!(
            "uniform init limit {limit} must be finite and >= 0"
        )));
    }
    for v in kernel.data_mut() {
        *v = if limit == 0.0 {
            0.0
        } else {
            rng.random_range(-limit..limit)
        };
    }
    Ok(())
}
