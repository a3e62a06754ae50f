use std::sync::Arc;

use rand::Rng;

use super::{fill, Activation, InitScheme, LayerGrads};
use crate::algebra::Algebra;
use crate::error::{Error, Result};
use crate::tensor::{contract, contract_grad_lhs, contract_grad_rhs, Tensor};

/// Fully connected layer over an algebra.
///
/// Input `(batch, al·in)` holds `in` algebra elements per sample,
/// component-major (`x[b, c·in + i]` is component `c` of element `i`). The
/// kernel `(al, in, units)` holds `in × units` algebra elements and the
/// output `(batch, al·units)` is `out_u = Σ_i x_i · K_iu` in the algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperDense {
    algebra: Arc<Algebra>,
    in_mult: usize,
    units: usize,
    kernel: Tensor,
    bias: Option<Tensor>,
    activation: Option<Activation>,
}

/// Intermediate values kept from a forward pass for the backward pass.
pub(crate) struct Trace {
    weights: Tensor,
    pre: Tensor,
    pub(crate) out: Tensor,
}

impl HyperDense {
    /// A layer with a zero kernel (and zero bias when `bias` is set).
    pub fn new(
        algebra: Arc<Algebra>,
        in_mult: usize,
        units: usize,
        bias: bool,
        activation: Option<Activation>,
    ) -> Result<Self> {
        if in_mult == 0 || units == 0 {
            return Err(Error::Config(format!(
                "dense layer needs positive in and units, got in={in_mult}, units={units}"
            )));
        }
        let al = algebra.dim();
        Ok(HyperDense {
            kernel: Tensor::zeros(&[al, in_mult, units]),
            bias: bias.then(|| Tensor::zeros(&[al * units])),
            algebra,
            in_mult,
            units,
            activation,
        })
    }

    pub fn algebra(&self) -> &Arc<Algebra> {
        &self.algebra
    }

    pub fn in_mult(&self) -> usize {
        self.in_mult
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn activation(&self) -> Option<Activation> {
        self.activation
    }

    pub fn input_width(&self) -> usize {
        self.algebra.dim() * self.in_mult
    }

    pub fn output_width(&self) -> usize {
        self.algebra.dim() * self.units
    }

    pub fn kernel(&self) -> &Tensor {
        &self.kernel
    }

    pub fn bias(&self) -> Option<&Tensor> {
        self.bias.as_ref()
    }

    pub fn set_kernel(&mut self, kernel: Tensor) -> Result<()> {
        if kernel.shape() != self.kernel.shape() {
            return Err(Error::shape(format!(
                "dense kernel must have shape {:?}, got {:?}",
                self.kernel.shape(),
                kernel.shape()
            )));
        }
        self.kernel = kernel;
        Ok(())
    }

    pub fn set_bias(&mut self, bias: Option<Tensor>) -> Result<()> {
        if let Some(b) = &bias {
            if b.shape() != [self.output_width()] {
                return Err(Error::shape(format!(
                    "dense bias must have shape [{}], got {:?}",
                    self.output_width(),
                    b.shape()
                )));
            }
        }
        self.bias = bias;
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = vec![&mut self.kernel];
        if let Some(b) = self.bias.as_mut() {
            p.push(b);
        }
        p
    }

    pub fn initialize<R: Rng + ?Sized>(&mut self, scheme: InitScheme, rng: &mut R) -> Result<()> {
        let fans = (self.input_width(), self.output_width());
        fill(&mut self.kernel, scheme, fans, rng)?;
        if let Some(b) = self.bias.as_mut() {
            b.data_mut().fill(0.0);
        }
        Ok(())
    }

    /// The real `(al·in, al·units)` matrix equivalent to right
    /// multiplication by the kernel:
    /// `W[i, k, in, u] = Σ_j A[i, j, k] K[j, in, u]`, reordered to
    /// `(i, in, k, u)` and merged pairwise.
    pub fn merged_weights(&self) -> Result<Tensor> {
        let w = contract(self.algebra.structure(), &self.kernel, 1, 0)?;
        let w = w.permute(&[0, 2, 1, 3])?;
        w.reshape_merge(0)?.reshape_merge(1)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.rank() != 2 || x.shape()[1] != self.input_width() {
            return Err(Error::shape(format!(
                "dense layer expects input (batch, {}), got {:?}",
                self.input_width(),
                x.shape()
            )));
        }
        Ok(())
    }

    pub(crate) fn trace(&self, x: &Tensor) -> Result<Trace> {
        self.check_input(x)?;
        let weights = self.merged_weights()?;
        let mut pre = contract(x, &weights, 1, 0)?;
        if let Some(b) = &self.bias {
            pre = pre.add(b)?;
        }
        let out = match self.activation {
            Some(act) => pre.map(|v| act.apply(v)),
            None => pre.clone(),
        };
        Ok(Trace { weights, pre, out })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.trace(x)?.out)
    }

    /// Reverse pass through the same chain of tensor operations as
    /// [`HyperDense::forward`]. The structure tensor is a constant.
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<LayerGrads> {
        let t = self.trace(x)?;
        self.backward_traced(x, &t, grad_out)
    }

    pub(crate) fn backward_traced(
        &self,
        x: &Tensor,
        t: &Trace,
        grad_out: &Tensor,
    ) -> Result<LayerGrads> {
        if grad_out.shape() != t.pre.shape() {
            return Err(Error::shape(format!(
                "upstream gradient {:?} does not match output {:?}",
                grad_out.shape(),
                t.pre.shape()
            )));
        }
        let g = match self.activation {
            Some(act) => {
                let d = t.pre.zip_map(&t.out, |z, y| act.derivative_given(z, y))?;
                grad_out.zip_map(&d, |g, dv| g * dv)?
            }
            None => grad_out.clone(),
        };
        let bias = match &self.bias {
            Some(_) => Some(g.sum_leading(1)?),
            None => None,
        };
        let input = contract_grad_lhs(x.shape(), &t.weights, 1, 0, &g)?;
        let gw = contract_grad_rhs(x, t.weights.shape(), 1, 0, &g)?;
        let (al, n_in, units) = (self.algebra.dim(), self.in_mult, self.units);
        let gw = gw.reshape_split(1, al)?.reshape_split(0, al)?;
        debug_assert_eq!(gw.shape(), &[al, n_in, al, units]);
        let gw = gw.permute(&[0, 2, 1, 3])?;
        let kernel = contract_grad_rhs(self.algebra.structure(), self.kernel.shape(), 1, 0, &gw)?;
        Ok(LayerGrads {
            input,
            kernel,
            bias,
        })
    }
}
