use std::sync::Arc;

use rand::Rng;

use super::{fill, Activation, InitScheme, LayerGrads};
use crate::algebra::Algebra;
use crate::error::{Error, Result};
use crate::tensor::{
    concat, contract, contract_grad_rhs, conv_kd, conv_kd_vjp, conv_output_shape, stack, Padding,
    Tensor,
};

/// k-dimensional convolution over an algebra, k = 1, 2, 3, channels last.
///
/// Input `(batch, n_1, .., n_k, al·in)`, kernel `(al, l_1, .., l_k, in, f)`,
/// output `(batch, m_1, .., m_k, al·f)` with channel `c·f + j` holding
/// component `c` of filter `j`. Bias, when present, is `(al, f)` and is
/// added flattened to the `al·f` output channels.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperConv {
    algebra: Arc<Algebra>,
    in_mult: usize,
    filters: usize,
    kernel_size: Vec<usize>,
    strides: Vec<usize>,
    padding: Padding,
    kernel: Tensor,
    bias: Option<Tensor>,
    activation: Option<Activation>,
}

pub(crate) struct Trace {
    /// One `(l_1, .., l_k, al·in, f)` kernel per output component.
    per_component: Vec<Tensor>,
    pre: Tensor,
    pub(crate) out: Tensor,
}

impl HyperConv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        algebra: Arc<Algebra>,
        in_mult: usize,
        filters: usize,
        kernel_size: Vec<usize>,
        strides: Vec<usize>,
        padding: Padding,
        bias: bool,
        activation: Option<Activation>,
    ) -> Result<Self> {
        let k = kernel_size.len();
        if !(1..=3).contains(&k) {
            return Err(Error::Config(format!(
                "convolution rank must be 1, 2 or 3, got {k}"
            )));
        }
        if strides.len() != k {
            return Err(Error::Config(format!(
                "{k}-d convolution needs {k} strides, got {}",
                strides.len()
            )));
        }
        if in_mult == 0 || filters == 0 || kernel_size.contains(&0) || strides.contains(&0) {
            return Err(Error::Config(
                "convolution sizes, filters and strides must be positive".into(),
            ));
        }
        let al = algebra.dim();
        let mut kshape = vec![al];
        kshape.extend(&kernel_size);
        kshape.extend([in_mult, filters]);
        Ok(HyperConv {
            kernel: Tensor::zeros(&kshape),
            bias: bias.then(|| Tensor::zeros(&[al, filters])),
            algebra,
            in_mult,
            filters,
            kernel_size,
            strides,
            padding,
            activation,
        })
    }

    pub fn algebra(&self) -> &Arc<Algebra> {
        &self.algebra
    }

    /// Spatial rank k.
    pub fn rank(&self) -> usize {
        self.kernel_size.len()
    }

    pub fn in_mult(&self) -> usize {
        self.in_mult
    }

    pub fn filters(&self) -> usize {
        self.filters
    }

    pub fn kernel_size(&self) -> &[usize] {
        &self.kernel_size
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    pub fn activation(&self) -> Option<Activation> {
        self.activation
    }

    pub fn in_channels(&self) -> usize {
        self.algebra.dim() * self.in_mult
    }

    pub fn out_channels(&self) -> usize {
        self.algebra.dim() * self.filters
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
                "conv kernel must have shape {:?}, got {:?}",
                self.kernel.shape(),
                kernel.shape()
            )));
        }
        self.kernel = kernel;
        Ok(())
    }

    pub fn set_bias(&mut self, bias: Option<Tensor>) -> Result<()> {
        if let Some(b) = &bias {
            if b.shape() != [self.algebra.dim(), self.filters] {
                return Err(Error::shape(format!(
                    "conv bias must have shape [{}, {}], got {:?}",
                    self.algebra.dim(),
                    self.filters,
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
        let receptive: usize = self.kernel_size.iter().product();
        let fans = (
            receptive * self.in_channels(),
            receptive * self.out_channels(),
        );
        fill(&mut self.kernel, scheme, fans, rng)?;
        if let Some(b) = self.bias.as_mut() {
            b.data_mut().fill(0.0);
        }
        Ok(())
    }

    /// Output shape (without batch) for an input of shape
    /// `(n_1, .., n_k, channels)`.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let k = self.rank();
        if input.len() != k + 1 || input[k] != self.in_channels() {
            return Err(Error::shape(format!(
                "{k}-d hyperconv expects input (n_1..n_{k}, {}), got {:?}",
                self.in_channels(),
                input
            )));
        }
        let mut out =
            conv_output_shape(&input[..k], &self.kernel_size, &self.strides, self.padding)?;
        out.push(self.out_channels());
        Ok(out)
    }

    /// `W = C_{1,0}(A, K)` with its leading (input component) axis moved
    /// behind the spatial axes, giving `(al, l_1, .., l_k, al, in, f)`, then
    /// the two axes before `f` merged: shape `(al, l_1, .., l_k, al·in, f)`.
    pub fn merged_weights(&self) -> Result<Tensor> {
        let k = self.rank();
        let w = contract(self.algebra.structure(), &self.kernel, 1, 0)?;
        let w = w.move_axis(0, k + 1)?;
        w.reshape_merge(k + 1)
    }

    pub(crate) fn trace(&self, x: &Tensor) -> Result<Trace> {
        if x.rank() == 0 {
            return Err(Error::shape("hyperconv input needs a batch axis"));
        }
        self.output_shape(&x.shape()[1..])?;
        let k = self.rank();
        let w = self.merged_weights()?;
        let per_component = (0..self.algebra.dim())
            .map(|i| w.index_axis(0, i))
            .collect::<Result<Vec<_>>>()?;
        let temp = per_component
            .iter()
            .map(|wi| conv_kd(x, wi, &self.strides, self.padding))
            .collect::<Result<Vec<_>>>()?;
        let mut pre = concat(&temp, k + 1)?;
        if let Some(b) = &self.bias {
            pre = pre.add(&b.clone().reshape_merge(0)?)?;
        }
        let out = match self.activation {
            Some(act) => pre.map(|v| act.apply(v)),
            None => pre.clone(),
        };
        Ok(Trace {
            per_component,
            pre,
            out,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.trace(x)?.out)
    }

    /// Reverse pass through the forward chain: activation, bias add,
    /// concatenation, the per-component convolutions, the component split,
    /// the merge, the axis move and the structure-tensor contraction.
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
        let k = self.rank();
        let (al, f) = (self.algebra.dim(), self.filters);
        let g = match self.activation {
            Some(act) => {
                let d = t.pre.zip_map(&t.out, |z, y| act.derivative_given(z, y))?;
                grad_out.zip_map(&d, |g, dv| g * dv)?
            }
            None => grad_out.clone(),
        };
        let bias = match &self.bias {
            Some(_) => Some(g.sum_leading(1)?.reshape_split(0, al)?),
            None => None,
        };
        let mut input = Tensor::zeros(x.shape());
        let mut per_component = Vec::with_capacity(al);
        for (i, wi) in t.per_component.iter().enumerate() {
            let gi = g.slice_axis(k + 1, i * f, f)?;
            let (gx, gw) = conv_kd_vjp(x, wi, &self.strides, self.padding, &gi)?;
            input.add_assign(&gx)?;
            per_component.push(gw);
        }
        let gw = stack(&per_component)?
            .reshape_split(k + 1, al)?
            .move_axis(k + 1, 0)?;
        let kernel = contract_grad_rhs(self.algebra.structure(), self.kernel.shape(), 1, 0, &gw)?;
        Ok(LayerGrads {
            input,
            kernel,
            bias,
        })
    }
}
