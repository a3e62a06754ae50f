//! Hypercomplex dense and convolutional layers and a sequential stack of
//! them.
//!
//! Both layer types fold the algebra's structure tensor into the kernel
//! (`W = C_{1,0}(A, K)` followed by an axis permutation and index merges)
//! and then run an ordinary real matrix product or convolution. Backward
//! passes walk the same chain of tensor operations in reverse; the
//! structure tensor itself is never differentiated.

mod activation;
mod conv;
mod dense;
mod init;

use rand::Rng;

pub use activation::{project, sigmoid, split_activation, Activation};
pub use conv::HyperConv;
pub use dense::HyperDense;
pub use init::{glorot_bound, InitScheme};

pub(crate) use init::fill;

use crate::algebra::Algebra;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Gradients of a scalar loss with respect to a layer's input and
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub bias: Option<Tensor>,
}

/// Forward intermediates kept for a backward pass.
pub(crate) enum Trace {
    Dense(dense::Trace),
    Conv(conv::Trace),
}

impl Trace {
    fn output(&self) -> &Tensor {
        match self {
            Trace::Dense(t) => &t.out,
            Trace::Conv(t) => &t.out,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(HyperDense),
    Conv(HyperConv),
}

impl Layer {
    pub fn kind(&self) -> String {
        match self {
            Layer::Dense(_) => "hyperdense".to_string(),
            Layer::Conv(c) => format!("hyperconv{}d", c.rank()),
        }
    }

    pub fn algebra(&self) -> &Algebra {
        match self {
            Layer::Dense(d) => d.algebra(),
            Layer::Conv(c) => c.algebra(),
        }
    }

    /// Output shape (without batch) for an input of shape `input`.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense(d) => {
                let width: usize = input.iter().product();
                if width != d.input_width() {
                    return Err(Error::shape(format!(
                        "hyperdense expects width {}, got {width}",
                        d.input_width()
                    )));
                }
                Ok(vec![d.output_width()])
            }
            Layer::Conv(c) => c.output_shape(input),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(d) => d.forward(x),
            Layer::Conv(c) => c.forward(x),
        }
    }

    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<LayerGrads> {
        match self {
            Layer::Dense(d) => d.backward(x, grad_out),
            Layer::Conv(c) => c.backward(x, grad_out),
        }
    }

    pub(crate) fn trace(&self, x: &Tensor) -> Result<Trace> {
        Ok(match self {
            Layer::Dense(d) => Trace::Dense(d.trace(x)?),
            Layer::Conv(c) => Trace::Conv(c.trace(x)?),
        })
    }

    pub(crate) fn backward_traced(
        &self,
        x: &Tensor,
        t: &Trace,
        grad_out: &Tensor,
    ) -> Result<LayerGrads> {
        match (self, t) {
            (Layer::Dense(d), Trace::Dense(t)) => d.backward_traced(x, t, grad_out),
            (Layer::Conv(c), Trace::Conv(t)) => c.backward_traced(x, t, grad_out),
            _ => Err(Error::shape("trace from a different layer type")),
        }
    }

    pub fn initialize<R: Rng + ?Sized>(&mut self, scheme: InitScheme, rng: &mut R) -> Result<()> {
        match self {
            Layer::Dense(d) => d.initialize(scheme, rng),
            Layer::Conv(c) => c.initialize(scheme, rng),
        }
    }

    /// Kernel, then bias if present.
    pub fn params(&self) -> Vec<&Tensor> {
        let (k, b) = match self {
            Layer::Dense(d) => (d.kernel(), d.bias()),
            Layer::Conv(c) => (c.kernel(), c.bias()),
        };
        std::iter::once(k).chain(b).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Dense(d) => d.params_mut(),
            Layer::Conv(c) => c.params_mut(),
        }
    }
}

/// Layers applied in order. Dense layers flatten whatever they receive
/// to `(batch, width)`; the model output is always `(batch, width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    output_shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub input: Tensor,
    pub layers: Vec<LayerGrads>,
}

impl ModelGrads {
    /// Parameter gradients in the same order as [`Model::params`].
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|g| std::iter::once(&g.kernel).chain(g.bias.as_ref()))
            .collect()
    }
}

impl Model {
    /// Checks that each layer accepts the previous layer's output.
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a model needs at least one layer".into()));
        }
        let mut shape = input_shape.clone();
        for (i, layer) in layers.iter().enumerate() {
            shape = layer.output_shape(&shape).map_err(|e| {
                let source = if i == 0 {
                    format!("the input {input_shape:?}")
                } else {
                    format!(
                        "layer {} ({}) producing {:?}",
                        i - 1,
                        layers[i - 1].kind(),
                        shape
                    )
                };
                Error::Config(format!(
                    "layer {i} ({}) cannot follow {source}: {e}",
                    layer.kind()
                ))
            })?;
        }
        Ok(Model {
            input_shape,
            layers,
            output_shape: shape,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn output_width(&self) -> usize {
        self.output_shape.iter().product()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }

    pub fn initialize<R: Rng + ?Sized>(
        &mut self,
        schemes: &[InitScheme],
        rng: &mut R,
    ) -> Result<()> {
        if schemes.len() != self.layers.len() {
            return Err(Error::Config(format!(
                "{} init schemes for {} layers",
                schemes.len(),
                self.layers.len()
            )));
        }
        for (layer, &scheme) in self.layers.iter_mut().zip(schemes) {
            layer.initialize(scheme, rng)?;
        }
        Ok(())
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        if x.rank() == 0 || x.shape()[1..] != self.input_shape[..] {
            return Err(Error::shape(format!(
                "model expects input (batch, {:?}), got {:?}",
                self.input_shape,
                x.shape()
            )));
        }
        Ok(x.shape()[0])
    }

    fn layer_input(layer: &Layer, x: Tensor) -> Result<Tensor> {
        match layer {
            Layer::Dense(_) if x.rank() != 2 => {
                let batch = x.shape()[0];
                let width = x.len() / batch.max(1);
                x.reshape(&[batch, width])
            }
            _ => Ok(x),
        }
    }

    /// Runs every layer; returns `(batch, output_width)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let batch = self.check_input(x)?;
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&Self::layer_input(layer, cur)?)?;
        }
        cur.reshape(&[batch, self.output_width()])
    }

    /// Gradients of `Σ grad_out ⊙ forward(x)`.
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<ModelGrads> {
        let width = self.output_width();
        let (_, grads) = self.forward_backward(x, |out| {
            if grad_out.shape() != out.shape() {
                return Err(Error::shape(format!(
                    "upstream gradient {:?} does not match output ({}, {width})",
                    grad_out.shape(),
                    out.shape()[0]
                )));
            }
            Ok(grad_out.clone())
        })?;
        Ok(grads)
    }

    /// One forward pass, then `upstream(output)` as the gradient of the
    /// loss with respect to the `(batch, width)` output, then the backward
    /// pass. Returns the output with the gradients.
    pub fn forward_backward(
        &self,
        x: &Tensor,
        upstream: impl FnOnce(&Tensor) -> Result<Tensor>,
    ) -> Result<(Tensor, ModelGrads)> {
        let batch = self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut traces = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let fed = Self::layer_input(layer, cur)?;
            let t = layer.trace(&fed)?;
            cur = t.output().clone();
            inputs.push(fed);
            traces.push(t);
        }
        let out_shape = cur.shape().to_vec();
        let out = cur.reshape(&[batch, self.output_width()])?;
        let mut g = upstream(&out)?.reshape(&out_shape)?;
        let mut grads = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let lg = layer.backward_traced(&inputs[i], &traces[i], &g)?;
            let prev_shape = if i == 0 {
                x.shape()
            } else {
                traces[i - 1].output().shape()
            };
            g = lg.input.clone().reshape(prev_shape)?;
            grads.push(lg);
        }
        grads.reverse();
        Ok((
            out,
            ModelGrads {
                input: g,
                layers: grads,
            },
        ))
    }
}
