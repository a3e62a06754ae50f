//! JSON model descriptions: input shape plus one entry per layer.
//!
//! ```json
//! {
//!   "input_shape": [8, 8, 2],
//!   "layers": [
//!     {"type": "hyperconv2d", "algebra": "builtin:complex", "in": 1, "filters": 4,
//!      "kernel_size": [3, 3], "strides": [1, 1], "padding": "same", "activation": "tanh"},
//!     {"type": "hyperdense", "algebra": "builtin:complex", "in": 256, "units": 1}
//!   ]
//! }
//! ```
//!
//! `bias` defaults to `true`, `activation` to none, `init` to
//! `{"scheme": "glorot_uniform"}`, `strides` to all ones and `padding` to
//! `"valid"`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::{resolve_algebra, Algebra};
use crate::error::{Error, Result};
use crate::layers::{Activation, HyperConv, HyperDense, InitScheme, Layer, Model};
use crate::tensor::Padding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerType {
    #[serde(rename = "hyperdense")]
    Dense,
    #[serde(rename = "hyperconv1d")]
    Conv1d,
    #[serde(rename = "hyperconv2d")]
    Conv2d,
    #[serde(rename = "hyperconv3d")]
    Conv3d,
}

impl LayerType {
    fn conv_rank(self) -> Option<usize> {
        match self {
            LayerType::Dense => None,
            LayerType::Conv1d => Some(1),
            LayerType::Conv2d => Some(2),
            LayerType::Conv3d => Some(3),
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    #[serde(rename = "type")]
    pub kind: LayerType,
    /// `builtin:<name>`, a path to an algebra JSON file, or a bare
    /// built-in name.
    pub algebra: String,
    #[serde(rename = "in")]
    pub in_mult: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_size: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strides: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<Padding>,
    #[serde(default)]
    pub activation: Option<Activation>,
    #[serde(default = "yes")]
    pub bias: bool,
    #[serde(default)]
    pub init: InitScheme,
}

impl LayerSpec {
    fn check_fields(&self) -> Result<()> {
        let name = match self.kind.conv_rank() {
            None => "hyperdense",
            Some(_) => "hyperconv",
        };
        let misplaced = match self.kind.conv_rank() {
            None => [
                ("filters", self.filters.is_some()),
                ("kernel_size", self.kernel_size.is_some()),
                ("strides", self.strides.is_some()),
                ("padding", self.padding.is_some()),
            ]
            .into_iter()
            .find(|(_, set)| *set)
            .map(|(f, _)| f),
            Some(_) => self.units.is_some().then_some("units"),
        };
        match misplaced {
            Some(field) => Err(Error::Config(format!("{name} layers take no \"{field}\""))),
            None => Ok(()),
        }
    }

    /// Builds the layer with zero parameters.
    pub fn build(&self, algebra: Arc<Algebra>) -> Result<Layer> {
        self.check_fields()?;
        match self.kind.conv_rank() {
            None => {
                let units = self
                    .units
                    .ok_or_else(|| Error::Config("hyperdense needs \"units\"".into()))?;
                Ok(Layer::Dense(HyperDense::new(
                    algebra,
                    self.in_mult,
                    units,
                    self.bias,
                    self.activation,
                )?))
            }
            Some(k) => {
                let filters = self
                    .filters
                    .ok_or_else(|| Error::Config("hyperconv needs \"filters\"".into()))?;
                let kernel_size = self
                    .kernel_size
                    .clone()
                    .ok_or_else(|| Error::Config("hyperconv needs \"kernel_size\"".into()))?;
                if kernel_size.len() != k {
                    return Err(Error::Config(format!(
                        "hyperconv{k}d needs {k} kernel sizes, got {}",
                        kernel_size.len()
                    )));
                }
                let strides = self.strides.clone().unwrap_or_else(|| vec![1; k]);
                Ok(Layer::Conv(HyperConv::new(
                    algebra,
                    self.in_mult,
                    filters,
                    kernel_size,
                    strides,
                    self.padding.unwrap_or(Padding::Valid),
                    self.bias,
                    self.activation,
                )?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Input shape without the batch axis: `[al·in]` for a dense first
    /// layer, `[n_1, .., n_k, al·in]` for a convolution.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    /// Directory relative algebra paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ModelSpec {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut spec: ModelSpec = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        spec.base_dir = origin.parent().map(Path::to_path_buf);
        Ok(spec)
    }

    /// Resolves each distinct algebra reference once, in layer order.
    pub fn resolve_algebras(&self) -> Result<Vec<Arc<Algebra>>> {
        let mut cache: HashMap<&str, Arc<Algebra>> = HashMap::new();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let alg = match cache.get(layer.algebra.as_str()) {
                Some(a) => a.clone(),
                None => {
                    let a = Arc::new(
                        resolve_algebra(&layer.algebra, self.base_dir.as_deref())
                            .map_err(|e| Error::Config(format!("layer {i}: {e}")))?,
                    );
                    cache.insert(&layer.algebra, a.clone());
                    a
                }
            };
            out.push(alg);
        }
        Ok(out)
    }

    /// Builds the model with zero parameters using the given algebras,
    /// one per layer.
    pub fn build_with(&self, algebras: &[Arc<Algebra>]) -> Result<Model> {
        if algebras.len() != self.layers.len() {
            return Err(Error::Config(format!(
                "{} algebras for {} layers",
                algebras.len(),
                self.layers.len()
            )));
        }
        let layers = self
            .layers
            .iter()
            .zip(algebras)
            .enumerate()
            .map(|(i, (spec, alg))| {
                spec.build(alg.clone())
                    .map_err(|e| Error::Config(format!("layer {i}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Model::new(self.input_shape.clone(), layers)
    }

    pub fn build(&self) -> Result<Model> {
        self.build_with(&self.resolve_algebras()?)
    }

    pub fn init_schemes(&self) -> Vec<InitScheme> {
        self.layers.iter().map(|l| l.init).collect()
    }
}

/// Reads, parses and validates a model spec; the returned spec is known
/// to build.
pub fn load_model_spec(path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let spec = ModelSpec::parse(&text, path)?;
    spec.build()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ModelSpec> {
        ModelSpec::parse(text, Path::new("inline.json"))
    }

    #[test]
    fn minimal_dense_spec() {
        let spec = parse(
            r#"{"input_shape": [2], "layers": [
                {"type": "hyperdense", "algebra": "builtin:complex", "in": 1, "units": 1}]}"#,
        )
        .unwrap();
        let model = spec.build().unwrap();
        assert_eq!(model.output_width(), 2);
        assert!(spec.layers[0].bias);
        assert_eq!(spec.layers[0].init, InitScheme::GlorotUniform);
    }

    #[test]
    fn width_mismatch_names_both_layers_and_widths() {
        let spec = parse(
            r#"{"input_shape": [2], "layers": [
                {"type": "hyperdense", "algebra": "complex", "in": 1, "units": 3},
                {"type": "hyperdense", "algebra": "complex", "in": 4, "units": 1}]}"#,
        )
        .unwrap();
        let msg = spec.build().unwrap_err().to_string();
        assert!(msg.contains("layer 1") && msg.contains("layer 0"), "{msg}");
        assert!(msg.contains('6') && msg.contains('8'), "{msg}");
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let msg = parse("{\"input_shape\": [2],\n\"layers\": [\n{\"type\": 5}]}")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("line 3"), "{msg}");
        let msg = parse("{\"input_shape\": [2], \"layers\": [], \"extra\": 1}")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("extra"), "{msg}");
    }

    #[test]
    fn misplaced_and_missing_fields_are_rejected() {
        for body in [
            r#"{"type": "hyperdense", "algebra": "real", "in": 1}"#,
            r#"{"type": "hyperdense", "algebra": "real", "in": 1, "units": 1, "filters": 2}"#,
            r#"{"type": "hyperconv1d", "algebra": "real", "in": 1, "filters": 1}"#,
            r#"{"type": "hyperconv1d", "algebra": "real", "in": 1, "filters": 1, "kernel_size": [1, 1]}"#,
            r#"{"type": "hyperdense", "algebra": "octonion", "in": 1, "units": 1}"#,
        ] {
            let text = format!(r#"{{"input_shape": [1], "layers": [{body}]}}"#);
            assert!(parse(&text).and_then(|s| s.build()).is_err(), "{body}");
        }
    }

    #[test]
    fn conv_then_dense_chains_through_flatten() {
        let spec = parse(
            r#"{"input_shape": [5, 5, 4], "layers": [
                {"type": "hyperconv2d", "algebra": "quaternion", "in": 1, "filters": 2,
                 "kernel_size": [3, 3], "padding": "valid", "activation": "relu"},
                {"type": "hyperdense", "algebra": "quaternion", "in": 18, "units": 1}]}"#,
        )
        .unwrap();
        let model = spec.build().unwrap();
        assert_eq!(model.output_width(), 4);
        let algs = spec.resolve_algebras().unwrap();
        assert!(Arc::ptr_eq(&algs[0], &algs[1]));
    }
}
