//! Model specs, CSV datasets and checkpoints.
//!
//! All configuration is JSON: algebra files, model specs and training
//! specs share one grammar.

mod checkpoint;
mod dataset;
mod spec;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dataset::{load_dataset_csv, DataBinding, Dataset};
pub use spec::{load_model_spec, LayerSpec, LayerType, ModelSpec};
