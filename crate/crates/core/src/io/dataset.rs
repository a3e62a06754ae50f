//! CSV datasets.
//!
//! A header row is required. Cells use `.` as the decimal point and may use
//! scientific notation (`1e-3`); anything else, including `1,5`, `nan` and
//! `inf`, is rejected with its row and column.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Tensor,
    targets: Tensor,
}

impl Dataset {
    /// `features` is `(rows, ..)`, `targets` is `(rows, width)`; both finite.
    pub fn new(features: Tensor, targets: Tensor) -> Result<Self> {
        if features.rank() < 2 || targets.rank() != 2 {
            return Err(Error::shape(format!(
                "dataset needs features (rows, ..) and targets (rows, width), got {:?} and {:?}",
                features.shape(),
                targets.shape()
            )));
        }
        if features.shape()[0] != targets.shape()[0] {
            return Err(Error::shape(format!(
                "{} feature rows but {} target rows",
                features.shape()[0],
                targets.shape()[0]
            )));
        }
        if !features.is_finite() || !targets.is_finite() {
            return Err(Error::NonFinite("dataset entries must be finite".into()));
        }
        Ok(Dataset { features, targets })
    }

    pub fn rows(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn targets(&self) -> &Tensor {
        &self.targets
    }

    /// Feature shape without the row axis.
    pub fn feature_shape(&self) -> &[usize] {
        &self.features.shape()[1..]
    }

    pub fn target_width(&self) -> usize {
        self.targets.shape()[1]
    }

    /// Reinterprets each feature row as a tensor of shape `shape`, e.g.
    /// `(n_1, .., n_k, channels)` for convolution inputs. Row-major, so a
    /// flattened row lists channels fastest.
    pub fn reshape_features(self, shape: &[usize]) -> Result<Self> {
        let mut full = vec![self.rows()];
        full.extend_from_slice(shape);
        Ok(Dataset {
            features: self.features.reshape(&full)?,
            targets: self.targets,
        })
    }

    /// The given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<(Tensor, Tensor)> {
        Ok((
            take_rows(&self.features, rows)?,
            take_rows(&self.targets, rows)?,
        ))
    }
}

fn take_rows(t: &Tensor, rows: &[usize]) -> Result<Tensor> {
    let n = t.shape()[0];
    let width = t.len().checked_div(n).unwrap_or(0);
    let mut data = Vec::with_capacity(rows.len() * width);
    for &r in rows {
        if r >= n {
            return Err(Error::shape(format!("row {r} out of range for {n} rows")));
        }
        data.extend_from_slice(&t.data()[r * width..(r + 1) * width]);
    }
    let mut shape = t.shape().to_vec();
    shape[0] = rows.len();
    Tensor::new(shape, data)
}

/// Which CSV columns feed the model. Empty lists fall back to every
/// column whose name starts with `x` (features) or `y` (targets), in file
/// order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBinding {
    #[serde(default)]
    pub features: Vec<String>,
    #[serde(default)]
    pub targets: Vec<String>,
    /// Per-row feature shape; required when the model input has more than
    /// one axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reshape_to: Option<Vec<usize>>,
}

impl DataBinding {
    /// Loads `path` and shapes the features for a model whose input shape
    /// (without batch) is `input_shape`.
    pub fn load(&self, path: &Path, input_shape: &[usize]) -> Result<Dataset> {
        let header = read_header(path)?;
        let pick = |given: &[String], prefix: char| -> Vec<String> {
            if given.is_empty() {
                header
                    .iter()
                    .filter(|h| h.starts_with(prefix))
                    .cloned()
                    .collect()
            } else {
                given.to_vec()
            }
        };
        let features = pick(&self.features, 'x');
        let targets = pick(&self.targets, 'y');
        let data = load_dataset_csv(path, &features, &targets)?;
        let shape = match &self.reshape_to {
            Some(s) => s.clone(),
            None if input_shape.len() == 1 => input_shape.to_vec(),
            None => {
                return Err(Error::Config(format!(
                    "model input {input_shape:?} has several axes; give \"reshape_to\""
                )))
            }
        };
        if shape != input_shape {
            return Err(Error::Config(format!(
                "reshape_to {shape:?} does not match model input {input_shape:?}"
            )));
        }
        data.reshape_features(&shape).map_err(|e| {
            Error::Config(format!(
                "{}: cannot shape {} feature columns as {shape:?}: {e}",
                path.display(),
                features.len()
            ))
        })
    }
}

fn parse_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn read_header(path: &Path) -> Result<Vec<String>> {
    let mut reader = open(path)?;
    let header = reader
        .headers()
        .map_err(|e| parse_error(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect::<Vec<_>>();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(parse_error(path, "empty file: a header row is required"));
    }
    Ok(header)
}

fn parse_cell(text: &str) -> Option<f64> {
    let ok = !text.is_empty()
        && text
            .bytes()
            .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'e' | b'E' | b'+' | b'-'));
    if !ok {
        return None;
    }
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads the named feature and target columns, preserving row order.
/// Features come back as `(rows, features.len())`, targets as
/// `(rows, targets.len())`.
pub fn load_dataset_csv(path: &Path, features: &[String], targets: &[String]) -> Result<Dataset> {
    let header = read_header(path)?;
    if features.is_empty() || targets.is_empty() {
        return Err(Error::Config(format!(
            "{}: need at least one feature and one target column (header: {})",
            path.display(),
            header.join(",")
        )));
    }
    let locate = |name: &String| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("{}: no column named '{name}'", path.display())))
    };
    let fcols = features.iter().map(locate).collect::<Result<Vec<_>>>()?;
    let tcols = targets.iter().map(locate).collect::<Result<Vec<_>>>()?;

    let mut reader = open(path)?;
    let mut fdata = Vec::new();
    let mut tdata = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        // Line numbers count the header as line 1.
        let line = i + 2;
        let record = record.map_err(|e| parse_error(path, format!("line {line}: {e}")))?;
        let cell = |c: usize| -> Result<f64> {
            let text = record.get(c).unwrap_or("");
            parse_cell(text).ok_or_else(|| {
                parse_error(
                    path,
                    format!(
                        "line {line}, column '{}': '{text}' is not a finite number",
                        header[c]
                    ),
                )
            })
        };
        for &c in &fcols {
            fdata.push(cell(c)?);
        }
        for &c in &tcols {
            tdata.push(cell(c)?);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_error(path, "no data rows after the header"));
    }
    Dataset::new(
        Tensor::new(vec![rows, fcols.len()], fdata)?,
        Tensor::new(vec![rows, tcols.len()], tdata)?,
    )
}
