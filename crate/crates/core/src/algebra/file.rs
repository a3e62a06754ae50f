//! JSON algebra files.
//!
//! Dense form: `{"name": "complex", "dim": 2, "table": [[[..]..]..]}` with
//! `table[i][j][k] = A[i][j][k]`.
//!
//! Sparse form: `{"name": "complex", "dim": 2, "sparse": [[i, j, k, c], ..]}`;
//! triples not listed are zero.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{builtin, Algebra};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Environment variable with extra directories (`:`-separated) searched
/// for algebra files referenced by relative path.
pub const ALGEBRA_PATH_ENV: &str = "HYPERNET_ALGEBRA_PATH";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraFile {
    pub name: String,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparse: Option<Vec<[f64; 4]>>,
}

impl AlgebraFile {
    /// Dense description of an existing algebra.
    pub fn from_algebra(alg: &Algebra) -> Self {
        let n = alg.dim();
        let d = alg.structure().data();
        let table = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| d[(i * n + j) * n..(i * n + j + 1) * n].to_vec())
                    .collect()
            })
            .collect();
        AlgebraFile {
            name: alg.name().to_string(),
            dim: n,
            table: Some(table),
            sparse: None,
        }
    }

    pub fn into_algebra(self) -> Result<Algebra> {
        let n = self.dim;
        let structure = match (self.table, self.sparse) {
            (Some(table), None) => dense_table(n, &table)?,
            (None, Some(entries)) => sparse_table(n, &entries)?,
            (Some(_), Some(_)) => {
                return Err(Error::Algebra(
                    "give either \"table\" or \"sparse\", not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Algebra(
                    "algebra file needs a \"table\" or a \"sparse\" entry".into(),
                ))
            }
        };
        Algebra::from_table(self.name, n, structure)
    }
}

fn dense_table(n: usize, table: &[Vec<Vec<f64>>]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(n * n * n);
    let ragged = || Error::Algebra(format!("\"table\" must be nested [{n}][{n}][{n}]"));
    if table.len() != n {
        return Err(ragged());
    }
    for plane in table {
        if plane.len() != n {
            return Err(ragged());
        }
        for row in plane {
            if row.len() != n {
                return Err(ragged());
            }
            data.extend_from_slice(row);
        }
    }
    Tensor::new(vec![n, n, n], data)
}

fn sparse_table(n: usize, entries: &[[f64; 4]]) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[n, n, n]);
    let mut seen = vec![false; n * n * n];
    for (row, e) in entries.iter().enumerate() {
        let mut ix = [0usize; 3];
        for (slot, &v) in ix.iter_mut().zip(&e[..3]) {
            if v.fract() != 0.0 || v < 0.0 || v >= n as f64 {
                return Err(Error::Algebra(format!(
                    "sparse entry {row}: index {v} is not an integer in 0..{n}"
                )));
            }
            *slot = v as usize;
        }
        let off = t.offset(&ix);
        if seen[off] {
            return Err(Error::Algebra(format!(
                "sparse entry {row}: duplicate triple {ix:?}"
            )));
        }
        seen[off] = true;
        t.data_mut()[off] = e[3];
    }
    Ok(t)
}

/// Parses algebra JSON text; `origin` is only used in messages.
pub fn parse_algebra(text: &str, origin: &Path) -> Result<Algebra> {
    let file: AlgebraFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    file.into_algebra()
}

pub fn load_algebra(path: &Path) -> Result<Algebra> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_algebra(&text, path)
}

/// Resolves an algebra reference.
///
/// `builtin:<name>` always means the registry. Anything else is tried as a
/// file path (relative paths against `base`, then each directory in
/// `HYPERNET_ALGEBRA_PATH`); a bare registry name with no matching file
/// falls back to the registry.
pub fn resolve_algebra(reference: &str, base: Option<&Path>) -> Result<Algebra> {
    if let Some(name) = reference.strip_prefix("builtin:") {
        return builtin(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown built-in algebra '{name}' (known: {})",
                super::BUILTIN_NAMES.join(", ")
            ))
        });
    }
    let given = Path::new(reference);
    let mut candidates: Vec<PathBuf> = Vec::new();
    if given.is_absolute() {
        candidates.push(given.to_path_buf());
    } else {
        candidates.push(base.map_or_else(|| given.to_path_buf(), |b| b.join(given)));
        if let Some(dirs) = std::env::var_os(ALGEBRA_PATH_ENV) {
            candidates.extend(std::env::split_paths(&dirs).map(|d| d.join(given)));
        }
    }
    if let Some(found) = candidates.iter().find(|p| p.is_file()) {
        return load_algebra(found);
    }
    builtin(reference).ok_or_else(|| {
        Error::Config(format!(
            "algebra '{reference}' is neither a readable file nor a built-in name"
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_and_sparse_forms_agree_bitwise() {
        let dense = r#"{"name": "complex", "dim": 2,
            "table": [[[1, 0], [0, 1]], [[0, 1], [-1, 0]]]}"#;
        let sparse = r#"{"name": "complex", "dim": 2,
            "sparse": [[0,0,0,1], [0,1,1,1], [1,0,1,1], [1,1,0,-1]]}"#;
        let a = parse_algebra(dense, Path::new("dense")).unwrap();
        let b = parse_algebra(sparse, Path::new("sparse")).unwrap();
        let bits = |x: &Algebra| -> Vec<u64> {
            x.structure().data().iter().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a, builtin("complex").unwrap());
    }

    #[test]
    fn file_round_trip_is_bit_identical() {
        for name in super::super::BUILTIN_NAMES {
            let alg = builtin(name).unwrap();
            let text = serde_json::to_string(&AlgebraFile::from_algebra(&alg)).unwrap();
            let back = parse_algebra(&text, Path::new(name)).unwrap();
            assert_eq!(back.structure().data(), alg.structure().data());
        }
        // awkward values survive the JSON trip
        let t = Tensor::new(vec![1, 1, 1], vec![0.1 + 0.2]).unwrap();
        let odd = Algebra::from_table("odd", 1, t).unwrap();
        let text = serde_json::to_string(&AlgebraFile::from_algebra(&odd)).unwrap();
        let back = parse_algebra(&text, Path::new("odd")).unwrap();
        assert_eq!(
            back.structure().data()[0].to_bits(),
            (0.1f64 + 0.2).to_bits()
        );
    }

    #[test]
    fn malformed_files() {
        let p = Path::new("x");
        assert!(parse_algebra(r#"{"name":"a","dim":1}"#, p).is_err());
        assert!(parse_algebra(r#"{"name":"a","dim":2,"table":[[[1,0],[0,1]]]}"#, p).is_err());
        assert!(parse_algebra(r#"{"name":"a","dim":1,"sparse":[[0,0,1,1]]}"#, p).is_err());
        assert!(parse_algebra(r#"{"name":"a","dim":1,"sparse":[[0,0,0.5,1]]}"#, p).is_err());
        assert!(
            parse_algebra(r#"{"name":"a","dim":1,"sparse":[[0,0,0,1],[0,0,0,2]]}"#, p).is_err()
        );
        let err = parse_algebra("{\n \"name\": \"a\",\n \"dim\": }", p).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn resolve_prefers_builtin_prefix() {
        assert_eq!(
            resolve_algebra("builtin:quaternion", None).unwrap().dim(),
            4
        );
        assert_eq!(resolve_algebra("dual", None).unwrap().name(), "dual");
        assert!(resolve_algebra("builtin:octonion", None).is_err());
        assert!(resolve_algebra("no/such/file.json", None).is_err());
    }
}
