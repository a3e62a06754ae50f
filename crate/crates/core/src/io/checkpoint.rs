//! Checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `HNCK` |
//! | 4     | format version (`u32`) |
//! | 8     | header length `h` (`u64`) |
//! | h     | JSON header: model spec, one inline algebra table per layer, loss, data binding |
//! | 8     | parameter tensor count (`u64`) |
//! | ..    | parameter tensors in the binary tensor format, in [`Model::params`] order |
//!
//! The algebra tables are stored inline so a checkpoint loads without the
//! files or registry entries it was trained from.

use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{DataBinding, ModelSpec};
use crate::algebra::AlgebraFile;
use crate::error::{Error, Result};
use crate::layers::Model;
use crate::tensor::{read_tensor, write_tensor};
use crate::train::Loss;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"HNCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Upper bound on the header size accepted when reading.
const MAX_HEADER: u64 = 64 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub model: Model,
    pub loss: Loss,
    pub data: DataBinding,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelSpec,
    algebras: Vec<AlgebraFile>,
    loss: Loss,
    data: DataBinding,
}

fn algebra_files(model: &Model) -> Vec<AlgebraFile> {
    model
        .layers()
        .iter()
        .map(|l| AlgebraFile::from_algebra(l.algebra()))
        .collect()
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            model: self.spec.clone(),
            algebras: algebra_files(&self.model),
            loss: self.loss,
            data: self.data.clone(),
        };
        let json = serde_json::to_vec(&header)
            .map_err(|e| Error::Config(format!("serializing checkpoint header: {e}")))?;
        let params = self.model.params();
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            write_tensor(&mut out, p).expect("writing to a Vec cannot fail");
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut input = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut input, &mut magic, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Corrupt("not a checkpoint (bad magic)".into()));
        }
        let mut version = [0u8; 4];
        read_exact(&mut input, &mut version, "version")?;
        let version = u32::from_le_bytes(version);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header_len = read_u64(&mut input, "header length")?;
        if header_len > MAX_HEADER || header_len > input.len() as u64 {
            return Err(Error::Corrupt(format!(
                "header length {header_len} exceeds the {} bytes left",
                input.len()
            )));
        }
        let (json, rest) = input.split_at(header_len as usize);
        input = rest;
        let header: Header = serde_json::from_slice(json)
            .map_err(|e| Error::Corrupt(format!("checkpoint header: {e}")))?;
        let algebras = header
            .algebras
            .into_iter()
            .map(|a| a.into_algebra().map(Arc::new))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Corrupt(format!("checkpoint algebra: {e}")))?;
        let mut model = header
            .model
            .build_with(&algebras)
            .map_err(|e| Error::Corrupt(format!("checkpoint model: {e}")))?;

        let count = read_u64(&mut input, "parameter count")?;
        let mut slots = model.params_mut();
        if count != slots.len() as u64 {
            return Err(Error::Corrupt(format!(
                "checkpoint has {count} parameter tensors, model needs {}",
                slots.len()
            )));
        }
        for (i, slot) in slots.iter_mut().enumerate() {
            let t = read_tensor(&mut input)?;
            if t.shape() != slot.shape() {
                return Err(Error::Corrupt(format!(
                    "parameter {i} has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            **slot = t;
        }
        if !input.is_empty() {
            return Err(Error::Corrupt(format!(
                "{} trailing bytes after the last parameter",
                input.len()
            )));
        }
        Ok(Checkpoint {
            spec: header.model,
            model,
            loss: header.loss,
            data: header.data,
        })
    }

    /// Writes to a sibling temporary file and renames it into place, so an
    /// interrupted save never leaves a half-written checkpoint at `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".partial");
        let tmp = std::path::PathBuf::from(tmp);
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Corrupt(msg) => Error::Corrupt(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn read_exact(input: &mut &[u8], buf: &mut [u8], what: &str) -> Result<()> {
    input
        .read_exact(buf)
        .map_err(|_| Error::Corrupt(format!("truncated checkpoint {what}")))
}

fn read_u64(input: &mut &[u8], what: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(input, &mut buf, what)?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::InitScheme;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let spec = ModelSpec::parse(
            r#"{"input_shape": [4, 2], "layers": [
                {"type": "hyperconv1d", "algebra": "complex", "in": 1, "filters": 2,
                 "kernel_size": [2], "padding": "same", "activation": "tanh"},
                {"type": "hyperdense", "algebra": "builtin:quaternion", "in": 4, "units": 1}]}"#,
            Path::new("inline.json"),
        )
        .unwrap();
        let mut model = spec.build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        model
            .initialize(&[InitScheme::Normal { std: 1.0 }; 2], &mut rng)
            .unwrap();
        for p in model.params_mut() {
            for v in p.data_mut() {
                *v += 0.125;
            }
        }
        Checkpoint {
            spec,
            model,
            loss: Loss::Mse,
            data: DataBinding::default(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        for (a, b) in ck.model.params().iter().zip(back.model.params()) {
            let bits = |t: &crate::tensor::Tensor| {
                t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            };
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(back.spec.layers, ck.spec.layers);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn every_truncation_is_detected() {
        let bytes = sample().to_bytes().unwrap();
        for cut in 0..bytes.len() {
            match Checkpoint::from_bytes(&bytes[..cut]) {
                Err(Error::Corrupt(_)) => {}
                other => panic!("cut at {cut}: {other:?}"),
            }
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(
            Checkpoint::from_bytes(&longer),
            Err(Error::Corrupt(_))
        ));
    }

    #[test]
    fn version_and_magic_are_checked() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[4] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Version {
                found: 9,
                expected: 1
            })
        ));
        bytes[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Corrupt(_))
        ));
    }

    #[test]
    fn save_and_load_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap().model, ck.model);
        assert!(!dir.path().join("model.ckpt.partial").exists());
    }
}
