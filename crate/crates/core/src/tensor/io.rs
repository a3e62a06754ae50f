//! Binary tensor container: `rank` as a little-endian `u64`, then each
//! dimension as a little-endian `u64`, then the `∏shape` entries as
//! little-endian `f64` in row-major order. Nothing else.

use std::io::{Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

/// Upper bound on rank accepted when reading, so a corrupt header cannot
/// trigger a huge allocation.
const MAX_RANK: u64 = 32;

pub fn write_tensor<W: Write>(out: &mut W, tensor: &Tensor) -> std::io::Result<()> {
    out.write_all(&(tensor.rank() as u64).to_le_bytes())?;
    for &dim in tensor.shape() {
        out.write_all(&(dim as u64).to_le_bytes())?;
    }
    for &v in tensor.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(input: &mut R, what: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    input
        .read_exact(&mut buf)
        .map_err(|e| Error::Corrupt(format!("truncated tensor {what}: {e}")))?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_tensor<R: Read>(input: &mut R) -> Result<Tensor> {
    let rank = read_u64(input, "rank")?;
    if rank > MAX_RANK {
        return Err(Error::Corrupt(format!("implausible tensor rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    let mut len: usize = 1;
    for _ in 0..rank {
        let dim = usize::try_from(read_u64(input, "shape")?)
            .map_err(|_| Error::Corrupt("tensor dimension overflows usize".into()))?;
        len = len
            .checked_mul(dim)
            .ok_or_else(|| Error::Corrupt("tensor size overflows usize".into()))?;
        shape.push(dim);
    }
    let nbytes = len
        .checked_mul(8)
        .ok_or_else(|| Error::Corrupt("tensor size overflows usize".into()))?;
    let mut bytes = Vec::new();
    input
        .take(nbytes as u64)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Corrupt(format!("reading tensor payload: {e}")))?;
    if bytes.len() != nbytes {
        return Err(Error::Corrupt(format!(
            "tensor payload truncated: expected {} bytes, found {}",
            nbytes,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Tensor::new(shape, data)
}

impl Tensor {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(8 * (1 + self.rank() + self.len()));
        write_tensor(&mut buf, self).expect("writing to a Vec cannot fail");
        buf
    }

    /// Parses exactly one tensor; trailing bytes are an error.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let t = read_tensor(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(Error::Corrupt(format!(
                "{} trailing bytes after tensor",
                cursor.len()
            )));
        }
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
