//! Dense row-major `f64` tensors and the handful of operations the layer
//! algorithms are written in: contraction, axis permutation, index-merging
//! reshape, concatenation, elementwise application and channels-last
//! convolution.
//!
//! A [`Tensor`] owns a flat `Vec<f64>` in row-major order together with its
//! shape. Every operation returns a new tensor; nothing aliases. Reshapes
//! that only re-index (see [`Tensor::reshape_merge`]) move the buffer
//! instead of copying it.

mod conv;
mod io;
mod ops;

use std::fmt;

pub use conv::{conv_kd, conv_kd_vjp, conv_output_shape, Padding};
pub use io::{read_tensor, write_tensor};
pub use ops::{concat, contract, contract_grad_lhs, contract_grad_rhs, inverse_permutation, stack};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Row-major strides for `shape`.
pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    let mut acc = 1usize;
    for (axis, &dim) in shape.iter().enumerate().rev() {
        strides[axis] = acc;
        acc *= dim;
    }
    strides
}

impl Tensor {
    /// Builds a tensor, checking that `data` has exactly `∏shape` entries.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// Rank-1 tensor over `values`.
    pub fn from_vec(values: Vec<f64>) -> Self {
        Tensor {
            shape: vec![values.len()],
            data: values,
        }
    }

    /// Fills a tensor by calling `f` with each multi-index in row-major order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut index = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&index));
            for axis in (0..shape.len()).rev() {
                index[axis] += 1;
                if index[axis] < shape[axis] {
                    break;
                }
                index[axis] = 0;
            }
        }
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    /// Flat offset of a multi-index. Panics when the index is out of range.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut offset = 0;
        for (axis, (&i, &dim)) in index.iter().zip(&self.shape).enumerate() {
            assert!(
                i < dim,
                "index {i} out of range for axis {axis} of size {dim}"
            );
            offset = offset * dim + i;
        }
        offset
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let offset = self.offset(index);
        self.data[offset] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} ({} elements) into {:?}",
                self.shape,
                self.data.len(),
                shape
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    /// Merges axes `p` and `p + 1` into one axis of size
    /// `shape[p] * shape[p + 1]`. Element `(.., i, j, ..)` lands at
    /// `(.., i * shape[p + 1] + j, ..)`, which in row-major layout is the
    /// same flat position, so the buffer is moved, not copied.
    pub fn reshape_merge(self, p: usize) -> Result<Self> {
        if p + 1 >= self.shape.len() {
            return Err(Error::shape(format!(
                "reshape_merge axis {} needs rank > {}, tensor has rank {}",
                p,
                p + 1,
                self.shape.len()
            )));
        }
        let mut shape = self.shape;
        let merged = shape[p] * shape[p + 1];
        shape.splice(p..p + 2, [merged]);
        Ok(Tensor {
            shape,
            data: self.data,
        })
    }

    /// Splits axis `p` into `(outer, shape[p] / outer)`; the inverse of
    /// [`Tensor::reshape_merge`].
    pub fn reshape_split(self, p: usize, outer: usize) -> Result<Self> {
        if p >= self.shape.len() || outer == 0 || !self.shape[p].is_multiple_of(outer) {
            return Err(Error::shape(format!(
                "cannot split axis {} of {:?} into {} parts",
                p, self.shape, outer
            )));
        }
        let mut shape = self.shape;
        let inner = shape[p] / outer;
        shape.splice(p..=p, [outer, inner]);
        Ok(Tensor {
            shape,
            data: self.data,
        })
    }

    /// Applies `f` to every entry (the broadcast of a scalar map).
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "elementwise shapes differ: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Elementwise sum. `other` may also be a trailing-suffix shape of
    /// `self`, in which case it is repeated along the leading axes (the bias
    /// rule).
    pub fn add(&self, other: &Tensor) -> Result<Self> {
        if self.shape == other.shape {
            return self.zip_map(other, |a, b| a + b);
        }
        let r = other.rank();
        if r > self.rank() || self.shape[self.rank() - r..] != other.shape[..] {
            return Err(Error::shape(format!(
                "cannot add {:?} to {:?}: not equal and not a trailing suffix",
                other.shape, self.shape
            )));
        }
        let width = other.len();
        let mut data = self.data.clone();
        if width > 0 {
            for chunk in data.chunks_mut(width) {
                for (d, &b) in chunk.iter_mut().zip(&other.data) {
                    *d += b;
                }
            }
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "elementwise shapes differ: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Sums over the leading axes so that the result has the trailing
    /// `keep` axes; the adjoint of the suffix broadcast in [`Tensor::add`].
    pub fn sum_leading(&self, keep: usize) -> Result<Self> {
        if keep > self.rank() {
            return Err(Error::shape(format!(
                "cannot keep {} axes of a rank-{} tensor",
                keep,
                self.rank()
            )));
        }
        let shape = self.shape[self.rank() - keep..].to_vec();
        let width: usize = shape.iter().product();
        let mut data = vec![0.0; width];
        if width > 0 {
            for chunk in self.data.chunks(width) {
                for (d, &v) in data.iter_mut().zip(chunk) {
                    *d += v;
                }
            }
        }
        Ok(Tensor { shape, data })
    }

    /// Permutes axes. `perm[src] = dst` sends input axis `src` to output
    /// position `dst`, so `out.shape()[perm[s]] == self.shape()[s]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        ops::permute(self, perm)
    }

    /// Moves axis `from` to position `to`, keeping the other axes in order.
    pub fn move_axis(&self, from: usize, to: usize) -> Result<Self> {
        let rank = self.rank();
        if from >= rank || to >= rank {
            return Err(Error::shape(format!(
                "move_axis {from} -> {to} out of range for rank {rank}"
            )));
        }
        self.permute(&ops::move_axis_perm(rank, from, to))
    }

    /// Contiguous sub-range `[start, start + len)` of `axis`.
    pub fn slice_axis(&self, axis: usize, start: usize, len: usize) -> Result<Self> {
        ops::slice_axis(self, axis, start, len)
    }

    /// The sub-tensor at position `index` of `axis`, with that axis removed.
    pub fn index_axis(&self, axis: usize, index: usize) -> Result<Self> {
        let mut sliced = self.slice_axis(axis, index, 1)?;
        sliced.shape.remove(axis);
        Ok(sliced)
    }

    /// Largest absolute entry, zero for empty tensors.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?} {:?}", self.shape, self.data)
    }
}

/// Text form: the shape on the first line, then nested brackets.
impl fmt::Display for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn nest(f: &mut fmt::Formatter<'_>, shape: &[usize], data: &[f64]) -> fmt::Result {
            match shape.split_first() {
                None => write!(f, "{:?}", data[0]),
                Some((&n, rest)) => {
                    let step: usize = rest.iter().product();
                    write!(f, "[")?;
                    for i in 0..n {
                        if i > 0 {
                            write!(f, ", ")?;
                        }
                        nest(f, rest, &data[i * step..(i + 1) * step])?;
                    }
                    write!(f, "]")
                }
            }
        }
        writeln!(f, "shape {:?}", self.shape)?;
        nest(f, &self.shape, &self.data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_is_rank_zero_with_one_element() {
        let s = Tensor::scalar(2.5);
        assert_eq!(s.rank(), 0);
        assert_eq!(s.len(), 1);
        assert_eq!(s.get(&[]), 2.5);
    }

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    #[allow(clippy::identity_op)]
    fn reshape_merge_index_example() {
        let t = Tensor::from_fn(&[2, 3, 4], |ix| (ix[0] * 100 + ix[1] * 10 + ix[2]) as f64);
        let m = t.clone().reshape_merge(0).unwrap();
        assert_eq!(m.shape(), &[6, 4]);
        for k in 0..4 {
            assert_eq!(m.get(&[1 * 3 + 2, k]), t.get(&[1, 2, k]));
        }
    }

    #[test]
    fn reshape_merge_does_not_move_data() {
        let t = Tensor::from_fn(&[2, 3, 4], |ix| ix.iter().sum::<usize>() as f64);
        let before = t.data().as_ptr();
        let flat = t.data().to_vec();
        let m = t.reshape_merge(1).unwrap();
        assert_eq!(m.data().as_ptr(), before);
        assert_eq!(m.data(), &flat[..]);
        assert_eq!(m.shape(), &[2, 12]);
    }

    #[test]
    fn reshape_merge_trailing_unit_axis_is_identity_on_data() {
        let t = Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let m = t.reshape_merge(0).unwrap();
        assert_eq!(m.shape(), &[3]);
        assert_eq!(m.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn reshape_merge_rejects_last_axis() {
        let t = Tensor::zeros(&[2, 3]);
        assert!(t.reshape_merge(1).is_err());
    }

    #[test]
    fn bias_add_broadcasts_over_leading_axes() {
        let x = Tensor::from_fn(&[2, 3], |ix| (ix[0] * 3 + ix[1]) as f64);
        let b = Tensor::from_vec(vec![10.0, 20.0, 30.0]);
        let y = x.add(&b).unwrap();
        assert_eq!(y.data(), &[10.0, 21.0, 32.0, 13.0, 24.0, 35.0]);
        assert!(x.add(&Tensor::from_vec(vec![1.0, 2.0])).is_err());
        assert_eq!(x.add(&Tensor::zeros(&[2, 3])).unwrap(), x);
    }

    #[test]
    fn map_applies_scalar_functions() {
        let sig = Tensor::new(vec![1, 1], vec![0.0])
            .unwrap()
            .map(|v| 1.0 / (1.0 + (-v).exp()));
        assert_eq!(sig.data(), &[0.5]);
        let relu = Tensor::from_vec(vec![-1.0, 2.0]).map(|v| v.max(0.0));
        assert_eq!(relu.data(), &[0.0, 2.0]);
        let x = Tensor::from_vec(vec![1.5, -2.0]);
        assert_eq!(x.map(|v| v), x);
    }

    #[test]
    fn sum_leading_is_adjoint_of_bias_broadcast() {
        let g = Tensor::from_fn(&[2, 2, 3], |ix| (ix[0] + ix[1] * 2 + ix[2] * 5) as f64);
        let s = g.sum_leading(1).unwrap();
        assert_eq!(s.shape(), &[3]);
        assert_eq!(s.data(), &[6.0, 26.0, 46.0]);
    }

    #[test]
    fn display_shows_shape_and_nesting() {
        let t = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.to_string(), "shape [2, 2]\n[[1.0, 2.0], [3.0, 4.0]]");
    }
}
