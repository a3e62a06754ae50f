use std::borrow::Cow;

use super::Tensor;
use crate::error::{Error, Result};

fn check_permutation(perm: &[usize], rank: usize) -> Result<Vec<usize>> {
    if perm.len() != rank {
        return Err(Error::shape(format!(
            "permutation {perm:?} has length {}, tensor rank is {rank}",
            perm.len()
        )));
    }
    let mut inverse = vec![usize::MAX; rank];
    for (src, &dst) in perm.iter().enumerate() {
        if dst >= rank || inverse[dst] != usize::MAX {
            return Err(Error::shape(format!(
                "{perm:?} is not a permutation of 0..{rank}"
            )));
        }
        inverse[dst] = src;
    }
    Ok(inverse)
}

/// The inverse of a `src -> dst` permutation, or an error if `perm` is not
/// a bijection on `0..perm.len()`.
pub fn inverse_permutation(perm: &[usize]) -> Result<Vec<usize>> {
    check_permutation(perm, perm.len())
}

pub(super) fn move_axis_perm(rank: usize, from: usize, to: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rank).filter(|&a| a != from).collect();
    order.insert(to, from);
    // order[dst] = src; flip it into src -> dst form
    let mut perm = vec![0; rank];
    for (dst, &src) in order.iter().enumerate() {
        perm[src] = dst;
    }
    perm
}

pub(super) fn permute(a: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let inverse = check_permutation(perm, a.rank())?;
    if perm.iter().enumerate().all(|(s, &d)| s == d) {
        return Ok(a.clone());
    }
    let in_strides = a.strides();
    let out_shape: Vec<usize> = inverse.iter().map(|&s| a.shape[s]).collect();
    let src_strides: Vec<usize> = inverse.iter().map(|&s| in_strides[s]).collect();
    let len = a.len();
    let mut data = Vec::with_capacity(len);
    let mut index = vec![0usize; out_shape.len()];
    let mut src = 0usize;
    for _ in 0..len {
        data.push(a.data[src]);
        for axis in (0..out_shape.len()).rev() {
            index[axis] += 1;
            src += src_strides[axis];
            if index[axis] < out_shape[axis] {
                break;
            }
            src -= src_strides[axis] * out_shape[axis];
            index[axis] = 0;
        }
    }
    Ok(Tensor {
        shape: out_shape,
        data,
    })
}

/// `c[m, j] = Σ_i a[m, i] * b[i, j]`, summed in ascending `i`.
fn matmul(a: &[f64], b: &[f64], rows: usize, inner: usize, cols: usize) -> Vec<f64> {
    let mut c = vec![0.0; rows * cols];
    for m in 0..rows {
        let out = &mut c[m * cols..(m + 1) * cols];
        for i in 0..inner {
            let av = a[m * inner + i];
            let brow = &b[i * cols..(i + 1) * cols];
            for (o, &bv) in out.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    c
}

/// `c[m, i] = Σ_j g[m, j] * b[i, j]`.
fn matmul_bt(g: &[f64], b: &[f64], rows: usize, inner: usize, cols: usize) -> Vec<f64> {
    let mut c = vec![0.0; rows * inner];
    for m in 0..rows {
        let grow = &g[m * cols..(m + 1) * cols];
        for i in 0..inner {
            let brow = &b[i * cols..(i + 1) * cols];
            c[m * inner + i] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    c
}

/// `c[i, j] = Σ_m a[m, i] * g[m, j]`.
fn matmul_at(a: &[f64], g: &[f64], rows: usize, inner: usize, cols: usize) -> Vec<f64> {
    let mut c = vec![0.0; inner * cols];
    for m in 0..rows {
        let grow = &g[m * cols..(m + 1) * cols];
        for i in 0..inner {
            let av = a[m * inner + i];
            let out = &mut c[i * cols..(i + 1) * cols];
            for (o, &gv) in out.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    c
}

fn check_contract(a: &[usize], b: &[usize], p: usize, q: usize) -> Result<()> {
    if p >= a.len() || q >= b.len() {
        return Err(Error::shape(format!(
            "contraction axes ({p}, {q}) out of range for ranks ({}, {})",
            a.len(),
            b.len()
        )));
    }
    if a[p] != b[q] {
        return Err(Error::shape(format!(
            "contraction dimension mismatch: axis {p} of {a:?} has {} entries, axis {q} of {b:?} has {}",
            a[p], b[q]
        )));
    }
    Ok(())
}

fn remaining(shape: &[usize], axis: usize) -> Vec<usize> {
    shape
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != axis)
        .map(|(_, &d)| d)
        .collect()
}

/// `t` with axis `from` moved to `to`, borrowed when that is a no-op.
fn moved(t: &Tensor, from: usize, to: usize) -> Result<Cow<'_, Tensor>> {
    if from == to {
        Ok(Cow::Borrowed(t))
    } else {
        t.move_axis(from, to).map(Cow::Owned)
    }
}

/// Contracts axis `p` of `a` against axis `q` of `b`.
///
/// The result has the remaining axes of `a` followed by the remaining axes
/// of `b`. Internally `a` is arranged as an `M × n` matrix and `b` as
/// `n × N`; the sum over the shared index runs in ascending order.
pub fn contract(a: &Tensor, b: &Tensor, p: usize, q: usize) -> Result<Tensor> {
    check_contract(&a.shape, &b.shape, p, q)?;
    let n = a.shape[p];
    let a_rest = remaining(&a.shape, p);
    let b_rest = remaining(&b.shape, q);
    let rows: usize = a_rest.iter().product();
    let cols: usize = b_rest.iter().product();
    let am = moved(a, p, a.rank() - 1)?;
    let bm = moved(b, q, 0)?;
    let data = matmul(&am.data, &bm.data, rows, n, cols);
    let mut shape = a_rest;
    shape.extend(b_rest);
    Tensor::new(shape, data)
}

fn check_grad_shape(a: &[usize], b: &[usize], p: usize, q: usize, grad: &Tensor) -> Result<()> {
    check_contract(a, b, p, q)?;
    let mut expected = remaining(a, p);
    expected.extend(remaining(b, q));
    if grad.shape != expected {
        return Err(Error::shape(format!(
            "upstream gradient has shape {:?}, contraction output is {:?}",
            grad.shape, expected
        )));
    }
    Ok(())
}

/// Gradient of `contract(a, b, p, q)` with respect to `a`, given the
/// upstream gradient `grad` (shape of the contraction output).
pub fn contract_grad_lhs(
    a_shape: &[usize],
    b: &Tensor,
    p: usize,
    q: usize,
    grad: &Tensor,
) -> Result<Tensor> {
    check_grad_shape(a_shape, &b.shape, p, q, grad)?;
    let n = a_shape[p];
    let rows: usize = remaining(a_shape, p).iter().product();
    let cols: usize = remaining(&b.shape, q).iter().product();
    let bm = moved(b, q, 0)?;
    let data = matmul_bt(&grad.data, &bm.data, rows, n, cols);
    let mut shape = remaining(a_shape, p);
    shape.push(n);
    Tensor::new(shape, data)?.move_axis(a_shape.len() - 1, p)
}

/// Gradient of `contract(a, b, p, q)` with respect to `b`.
pub fn contract_grad_rhs(
    a: &Tensor,
    b_shape: &[usize],
    p: usize,
    q: usize,
    grad: &Tensor,
) -> Result<Tensor> {
    check_grad_shape(&a.shape, b_shape, p, q, grad)?;
    let n = b_shape[q];
    let rows: usize = remaining(&a.shape, p).iter().product();
    let cols: usize = remaining(b_shape, q).iter().product();
    let am = moved(a, p, a.rank() - 1)?;
    let data = matmul_at(&am.data, &grad.data, rows, n, cols);
    let mut shape = vec![n];
    shape.extend(remaining(b_shape, q));
    Tensor::new(shape, data)?.move_axis(0, q)
}

/// Joins tensors along `axis`. Shapes must agree everywhere except `axis`,
/// where sizes may differ; pieces appear in list order.
pub fn concat(tensors: &[Tensor], axis: usize) -> Result<Tensor> {
    let first = tensors
        .first()
        .ok_or_else(|| Error::shape("cannot concatenate an empty list"))?;
    let rank = first.rank();
    if axis >= rank {
        return Err(Error::shape(format!(
            "concat axis {axis} out of range for rank {rank}"
        )));
    }
    for t in tensors {
        let compatible = t.rank() == rank
            && t.shape
                .iter()
                .zip(&first.shape)
                .enumerate()
                .all(|(i, (a, b))| i == axis || a == b);
        if !compatible {
            return Err(Error::shape(format!(
                "cannot concatenate {:?} with {:?} along axis {axis}",
                t.shape, first.shape
            )));
        }
    }
    let outer: usize = first.shape[..axis].iter().product();
    let inner: usize = first.shape[axis + 1..].iter().product();
    let mut shape = first.shape.clone();
    shape[axis] = tensors.iter().map(|t| t.shape[axis]).sum();
    let mut data = Vec::with_capacity(shape.iter().product());
    for o in 0..outer {
        for t in tensors {
            let chunk = t.shape[axis] * inner;
            data.extend_from_slice(&t.data[o * chunk..(o + 1) * chunk]);
        }
    }
    Tensor::new(shape, data)
}

/// Stacks equally shaped tensors along a new leading axis.
pub fn stack(tensors: &[Tensor]) -> Result<Tensor> {
    let first = tensors
        .first()
        .ok_or_else(|| Error::shape("cannot stack an empty list"))?;
    let mut data = Vec::with_capacity(first.len() * tensors.len());
    for t in tensors {
        if t.shape != first.shape {
            return Err(Error::shape(format!(
                "cannot stack {:?} with {:?}",
                t.shape, first.shape
            )));
        }
        data.extend_from_slice(&t.data);
    }
    let mut shape = vec![tensors.len()];
    shape.extend_from_slice(&first.shape);
    Tensor::new(shape, data)
}

pub(super) fn slice_axis(a: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    if axis >= a.rank() || start + len > a.shape[axis] {
        return Err(Error::shape(format!(
            "slice [{start}, {}) of axis {axis} out of range for {:?}",
            start + len,
            a.shape
        )));
    }
    let outer: usize = a.shape[..axis].iter().product();
    let inner: usize = a.shape[axis + 1..].iter().product();
    let full = a.shape[axis] * inner;
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = o * full + start * inner;
        data.extend_from_slice(&a.data[base..base + len * inner]);
    }
    let mut shape = a.shape.clone();
    shape[axis] = len;
    Tensor::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(shape: &[usize]) -> Tensor {
        let mut n = 0.0;
        Tensor::from_fn(shape, |_| {
            n += 1.0;
            n
        })
    }

    #[test]
    fn contract_matrix_product() {
        let a = seq(&[2, 3]);
        let b = seq(&[3, 4]);
        let c = contract(&a, &b, 1, 0).unwrap();
        assert_eq!(c.shape(), &[2, 4]);
        // row 0 of a = [1,2,3]; column 0 of b = [1,5,9]
        assert_eq!(c.get(&[0, 0]), 1.0 + 10.0 + 27.0);
    }

    #[test]
    fn contract_vectors_gives_rank_zero() {
        let a = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        let b = Tensor::from_vec(vec![4.0, 5.0, 6.0]);
        let c = contract(&a, &b, 0, 0).unwrap();
        assert_eq!(c.rank(), 0);
        assert_eq!(c.get(&[]), 32.0);
    }

    #[test]
    fn contract_errors() {
        let a = seq(&[2, 3]);
        let b = seq(&[2, 3]);
        assert!(contract(&a, &b, 1, 0).is_err());
        assert!(contract(&a, &b, 2, 0).is_err());
    }

    #[test]
    fn permute_swap_is_transpose() {
        let a = seq(&[2, 3]);
        let t = a.permute(&[1, 0]).unwrap();
        assert_eq!(t.shape(), &[3, 2]);
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(t.get(&[j, i]), a.get(&[i, j]));
            }
        }
    }

    #[test]
    fn permute_rejects_non_bijection() {
        let a = seq(&[2, 3, 4]);
        assert!(a.permute(&[0, 0, 1]).is_err());
        assert!(a.permute(&[0, 1]).is_err());
        assert!(a.permute(&[0, 1, 3]).is_err());
    }

    #[test]
    fn move_axis_places_axis_at_target() {
        let a = seq(&[2, 3, 4, 5]);
        let m = a.move_axis(0, 2).unwrap();
        assert_eq!(m.shape(), &[3, 4, 2, 5]);
        assert_eq!(m.get(&[1, 3, 1, 4]), a.get(&[1, 1, 3, 4]));
    }

    #[test]
    fn concat_along_axis() {
        let a = seq(&[2, 3]);
        let b = seq(&[2, 3]).scale(10.0);
        let c = concat(&[a.clone(), b.clone()], 1).unwrap();
        assert_eq!(c.shape(), &[2, 6]);
        assert_eq!(c.slice_axis(1, 0, 3).unwrap(), a);
        assert_eq!(c.slice_axis(1, 3, 3).unwrap(), b);
        assert_eq!(concat(std::slice::from_ref(&a), 0).unwrap(), a);
        assert!(concat(&[], 0).is_err());
        assert!(concat(&[a, seq(&[3, 3])], 1).is_err());
    }

    #[test]
    fn concat_allows_ragged_axis() {
        let a = seq(&[2, 1]);
        let b = seq(&[2, 3]);
        let c = concat(&[a, b], 1).unwrap();
        assert_eq!(c.shape(), &[2, 4]);
        assert_eq!(c.data(), &[1.0, 1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn index_axis_drops_axis() {
        let a = seq(&[2, 3, 4]);
        let s = a.index_axis(1, 2).unwrap();
        assert_eq!(s.shape(), &[2, 4]);
        assert_eq!(s.get(&[1, 3]), a.get(&[1, 2, 3]));
    }

    #[test]
    fn stack_then_index_recovers() {
        let a = seq(&[2, 2]);
        let b = a.scale(-1.0);
        let s = stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), &[2, 2, 2]);
        assert_eq!(s.index_axis(0, 1).unwrap(), b);
    }
}
