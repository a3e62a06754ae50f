//! Finite-dimensional real algebras given by their structure tensor.
//!
//! An algebra of dimension `n` is stored as an `(n, n, n)` tensor `A` where
//! `A[i][j][k]` is the coefficient of `e_k` in the product `e_i · e_j`.
//! Multiplication of general elements is the bilinear contraction
//! `(x · y)_k = Σ_ij A[i][j][k] x_i y_j`, and every layer in this crate does
//! its algebra arithmetic through that tensor.
//!
//! By convention `e_0` is the multiplicative identity. Tables that break the
//! convention are still accepted; the violation is recorded as a diagnostic.

mod file;
mod registry;

use serde::Serialize;

pub use file::{load_algebra, parse_algebra, resolve_algebra, AlgebraFile, ALGEBRA_PATH_ENV};
pub use registry::{builtin, BUILTIN_NAMES};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default relative threshold for the singular-value rank test.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Algebra {
    name: String,
    dim: usize,
    structure: Tensor,
    unit_violation: f64,
}

/// Outcome of a pass/fail property test on the structure tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub holds: bool,
    pub max_violation: f64,
    /// Basis indices where the largest violation was found.
    pub worst: Option<[usize; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Nondegeneracy {
    pub left: bool,
    pub right: bool,
    pub left_rank: usize,
    pub right_rank: usize,
}

/// Everything [`Algebra::report`] finds out about an algebra.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgebraReport {
    pub name: String,
    pub dim: usize,
    pub tol: f64,
    pub is_unital: bool,
    pub unit_violation: f64,
    pub is_commutative: bool,
    pub commutative_violation: f64,
    pub is_associative: bool,
    pub associative_violation: f64,
    pub is_left_nondegenerate: bool,
    pub is_right_nondegenerate: bool,
    pub left_rank: usize,
    pub right_rank: usize,
}

impl AlgebraReport {
    /// Unital and non-degenerate on both sides: what the layers and the
    /// approximation results rely on.
    pub fn is_usable(&self) -> bool {
        self.is_unital && self.is_left_nondegenerate && self.is_right_nondegenerate
    }
}

impl Algebra {
    /// Builds an algebra from an `(dim, dim, dim)` multiplication table,
    /// copied verbatim.
    pub fn from_table(name: impl Into<String>, dim: usize, table: Tensor) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Algebra("dimension must be at least 1".into()));
        }
        if table.shape() != [dim, dim, dim] {
            return Err(Error::Algebra(format!(
                "table has shape {:?}, expected [{dim}, {dim}, {dim}]",
                table.shape()
            )));
        }
        if !table.is_finite() {
            return Err(Error::Algebra("table contains non-finite entries".into()));
        }
        let unit_violation = unit_violation(&table, dim);
        Ok(Algebra {
            name: name.into(),
            dim,
            structure: table,
            unit_violation,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn structure(&self) -> &Tensor {
        &self.structure
    }

    /// Largest deviation of row 0 and column 0 from the identity pattern.
    pub fn unit_violation(&self) -> f64 {
        self.unit_violation
    }

    /// Human-readable warnings collected at construction.
    pub fn diagnostics(&self) -> Vec<String> {
        if self.unit_violation > 0.0 {
            vec![format!(
                "e_0 is not a two-sided identity (max deviation {:e})",
                self.unit_violation
            )]
        } else {
            Vec::new()
        }
    }

    #[inline]
    fn coeff(&self, i: usize, j: usize, k: usize) -> f64 {
        self.structure.data()[(i * self.dim + j) * self.dim + k]
    }

    /// `(x · y)_k = Σ_ij A[i][j][k] x_i y_j`.
    pub fn mul(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(Error::shape(format!(
                "algebra of dimension {} cannot multiply vectors of length {} and {}",
                self.dim,
                x.len(),
                y.len()
            )));
        }
        let n = self.dim;
        let mut z = vec![0.0; n];
        for (i, &xi) in x.iter().enumerate() {
            for (j, &yj) in y.iter().enumerate() {
                let xy = xi * yj;
                for (k, zk) in z.iter_mut().enumerate() {
                    *zk += self.coeff(i, j, k) * xy;
                }
            }
        }
        Ok(z)
    }

    /// Basis vector `e_i`.
    pub fn basis(&self, i: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.dim];
        e[i] = 1.0;
        e
    }

    /// `A[i][j][k] == A[j][i][k]` up to `tol`.
    pub fn check_commutative(&self, tol: f64) -> PropertyCheck {
        let n = self.dim;
        let mut worst = None;
        let mut max_violation = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = (self.coeff(i, j, k) - self.coeff(j, i, k)).abs();
                    if v > max_violation {
                        max_violation = v;
                        worst = Some([i, j, k]);
                    }
                }
            }
        }
        PropertyCheck {
            holds: max_violation <= tol,
            max_violation,
            worst,
        }
    }

    /// `(e_i e_j) e_k == e_i (e_j e_k)` for all basis triples, up to `tol`
    /// in the max norm. Costs `O(n^3)` multiplications of `O(n^3)` each, so
    /// it is meant for `n` up to a few dozen.
    pub fn check_associative(&self, tol: f64) -> PropertyCheck {
        let n = self.dim;
        let basis: Vec<Vec<f64>> = (0..n).map(|i| self.basis(i)).collect();
        let products: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| self.mul(&basis[i], &basis[j]).expect("basis length"))
                    .collect()
            })
            .collect();
        let mut worst = None;
        let mut max_violation = 0.0;
        for (i, row) in products.iter().enumerate() {
            for (j, pij) in row.iter().enumerate() {
                for k in 0..n {
                    let left = self.mul(pij, &basis[k]).expect("length");
                    let right = self.mul(&basis[i], &products[j][k]).expect("length");
                    let v = left
                        .iter()
                        .zip(&right)
                        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                    if v > max_violation {
                        max_violation = v;
                        worst = Some([i, j, k]);
                    }
                }
            }
        }
        PropertyCheck {
            holds: max_violation <= tol,
            max_violation,
            worst,
        }
    }

    /// Left (right) non-degeneracy: no nonzero `x` with `x · y = 0`
    /// (`y · x = 0`) for every `y`. Tested as full row rank of the
    /// `n × n²` matricization, counting singular values above
    /// `tol · σ_max`.
    pub fn check_nondegenerate(&self, tol: f64) -> Nondegeneracy {
        let n = self.dim;
        let left = self.structure.data().to_vec();
        let right = self
            .structure
            .permute(&[1, 0, 2])
            .expect("rank-3 permutation")
            .into_data();
        let left_rank = numerical_rank(n, n * n, &left, tol);
        let right_rank = numerical_rank(n, n * n, &right, tol);
        Nondegeneracy {
            left: left_rank == n,
            right: right_rank == n,
            left_rank,
            right_rank,
        }
    }

    pub fn report(&self, tol: f64) -> AlgebraReport {
        let comm = self.check_commutative(tol);
        let assoc = self.check_associative(tol);
        let nondeg = self.check_nondegenerate(tol);
        AlgebraReport {
            name: self.name.clone(),
            dim: self.dim,
            tol,
            is_unital: self.unit_violation <= tol,
            unit_violation: self.unit_violation,
            is_commutative: comm.holds,
            commutative_violation: comm.max_violation,
            is_associative: assoc.holds,
            associative_violation: assoc.max_violation,
            is_left_nondegenerate: nondeg.left,
            is_right_nondegenerate: nondeg.right,
            left_rank: nondeg.left_rank,
            right_rank: nondeg.right_rank,
        }
    }
}

fn unit_violation(table: &Tensor, n: usize) -> f64 {
    let a = table.data();
    let mut worst = 0.0f64;
    for j in 0..n {
        for k in 0..n {
            let delta = if j == k { 1.0 } else { 0.0 };
            worst = worst.max((a[j * n + k] - delta).abs());
            worst = worst.max((a[(j * n) * n + k] - delta).abs());
        }
    }
    worst
}

fn numerical_rank(rows: usize, cols: usize, data: &[f64], tol: f64) -> usize {
    let m = nalgebra::DMatrix::from_row_slice(rows, cols, data);
    let sv = m.singular_values();
    let largest = sv.iter().cloned().fold(0.0, f64::max);
    if largest == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * largest).count()
}
