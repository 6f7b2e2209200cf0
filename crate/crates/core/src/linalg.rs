//! Dense vectors and the handful of matrix routines the solvers need.
//!
//! All reductions run sequentially in index order, so results never depend on
//! how work was scheduled.

use std::ops::{Add, Index, Mul, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real matrix (column-major), re-exported from `nalgebra`.
pub type Matrix = DMatrix<f64>;

/// A real coordinate vector. The dimension is fixed at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    /// Builds a vector, rejecting empty or non-finite input.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::param("vector dimension must be positive"));
        }
        if let Some(i) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("coordinate {i} is not finite")));
        }
        Ok(DenseVector(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        DenseVector(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        DenseVector(vec![value; dim])
    }

    pub fn from_slice(coords: &[f64]) -> Self {
        DenseVector(coords.to_vec())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_l1(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn dist_sq(&self, other: &DenseVector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn dist(&self, other: &DenseVector) -> f64 {
        self.dist_sq(other).sqrt()
    }

    pub fn scale(&self, factor: f64) -> DenseVector {
        self.map(|v| v * factor)
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: f64, x: &DenseVector) {
        debug_assert_eq!(self.dim(), x.dim());
        for (a, b) in self.0.iter_mut().zip(&x.0) {
            *a += alpha * b;
        }
    }

    /// `a * x + b * y`
    pub fn lincomb(a: f64, x: &DenseVector, b: f64, y: &DenseVector) -> DenseVector {
        debug_assert_eq!(x.dim(), y.dim());
        DenseVector(x.0.iter().zip(&y.0).map(|(u, v)| a * u + b * v).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseVector {
        DenseVector(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &DenseVector, f: impl Fn(f64, f64) -> f64) -> DenseVector {
        debug_assert_eq!(self.dim(), other.dim());
        DenseVector(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn to_nalgebra(&self) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_column_slice(&self.0)
    }

    pub fn from_nalgebra(v: &nalgebra::DVector<f64>) -> DenseVector {
        DenseVector(v.as_slice().to_vec())
    }
}

impl From<Vec<f64>> for DenseVector {
    /// Wraps a vector without validation. Prefer [`DenseVector::new`] for
    /// untrusted input.
    fn from(coords: Vec<f64>) -> Self {
        DenseVector(coords)
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for &DenseVector {
    type Output = DenseVector;
    fn add(self, rhs: &DenseVector) -> DenseVector {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &DenseVector {
    type Output = DenseVector;
    fn sub(self, rhs: &DenseVector) -> DenseVector {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &DenseVector {
    type Output = DenseVector;
    fn mul(self, rhs: f64) -> DenseVector {
        self.scale(rhs)
    }
}

impl Neg for &DenseVector {
    type Output = DenseVector;
    fn neg(self) -> DenseVector {
        self.map(|v| -v)
    }
}

/// `A x` for a square or rectangular matrix.
pub fn matvec(a: &Matrix, x: &DenseVector) -> DenseVector {
    debug_assert_eq!(a.ncols(), x.dim());
    let rows = a.nrows();
    let mut out = vec![0.0; rows];
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = a.column(j);
        for (o, &aij) in out.iter_mut().zip(col.iter()) {
            *o += aij * xj;
        }
    }
    DenseVector(out)
}

/// `x^T A x`
pub fn quad_form(a: &Matrix, x: &DenseVector) -> f64 {
    x.dot(&matvec(a, x))
}

/// Checks symmetry up to a relative tolerance.
pub fn is_symmetric(a: &Matrix, tol: f64) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let scale = a.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            if (a[(i, j)] - a[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub fn eigen_range(a: &Matrix) -> (f64, f64) {
    let eig = a.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Solves `M u = rhs` for a symmetric positive definite `M`.
pub fn solve_spd(m: &Matrix, rhs: &DenseVector) -> Result<DenseVector> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::param("matrix is not positive definite"))?;
    Ok(DenseVector::from_nalgebra(&chol.solve(&rhs.to_nalgebra())))
}

/// `Q diag(d) Q^T` with `Q` Haar-distributed from the given source.
pub fn random_conjugated_diagonal(diag: &[f64], rng: &mut crate::rng::RandomSource) -> Matrix {
    let n = diag.len();
    let g = Matrix::from_fn(n, n, |_, _| rng.standard_normal());
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Sign fix so that Q is uniformly distributed.
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let d = Matrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag));
    let m = &q * d * q.transpose();
    // Exact symmetry for downstream checks.
    (&m + m.transpose()) * 0.5
}

/// `n` points log-spaced on `[lo, hi]` (inclusive).
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i == n - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_input() {
        assert!(DenseVector::new(vec![]).is_err());
        assert!(DenseVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(DenseVector::new(vec![f64::INFINITY]).is_err());
        assert_eq!(DenseVector::new(vec![1.0, 2.0]).unwrap().dim(), 2);
    }

    #[test]
    fn matvec_matches_nalgebra() {
        let a = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = DenseVector::from_slice(&[1.0, -1.0, 2.0]);
        assert_eq!(matvec(&a, &x).as_slice(), &[5.0, 11.0]);
    }

    #[test]
    fn logspace_endpoints_exact() {
        let v = logspace(1.0, 1e6, 7);
        assert_eq!(v[0], 1.0);
        assert_eq!(v[6], 1e6);
        assert!((v[3] - 1e3).abs() < 1e-9);
    }

    fn vec_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..12).prop_flat_map(|n| {
            (
                prop::collection::vec(-1e3..1e3f64, n),
                prop::collection::vec(-1e3..1e3f64, n),
            )
        })
    }

    proptest! {
        #[test]
        fn norm_and_dot_identities((a, b) in vec_strategy()) {
            let x = DenseVector::from(a);
            let y = DenseVector::from(b);
            prop_assert_eq!(x.norm_sq(), x.dot(&x));
            prop_assert_eq!(x.dot(&y), y.dot(&x));
            let s = &x + &y;
            let back = &s - &y;
            for (u, v) in back.iter().zip(x.iter()) {
                prop_assert!((u - v).abs() <= 1e-9 * (1.0 + v.abs()));
            }
        }
    }
}
