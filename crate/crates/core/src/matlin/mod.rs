//! Dense complex matrices and the decompositions used to split sites of a
//! matrix product state.
//!
//! Three splitting routes are provided: a one-sided Jacobi [`svd`], a
//! Householder QR with column pivoting ([`rrqr`]), and [`trivial_decompose`],
//! which performs no arithmetic at all and is only appropriate when the rank
//! of the matrix is already known to equal its smaller dimension.
//!
//! Every rank decision goes through a [`RankPolicy`], so the same inputs and
//! policy always produce the same bond dimension.

mod backend;
mod kernel;
mod qr;
mod svd;

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{LinalgBackend, Serial};
pub use qr::{rrqr, PivotedQr};
pub use svd::{svd, Svd};

pub(crate) use qr::{reflect, rrqr_with, Reflector};
pub(crate) use svd::{rotate_pair, svd_with, JacobiTolerance};

/// Complex double-precision scalar used throughout the crate.
pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix dimensions must be positive, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },
    #[error("singular value decomposition did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error(
        "pivoted QR diagonal is not descending at index {index}: |R| went from {prev:e} to {next:e}"
    )]
    PivotOrder { index: usize, prev: f64, next: f64 },
    #[error("{op} produced a non-finite entry")]
    NonFinite { op: &'static str },
    #[error("backend failure: {0}")]
    Backend(String),
}

/// Threshold rule for deciding which singular values (or pivoted-QR diagonal
/// entries) count towards the numeric rank.
///
/// A value `s` is retained when `s > max(absolute_tolerance, relative_tolerance * s_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankPolicy {
    pub absolute_tolerance: f64,
    pub relative_tolerance: f64,
}

impl Default for RankPolicy {
    fn default() -> Self {
        Self {
            absolute_tolerance: 1e-14,
            relative_tolerance: 1e-12,
        }
    }
}

impl RankPolicy {
    pub fn new(absolute_tolerance: f64, relative_tolerance: f64) -> Self {
        assert!(
            absolute_tolerance >= 0.0 && relative_tolerance >= 0.0,
            "rank tolerances must be non-negative"
        );
        Self {
            absolute_tolerance,
            relative_tolerance,
        }
    }

    /// Cut-off for a spectrum whose largest entry is `leading`.
    pub fn threshold(&self, leading: f64) -> f64 {
        self.absolute_tolerance
            .max(self.relative_tolerance * leading)
    }

    /// Number of leading entries of a non-increasing sequence above the cut-off.
    pub fn rank_of(&self, descending: &[f64]) -> usize {
        let Some(&leading) = descending.first() else {
            return 0;
        };
        let cut = self.threshold(leading);
        descending.iter().take_while(|&&s| s > cut).count()
    }
}

/// Dense complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for c in 0..self.cols.min(8) {
                let v = self[(r, c)];
                write!(f, "{:+.4}{:+.4}i ", v.re, v.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    /// `value` times the `n x n` identity.
    pub fn scalar_identity(n: usize, value: C64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = value;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::EmptyMatrix { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from real row slices; handy in tests.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        Self::from_fn(r, c, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self.data[r * self.cols + c]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn scale(&mut self, factor: C64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn scaled(&self, factor: C64) -> Self {
        let mut out = self.clone();
        out.scale(factor);
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| **v != ZERO).count()
    }

    /// True when the matrix is square and equal to `c * I` for some scalar `c`.
    pub fn scalar_multiple_of_identity(&self) -> Option<C64> {
        if self.rows != self.cols {
            return None;
        }
        let c = self.data[0];
        for r in 0..self.rows {
            for col in 0..self.cols {
                let v = self.data[r * self.cols + col];
                let expect = if r == col { c } else { ZERO };
                if v != expect {
                    return None;
                }
            }
        }
        Some(c)
    }

    /// Copy of the rectangular block starting at (`r0`, `c0`).
    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols, "block out of range");
        let mut out = Self::zeros(rows, cols);
        for r in 0..rows {
            let src = &self.data[(r0 + r) * self.cols + c0..(r0 + r) * self.cols + c0 + cols];
            out.data[r * cols..(r + 1) * cols].copy_from_slice(src);
        }
        out
    }

    /// Writes `block` into `self` with its top-left corner at (`r0`, `c0`).
    pub fn set_submatrix(&mut self, r0: usize, c0: usize, block: &Self) {
        assert!(
            r0 + block.rows <= self.rows && c0 + block.cols <= self.cols,
            "block out of range"
        );
        for r in 0..block.rows {
            let dst = (r0 + r) * self.cols + c0;
            self.data[dst..dst + block.cols].copy_from_slice(block.row(r));
        }
    }

    /// Horizontal concatenation of equally tall matrices.
    pub fn hstack(parts: &[Self]) -> Result<Self, LinalgError> {
        let first = parts.first().ok_or(LinalgError::EmptyMatrix { rows: 0, cols: 0 })?;
        let rows = first.rows;
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let mut c0 = 0;
        for p in parts {
            if p.rows != rows {
                return Err(LinalgError::DimensionMismatch {
                    op: "hstack",
                    left: first.shape(),
                    right: p.shape(),
                });
            }
            out.set_submatrix(0, c0, p);
            c0 += p.cols;
        }
        Ok(out)
    }

    /// Vertical concatenation of equally wide matrices.
    pub fn vstack(parts: &[Self]) -> Result<Self, LinalgError> {
        let first = parts.first().ok_or(LinalgError::EmptyMatrix { rows: 0, cols: 0 })?;
        let cols = first.cols;
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        for p in parts {
            if p.cols != cols {
                return Err(LinalgError::DimensionMismatch {
                    op: "vstack",
                    left: first.shape(),
                    right: p.shape(),
                });
            }
            data.extend_from_slice(&p.data);
        }
        let rows = data.len() / cols;
        Ok(Self { rows, cols, data })
    }

    /// Columns permuted so that column `j` of the result is column `perm[j]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.cols);
        Self::from_fn(self.rows, self.cols, |r, c| self[(r, perm[c])])
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Matrix product `a * b`.
///
/// Every output entry is accumulated in increasing order of the inner index,
/// so any blocking of the inner dimension that preserves that order (such as
/// the block-cyclic product in [`crate::blocks`]) yields identical values.
pub fn matmul(a: &CMatrix, b: &CMatrix) -> Result<CMatrix, LinalgError> {
    if a.cols != b.rows {
        return Err(LinalgError::DimensionMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut c = CMatrix::zeros(a.rows, b.cols);
    kernel::gemm_acc(&mut c.data, &a.data, &b.data, a.rows, a.cols, b.cols);
    if !c.is_finite() {
        return Err(LinalgError::NonFinite { op: "matmul" });
    }
    Ok(c)
}

/// `c += a * b` on raw row-major slices, with the same accumulation order as [`matmul`].
pub(crate) fn gemm_acc(c: &mut [C64], a: &[C64], b: &[C64], m: usize, k: usize, n: usize) {
    kernel::gemm_acc(c, a, b, m, k, n);
}

/// How a composite site is split back into two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMethod {
    Svd,
    Rrqr,
    Trivial,
}

impl std::str::FromStr for SplitMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "svd" => Ok(Self::Svd),
            "rrqr" => Ok(Self::Rrqr),
            "trivial" => Ok(Self::Trivial),
            other => Err(format!("unknown split method `{other}`")),
        }
    }
}

/// `a ≈ left * right` with `left` having `rank` columns.
///
/// A zero matrix has rank 0; its factors are then a single zero column and a
/// single zero row so that the product is still well formed.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub left: CMatrix,
    pub right: CMatrix,
    pub rank: usize,
}

impl Factorization {
    pub fn bond(&self) -> usize {
        self.left.cols()
    }

    pub(crate) fn zero(rows: usize, cols: usize) -> Self {
        Self {
            left: CMatrix::zeros(rows, 1),
            right: CMatrix::zeros(1, cols),
            rank: 0,
        }
    }
}

/// The decomposition `A = A I` (tall or square) or `A = I A` (wide).
///
/// No arithmetic is performed, so the product of the factors reproduces `A`
/// exactly.
pub fn trivial_decompose(a: &CMatrix) -> (CMatrix, CMatrix) {
    if a.rows >= a.cols {
        (a.clone(), CMatrix::identity(a.cols))
    } else {
        (CMatrix::identity(a.rows), a.clone())
    }
}

/// Splits `a` into two factors with the requested method.
pub fn factorize(
    a: &CMatrix,
    method: SplitMethod,
    policy: &RankPolicy,
) -> Result<Factorization, LinalgError> {
    match method {
        SplitMethod::Trivial => {
            let (left, right) = trivial_decompose(a);
            let rank = a.rows.min(a.cols);
            Ok(Factorization { left, right, rank })
        }
        SplitMethod::Svd => svd(a, policy).map(Svd::into_factorization),
        SplitMethod::Rrqr => rrqr(a, policy).map(PivotedQr::into_factorization),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_threshold_uses_larger_of_two_cutoffs() {
        let p = RankPolicy::new(1e-3, 1e-2);
        assert_eq!(p.threshold(1.0), 1e-2);
        assert_eq!(p.threshold(0.01), 1e-3);
        assert_eq!(p.rank_of(&[1.0, 0.5, 0.011, 0.009]), 3);
        assert_eq!(p.rank_of(&[]), 0);
    }

    #[test]
    fn identity_times_matrix() {
        let m = CMatrix::from_fn(2, 2, |r, c| C64::new(r as f64 + 0.5, c as f64 - 1.0));
        assert_eq!(matmul(&CMatrix::identity(2), &m).unwrap(), m);
    }

    #[test]
    fn row_of_ones_times_column_of_ones() {
        let row = CMatrix::from_fn(1, 12, |_, _| ONE);
        let col = CMatrix::from_fn(12, 1, |_, _| ONE);
        let p = matmul(&row, &col).unwrap();
        assert_eq!(p.shape(), (1, 1));
        assert_eq!(p[(0, 0)], C64::new(12.0, 0.0));
    }

    #[test]
    fn matmul_rejects_mismatched_shapes() {
        let err = matmul(&CMatrix::zeros(2, 3), &CMatrix::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, LinalgError::DimensionMismatch { op: "matmul", .. }));
    }

    #[test]
    fn trivial_decompose_cases() {
        let tall = CMatrix::from_fn(5, 3, |r, c| C64::new((r * 3 + c) as f64, 1.0));
        let (l, r) = trivial_decompose(&tall);
        assert_eq!(l, tall);
        assert_eq!(r, CMatrix::identity(3));

        let wide = CMatrix::from_fn(2, 6, |r, c| C64::new(r as f64, c as f64));
        let (l, r) = trivial_decompose(&wide);
        assert_eq!(l, CMatrix::identity(2));
        assert_eq!(r, wide);

        let square = CMatrix::from_fn(4, 4, |r, c| C64::new(r as f64, -(c as f64)));
        let (l, r) = trivial_decompose(&square);
        assert_eq!(l, square);
        assert_eq!(r, CMatrix::identity(4));
    }

    #[test]
    fn scalar_identity_detection() {
        let m = CMatrix::scalar_identity(3, C64::new(0.5, 0.0));
        assert_eq!(m.scalar_multiple_of_identity(), Some(C64::new(0.5, 0.0)));
        let mut n = m.clone();
        n[(0, 1)] = C64::new(1e-300, 0.0);
        assert_eq!(n.scalar_multiple_of_identity(), None);
        assert_eq!(CMatrix::zeros(2, 3).scalar_multiple_of_identity(), None);
    }

    #[test]
    fn stacking_round_trips_blocks() {
        let a = CMatrix::from_fn(2, 3, |r, c| C64::new(r as f64, c as f64));
        let b = CMatrix::from_fn(2, 1, |r, _| C64::new(-(r as f64), 2.0));
        let h = CMatrix::hstack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(h.submatrix(0, 0, 2, 3), a);
        assert_eq!(h.submatrix(0, 3, 2, 1), b);
        let v = CMatrix::vstack(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(v.shape(), (4, 3));
        assert_eq!(v.submatrix(2, 0, 2, 3), a);
        assert!(CMatrix::hstack(&[a.clone(), CMatrix::zeros(3, 1)]).is_err());
    }
}
