//! Householder QR with column pivoting.

use super::{CMatrix, Factorization, LinalgError, RankPolicy, C64, ONE, ZERO};

/// Relative slack allowed when checking that `|R_jj|` is non-increasing.
const PIVOT_SLACK: f64 = 1e-12;

/// `A P = Q R` with `Q` having orthonormal columns and `R` upper trapezoidal.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// `m x p` with `p = min(m, n)`.
    pub q: CMatrix,
    /// `p x n`.
    pub r: CMatrix,
    /// Column `j` of `A P` is column `perm[j]` of `A`.
    pub perm: Vec<usize>,
    /// Numeric rank under the policy used for the decomposition.
    pub rank: usize,
    /// `|R_jj|`, non-increasing.
    pub diagonal: Vec<f64>,
}

impl PivotedQr {
    /// Truncates to the numeric rank: `A ≈ Q_k (R_k Pᵀ)`.
    pub fn into_factorization(self) -> Factorization {
        let (m, n) = (self.q.rows(), self.r.cols());
        let k = self.rank;
        if k == 0 {
            return Factorization::zero(m, n);
        }
        let left = self.q.submatrix(0, 0, m, k);
        let mut right = CMatrix::zeros(k, n);
        for i in 0..k {
            for (j, &src) in self.perm.iter().enumerate() {
                right[(i, src)] = self.r[(i, j)];
            }
        }
        Factorization {
            left,
            right,
            rank: k,
        }
    }
}

/// Elementary reflector `H = I - tau v v†` with `v[0] = 1` and real `tau`,
/// chosen so that `H x = beta e_1`.
#[derive(Debug, Clone)]
pub(crate) struct Reflector {
    pub v: Vec<C64>,
    pub tau: f64,
    pub beta: C64,
}

/// Reflector annihilating all but the first entry of `x`, or `None` when `x` is zero.
pub(crate) fn householder(x: &[C64]) -> Option<Reflector> {
    let sigma = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if sigma == 0.0 {
        return None;
    }
    let alpha = x[0];
    let abs_alpha = alpha.norm();
    let phase = if abs_alpha == 0.0 { ONE } else { alpha / abs_alpha };
    let beta = -phase * sigma;
    let denom = alpha - beta;
    let mut v = Vec::with_capacity(x.len());
    v.push(ONE);
    v.extend(x[1..].iter().map(|xi| xi / denom));
    let tau = (sigma + abs_alpha) / sigma;
    Some(Reflector { v, tau, beta })
}

/// Applies `H` to `col`, which must have the reflector's length.
pub(crate) fn reflect(h: &Reflector, col: &mut [C64]) {
    debug_assert_eq!(col.len(), h.v.len());
    let mut w = ZERO;
    for (vi, ci) in h.v.iter().zip(col.iter()) {
        w += vi.conj() * ci;
    }
    if w == ZERO {
        return;
    }
    let s = w * h.tau;
    for (vi, ci) in h.v.iter().zip(col.iter_mut()) {
        *ci -= s * vi;
    }
}

fn tail_norm(col: &[C64], from: usize) -> f64 {
    col[from..].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Pivoted QR of `a`, applying each reflector to the trailing columns serially.
pub fn rrqr(a: &CMatrix, policy: &RankPolicy) -> Result<PivotedQr, LinalgError> {
    rrqr_with(a, policy, &mut |h, j, cols| {
        for col in cols.iter_mut() {
            reflect(h, &mut col[j..]);
        }
    })
}

/// Pivoted QR where the caller supplies the trailing update.
///
/// `update(h, j, cols)` must apply `h` to rows `j..` of every column in
/// `cols`, exactly as [`reflect`] does, for the result to match [`rrqr`].
pub(crate) fn rrqr_with(
    a: &CMatrix,
    policy: &RankPolicy,
    update: &mut dyn FnMut(&Reflector, usize, &mut [Vec<C64>]),
) -> Result<PivotedQr, LinalgError> {
    let (m, n) = a.shape();
    let p = m.min(n);
    let mut cols: Vec<Vec<C64>> = (0..n).map(|c| a.column(c)).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut reflectors: Vec<Option<Reflector>> = Vec::with_capacity(p);
    let mut diagonal = Vec::with_capacity(p);

    for j in 0..p {
        let mut best = j;
        let mut best_norm = tail_norm(&cols[j], j);
        for (c, col) in cols.iter().enumerate().skip(j + 1) {
            let t = tail_norm(col, j);
            if t > best_norm {
                best = c;
                best_norm = t;
            }
        }
        cols.swap(j, best);
        perm.swap(j, best);
        let h = householder(&cols[j][j..]);
        match &h {
            Some(h) => {
                cols[j][j] = h.beta;
                for v in &mut cols[j][j + 1..] {
                    *v = ZERO;
                }
                diagonal.push(h.beta.norm());
                update(h, j, &mut cols[j + 1..]);
            }
            None => diagonal.push(0.0),
        }
        reflectors.push(h);
    }

    for w in diagonal.windows(2).enumerate() {
        let (i, pair) = w;
        if pair[1] > pair[0] * (1.0 + PIVOT_SLACK) + f64::MIN_POSITIVE {
            return Err(LinalgError::PivotOrder {
                index: i + 1,
                prev: pair[0],
                next: pair[1],
            });
        }
    }

    let mut r = CMatrix::zeros(p, n);
    for (c, col) in cols.iter().enumerate() {
        for row in 0..p.min(c + 1) {
            r[(row, c)] = col[row];
        }
    }

    let mut q = CMatrix::zeros(m, p);
    let mut qcols: Vec<Vec<C64>> = (0..p)
        .map(|c| {
            let mut e = vec![ZERO; m];
            e[c] = ONE;
            e
        })
        .collect();
    for (j, h) in reflectors.iter().enumerate().rev() {
        if let Some(h) = h {
            for col in qcols.iter_mut().skip(j) {
                reflect(h, &mut col[j..]);
            }
        }
    }
    for (c, col) in qcols.iter().enumerate() {
        for (row, v) in col.iter().enumerate() {
            q[(row, c)] = *v;
        }
    }
    if !q.is_finite() || !r.is_finite() {
        return Err(LinalgError::NonFinite { op: "rrqr" });
    }

    let rank = policy.rank_of(&diagonal);
    Ok(PivotedQr {
        q,
        r,
        perm,
        rank,
        diagonal,
    })
}
