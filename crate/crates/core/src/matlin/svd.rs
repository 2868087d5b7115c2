//! One-sided Jacobi singular value decomposition.
//!
//! Columns are orthogonalised pairwise with complex plane rotations. Each
//! sweep visits every pair once, grouped into rounds of disjoint pairs by a
//! round-robin schedule. Pairs inside a round touch different columns, so a
//! round may be executed in any order (or concurrently) with identical results.

use super::{CMatrix, Factorization, LinalgError, RankPolicy, C64, ONE, ZERO};

pub(crate) const MAX_SWEEPS: usize = 60;

/// `A ≈ U diag(S) Vh`, truncated to the numeric rank.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `m x k` (a single zero column when `k == 0`).
    pub u: CMatrix,
    /// The `k` retained singular values, non-increasing.
    pub s: Vec<f64>,
    /// `k x n` (a single zero row when `k == 0`).
    pub vh: CMatrix,
    pub rank: usize,
    /// All `min(m, n)` singular values, non-increasing.
    pub spectrum: Vec<f64>,
    pub sweeps: usize,
}

impl Svd {
    /// `A ≈ U (diag(S) Vh)`.
    pub fn into_factorization(self) -> Factorization {
        if self.rank == 0 {
            return Factorization::zero(self.u.rows(), self.vh.cols());
        }
        let mut right = self.vh;
        for (i, &s) in self.s.iter().enumerate() {
            let n = right.cols();
            for v in &mut right.as_mut_slice()[i * n..(i + 1) * n] {
                *v *= s;
            }
        }
        Factorization {
            left: self.u,
            right,
            rank: self.rank,
        }
    }
}

/// Convergence thresholds for a pair rotation.
///
/// A pair is left alone when its inner product is below `relative` times the
/// geometric mean of the two squared norms, or below `floor`. The floor is
/// scaled by the squared Frobenius norm (which rotations preserve), so columns
/// that are pure rounding noise in a rank-deficient matrix stop rotating.
#[derive(Debug, Clone, Copy)]
pub(crate) struct JacobiTolerance {
    pub relative: f64,
    pub floor: f64,
}

impl JacobiTolerance {
    /// Thresholds for columns of length `m` and squared Frobenius norm `frobenius_sq`.
    pub(crate) fn new(m: usize, frobenius_sq: f64) -> Self {
        let relative = (m.max(1) as f64) * f64::EPSILON;
        Self {
            relative,
            floor: relative * relative * frobenius_sq,
        }
    }
}

pub(crate) fn squared_norm(x: &[C64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = x.chunks_exact(2);
    let rest = chunks.remainder();
    for c in chunks {
        acc[0] += c[0].re * c[0].re;
        acc[1] += c[0].im * c[0].im;
        acc[2] += c[1].re * c[1].re;
        acc[3] += c[1].im * c[1].im;
    }
    for v in rest {
        acc[0] += v.re * v.re;
        acc[1] += v.im * v.im;
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3])
}

/// `sum_i conj(x_i) y_i` with a fixed partial-sum layout.
fn dot(x: &[C64], y: &[C64]) -> C64 {
    let mut re = [0.0f64; 2];
    let mut im = [0.0f64; 2];
    let cx = x.chunks_exact(2);
    let cy = y.chunks_exact(2);
    let (rx, ry) = (cx.remainder(), cy.remainder());
    for (a, b) in cx.zip(cy) {
        re[0] += a[0].re * b[0].re + a[0].im * b[0].im;
        im[0] += a[0].re * b[0].im - a[0].im * b[0].re;
        re[1] += a[1].re * b[1].re + a[1].im * b[1].im;
        im[1] += a[1].re * b[1].im - a[1].im * b[1].re;
    }
    for (a, b) in rx.iter().zip(ry) {
        re[0] += a.re * b.re + a.im * b.im;
        im[0] += a.re * b.im - a.im * b.re;
    }
    C64::new(re[0] + re[1], im[0] + im[1])
}

/// `(x, y) <- (c x - s e y, s x + c e y)` with `e` a unit phase.
fn rotate(x: &mut [C64], y: &mut [C64], c: f64, s: f64, e: C64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let eb = C64::new(e.re * b.re - e.im * b.im, e.re * b.im + e.im * b.re);
        let na = C64::new(c * a.re - s * eb.re, c * a.im - s * eb.im);
        let nb = C64::new(s * a.re + c * eb.re, s * a.im + c * eb.im);
        *a = na;
        *b = nb;
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn dot_avx2(x: &[C64], y: &[C64]) -> C64 {
    dot(x, y)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn rotate_avx2(x: &mut [C64], y: &mut [C64], c: f64, s: f64, e: C64) {
    rotate(x, y, c, s, e)
}

fn has_avx2() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

fn dot_dispatch(x: &[C64], y: &[C64]) -> C64 {
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the required CPU features were detected at runtime.
        return unsafe { dot_avx2(x, y) };
    }
    dot(x, y)
}

fn rotate_dispatch(x: &mut [C64], y: &mut [C64], c: f64, s: f64, e: C64) {
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the required CPU features were detected at runtime.
        return unsafe { rotate_avx2(x, y, c, s, e) };
    }
    rotate(x, y, c, s, e)
}

/// Orthogonalises columns `p` and `q` (and applies the same rotation to the
/// matching columns of `V`). Returns whether a rotation was applied.
///
/// `norms` hold the cached squared column norms and are updated in place.
pub(crate) fn rotate_pair(
    wp: &mut [C64],
    wq: &mut [C64],
    vp: &mut [C64],
    vq: &mut [C64],
    norm_p: &mut f64,
    norm_q: &mut f64,
    tol: JacobiTolerance,
) -> bool {
    let (alpha, beta) = (*norm_p, *norm_q);
    if alpha == 0.0 || beta == 0.0 {
        return false;
    }
    let gamma = dot_dispatch(wp, wq);
    let g = gamma.norm();
    if g <= tol.relative * (alpha * beta).sqrt() || g <= tol.floor {
        return false;
    }
    let zeta = (beta - alpha) / (2.0 * g);
    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = c * t;
    let e = gamma.conj() / g;
    rotate_dispatch(wp, wq, c, s, e);
    rotate_dispatch(vp, vq, c, s, e);
    *norm_p = alpha - t * g;
    *norm_q = beta + t * g;
    true
}

/// Round-robin pairing of `n` columns: every pair appears in exactly one round
/// and the pairs of a round are disjoint.
pub(crate) fn round_robin(n: usize) -> Vec<Vec<(usize, usize)>> {
    if n < 2 {
        return Vec::new();
    }
    let slots = n + (n % 2);
    let mut ring: Vec<usize> = (0..slots).collect();
    let mut rounds = Vec::with_capacity(slots - 1);
    for _ in 0..slots - 1 {
        let mut pairs = Vec::with_capacity(slots / 2);
        for i in 0..slots / 2 {
            let (a, b) = (ring[i], ring[slots - 1 - i]);
            if a < n && b < n {
                pairs.push((a.min(b), a.max(b)));
            }
        }
        rounds.push(pairs);
        let last = ring.pop().unwrap();
        ring.insert(1, last);
    }
    rounds
}

/// Executes one round of disjoint rotations; returns whether any pair rotated.
pub(crate) type RoundRunner<'a> =
    dyn FnMut(&[(usize, usize)], &mut [Vec<C64>], &mut [Vec<C64>], &mut [f64], JacobiTolerance) -> bool + 'a;

pub(crate) fn serial_round(
    pairs: &[(usize, usize)],
    w: &mut [Vec<C64>],
    v: &mut [Vec<C64>],
    norms: &mut [f64],
    tol: JacobiTolerance,
) -> bool {
    let mut rotated = false;
    for &(p, q) in pairs {
        let (wp, wq) = two_mut(w, p, q);
        let (vp, vq) = two_mut(v, p, q);
        let (np, nq) = two_mut(norms, p, q);
        rotated |= rotate_pair(wp, wq, vp, vq, np, nq, tol);
    }
    rotated
}

pub(crate) fn two_mut<T>(xs: &mut [T], p: usize, q: usize) -> (&mut T, &mut T) {
    assert!(p < q);
    let (lo, hi) = xs.split_at_mut(q);
    (&mut lo[p], &mut hi[0])
}

pub fn svd(a: &CMatrix, policy: &RankPolicy) -> Result<Svd, LinalgError> {
    svd_with(a, policy, &mut serial_round)
}

/// Jacobi SVD with a caller-supplied executor for each round.
pub(crate) fn svd_with(
    a: &CMatrix,
    policy: &RankPolicy,
    run_round: &mut RoundRunner<'_>,
) -> Result<Svd, LinalgError> {
    let wide = a.cols() > a.rows();
    let work = if wide { a.adjoint() } else { a.clone() };
    let (m, n) = work.shape();
    let mut w: Vec<Vec<C64>> = (0..n).map(|c| work.column(c)).collect();
    let mut v: Vec<Vec<C64>> = (0..n)
        .map(|c| {
            let mut e = vec![ZERO; n];
            e[c] = ONE;
            e
        })
        .collect();
    let rounds = round_robin(n);
    let tol = JacobiTolerance::new(m, w.iter().map(|c| squared_norm(c)).sum());
    let mut norms = vec![0.0; n];
    let mut sweeps = 0;
    loop {
        if sweeps == MAX_SWEEPS {
            return Err(LinalgError::NoConvergence { sweeps });
        }
        sweeps += 1;
        for (c, col) in w.iter().enumerate() {
            norms[c] = squared_norm(col);
        }
        let mut rotated = false;
        for pairs in &rounds {
            rotated |= run_round(pairs, &mut w, &mut v, &mut norms, tol);
        }
        if !rotated {
            break;
        }
    }

    let values: Vec<f64> = w.iter().map(|c| squared_norm(c).sqrt()).collect();
    if values.iter().any(|s| !s.is_finite()) {
        return Err(LinalgError::NonFinite { op: "svd" });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let spectrum: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let rank = policy.rank_of(&spectrum);

    let (rows, cols) = a.shape();
    if rank == 0 {
        return Ok(Svd {
            u: CMatrix::zeros(rows, 1),
            s: Vec::new(),
            vh: CMatrix::zeros(1, cols),
            rank: 0,
            spectrum,
            sweeps,
        });
    }
    // work = W_norm diag(s) V†, with W_norm the normalised columns.
    let mut left = CMatrix::zeros(m, rank);
    let mut right = CMatrix::zeros(n, rank);
    for (j, &src) in order.iter().take(rank).enumerate() {
        let inv = 1.0 / values[src];
        for r in 0..m {
            left[(r, j)] = w[src][r] * inv;
        }
        for r in 0..n {
            right[(r, j)] = v[src][r];
        }
    }
    let s = spectrum[..rank].to_vec();
    let (u, vh) = if wide {
        // a = work† = V diag(s) W_norm†
        (right, left.adjoint())
    } else {
        (left, right.adjoint())
    };
    Ok(Svd {
        u,
        s,
        vh,
        rank,
        spectrum,
        sweeps,
    })
}
