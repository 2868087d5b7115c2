//! Complex GEMM kernel.
//!
//! All paths compute `c[i][j] += sum_k a[i][k] * b[k][j]` by adding the
//! products one at a time in increasing `k`, using the textbook complex
//! product. The results are therefore the same bits no matter which path
//! runs (up to the sign of exact zeros in the sparse path).

use super::{C64, ZERO};

const MR: usize = 2;
const NR: usize = 8;

/// Fraction of non-zero entries in `a` below which the row-sparse path is used.
const SPARSE_DENSITY: f64 = 0.25;

pub(crate) fn gemm_acc(c: &mut [C64], a: &[C64], b: &[C64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let nonzero = a.iter().filter(|v| **v != ZERO).count();
    if (nonzero as f64) < SPARSE_DENSITY * (m * k) as f64 {
        sparse_rows(c, a, b, m, k, n);
        return;
    }
    if m * n * k < 512 {
        simple(c, a, b, m, k, n);
        return;
    }
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma")
        {
            // SAFETY: the required CPU features were detected at runtime.
            unsafe { tiled_avx2(c, a, b, m, k, n) };
            return;
        }
    }
    tiled(c, a, b, m, k, n);
}

#[inline]
fn mul_add(acc: C64, x: C64, y: C64) -> C64 {
    C64::new(
        acc.re + (x.re * y.re - x.im * y.im),
        acc.im + (x.re * y.im + x.im * y.re),
    )
}

fn simple(c: &mut [C64], a: &[C64], b: &[C64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for kk in 0..k {
            let x = a[i * k + kk];
            let brow = &b[kk * n..(kk + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv = mul_add(*cv, x, *bv);
            }
        }
    }
}

fn sparse_rows(c: &mut [C64], a: &[C64], b: &[C64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for kk in 0..k {
            let x = a[i * k + kk];
            if x == ZERO {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv = mul_add(*cv, x, *bv);
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn tiled_avx2(c: &mut [C64], a: &[C64], b: &[C64], m: usize, k: usize, n: usize) {
    tiled(c, a, b, m, k, n)
}

#[inline(always)]
fn tiled(c: &mut [C64], a: &[C64], b: &[C64], m: usize, k: usize, n: usize) {
    let mut panel_re = vec![0.0f64; k * NR];
    let mut panel_im = vec![0.0f64; k * NR];
    let mut j0 = 0;
    while j0 < n {
        let nr = NR.min(n - j0);
        for kk in 0..k {
            for jj in 0..NR {
                let v = if jj < nr { b[kk * n + j0 + jj] } else { ZERO };
                panel_re[kk * NR + jj] = v.re;
                panel_im[kk * NR + jj] = v.im;
            }
        }
        let mut i0 = 0;
        while i0 + MR <= m {
            let mut cr = [[0.0f64; NR]; MR];
            let mut ci = [[0.0f64; NR]; MR];
            for ii in 0..MR {
                for jj in 0..nr {
                    let v = c[(i0 + ii) * n + j0 + jj];
                    cr[ii][jj] = v.re;
                    ci[ii][jj] = v.im;
                }
            }
            for kk in 0..k {
                let br: &[f64; NR] = panel_re[kk * NR..kk * NR + NR].try_into().unwrap();
                let bi: &[f64; NR] = panel_im[kk * NR..kk * NR + NR].try_into().unwrap();
                for ii in 0..MR {
                    let x = a[(i0 + ii) * k + kk];
                    for jj in 0..NR {
                        cr[ii][jj] += x.re * br[jj] - x.im * bi[jj];
                        ci[ii][jj] += x.re * bi[jj] + x.im * br[jj];
                    }
                }
            }
            for ii in 0..MR {
                for jj in 0..nr {
                    c[(i0 + ii) * n + j0 + jj] = C64::new(cr[ii][jj], ci[ii][jj]);
                }
            }
            i0 += MR;
        }
        for i in i0..m {
            for kk in 0..k {
                let x = a[i * k + kk];
                for jj in 0..nr {
                    let idx = i * n + j0 + jj;
                    let y = C64::new(panel_re[kk * NR + jj], panel_im[kk * NR + jj]);
                    c[idx] = mul_add(c[idx], x, y);
                }
            }
        }
        j0 += NR;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference(a: &[C64], b: &[C64], m: usize, k: usize, n: usize) -> Vec<C64> {
        let mut c = vec![ZERO; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = ZERO;
                for kk in 0..k {
                    acc += a[i * k + kk] * b[kk * n + j];
                }
                c[i * n + j] = acc;
            }
        }
        c
    }

    fn random(rng: &mut ChaCha8Rng, len: usize, density: f64) -> Vec<C64> {
        (0..len)
            .map(|_| {
                if rng.gen::<f64>() < density {
                    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                } else {
                    ZERO
                }
            })
            .collect()
    }

    #[test]
    fn all_paths_match_reference_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(m, k, n) in &[(1, 1, 1), (3, 5, 2), (17, 9, 23), (40, 33, 31), (64, 64, 64)] {
            for &density in &[1.0, 0.1] {
                let a = random(&mut rng, m * k, density);
                let b = random(&mut rng, k * n, 1.0);
                let expect = reference(&a, &b, m, k, n);
                let mut got = vec![ZERO; m * n];
                gemm_acc(&mut got, &a, &b, m, k, n);
                assert_eq!(got, expect, "shape {m}x{k}x{n} density {density}");
                let mut t = vec![ZERO; m * n];
                tiled(&mut t, &a, &b, m, k, n);
                assert_eq!(t, expect);
                let mut s = vec![ZERO; m * n];
                simple(&mut s, &a, &b, m, k, n);
                assert_eq!(s, expect);
            }
        }
    }

    #[test]
    fn accumulates_into_existing_values() {
        let a = vec![C64::new(1.0, 1.0); 4];
        let b = vec![C64::new(2.0, 0.0); 4];
        let mut c = vec![C64::new(1.0, 0.0); 4];
        gemm_acc(&mut c, &a, &b, 2, 2, 2);
        assert!(c.iter().all(|v| *v == C64::new(5.0, 4.0)));
    }
}
