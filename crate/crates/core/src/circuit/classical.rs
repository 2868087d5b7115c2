//! Integer arithmetic around order finding: modular powers, orders,
//! continued fractions and factor extraction.

use serde::{Deserialize, Serialize};

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn mulmod(a: u64, b: u64, n: u64) -> u64 {
    ((a as u128 * b as u128) % n as u128) as u64
}

pub fn modpow(base: u64, mut exp: u64, n: u64) -> u64 {
    if n == 1 {
        return 0;
    }
    let mut result = 1u64;
    let mut b = base % n;
    while exp > 0 {
        if exp & 1 == 1 {
            result = mulmod(result, b, n);
        }
        b = mulmod(b, b, n);
        exp >>= 1;
    }
    result
}

/// Smallest `r > 0` with `x^r = 1 (mod n)`, or `None` when `gcd(x, n) != 1`.
pub fn multiplicative_order(x: u64, n: u64) -> Option<u64> {
    if n < 2 || gcd(x, n) != 1 {
        return None;
    }
    let x = x % n;
    let mut value = x;
    let mut r = 1;
    while value != 1 % n {
        value = mulmod(value, x, n);
        r += 1;
    }
    Some(r)
}

/// Reduces a multiple `c` of the order of `x` to the order itself by
/// stripping prime factors while `x^(c/p) = 1` still holds.
pub fn reduce_to_order(x: u64, n: u64, mut c: u64) -> u64 {
    let mut rest = c;
    let mut p = 2;
    while p * p <= rest {
        if rest % p == 0 {
            while rest % p == 0 {
                rest /= p;
            }
            while c % p == 0 && modpow(x, c / p, n) == 1 {
                c /= p;
            }
        }
        p += 1;
    }
    if rest > 1 {
        while c % rest == 0 && modpow(x, c / rest, n) == 1 {
            c /= rest;
        }
    }
    c
}

/// Convergents `(numerator, denominator)` of the continued fraction of `m / q`.
pub fn convergents(m: u64, q: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let (mut a, mut b) = (m as u128, q as u128);
    let (mut h_prev, mut h) = (0u128, 1u128);
    let (mut k_prev, mut k) = (1u128, 0u128);
    while b != 0 {
        let t = a / b;
        (a, b) = (b, a % b);
        (h_prev, h) = (h, t * h + h_prev);
        (k_prev, k) = (k, t * k + k_prev);
        out.push((h as u64, k as u64));
    }
    out
}

/// Outcome of classical post-processing of one measured value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidates {
    /// Denominators of the convergents of `m / q` below `n`, ascending.
    pub denominators: Vec<u64>,
    /// Values `c` drawn from the denominators and their 2x-4x multiples with
    /// `x^c = 1 (mod n)`, ascending.
    pub verified: Vec<u64>,
}

/// Candidate orders from a measured value `m` of a `q`-dimensional register.
pub fn order_candidates(m: u64, q: u64, n: u64, x: u64) -> Candidates {
    if m == 0 {
        return Candidates {
            denominators: Vec::new(),
            verified: Vec::new(),
        };
    }
    let mut denominators: Vec<u64> = convergents(m, q)
        .into_iter()
        .map(|(_, d)| d)
        .filter(|&d| d > 0 && d < n)
        .collect();
    denominators.sort_unstable();
    denominators.dedup();
    let mut verified: Vec<u64> = denominators
        .iter()
        .flat_map(|&d| (1..=4).map(move |k| d * k))
        .filter(|&c| modpow(x, c, n) == 1)
        .collect();
    verified.sort_unstable();
    verified.dedup();
    Candidates {
        denominators,
        verified,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorFailure {
    /// The order is odd, so `x^(r/2)` is not defined.
    OddOrder,
    /// `x^(r/2) = -1 (mod n)`: both gcds are trivial.
    TrivialRoot,
}

impl std::fmt::Display for FactorFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::OddOrder => write!(f, "odd order"),
            Self::TrivialRoot => write!(f, "trivial square root of unity"),
        }
    }
}

/// `gcd(x^(r/2) - 1, n)` and `gcd(x^(r/2) + 1, n)` for an order `r` of `x`.
pub fn recover_factors(r: u64, x: u64, n: u64) -> Result<(u64, u64), FactorFailure> {
    if r % 2 == 1 {
        return Err(FactorFailure::OddOrder);
    }
    let half = modpow(x, r / 2, n);
    if half == n - 1 {
        return Err(FactorFailure::TrivialRoot);
    }
    let a = gcd((half + n - 1) % n, n);
    let b = gcd((half + 1) % n, n);
    debug_assert!(a > 1 && b > 1 && a * b == n, "factors {a} {b} of {n}");
    Ok((a.min(b), a.max(b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_from_tables() {
        assert_eq!(multiplicative_order(2, 65), Some(12));
        assert_eq!(multiplicative_order(7, 15), Some(4));
        assert_eq!(multiplicative_order(64, 65), Some(2));
        assert_eq!(multiplicative_order(5, 15), None);
    }

    #[test]
    fn modpow_matches_repeated_multiplication() {
        let mut v = 1;
        for e in 0..100 {
            assert_eq!(modpow(3, e, 1001), v);
            v = v * 3 % 1001;
        }
    }

    #[test]
    fn convergents_of_quarter() {
        assert_eq!(convergents(64, 256), vec![(0, 1), (1, 4)]);
        assert_eq!(convergents(192, 256), vec![(0, 1), (1, 1), (3, 4)]);
        let c = order_candidates(64, 256, 15, 7);
        assert!(c.denominators.contains(&4));
        assert_eq!(c.verified, vec![4, 8, 12, 16]);
        assert_eq!(order_candidates(192, 256, 15, 7).denominators, vec![1, 4]);
        assert!(order_candidates(0, 256, 15, 7).verified.is_empty());
    }

    #[test]
    fn multiples_rescue_shared_factors() {
        // m / q = 1/6 for r = 12: denominator 6, multiple 12 verifies.
        let c = order_candidates(2731, 16384, 65, 2);
        assert!(c.denominators.contains(&6));
        assert!(c.verified.contains(&12));
    }

    #[test]
    fn factor_recovery_cases() {
        assert_eq!(recover_factors(4, 7, 15), Ok((3, 5)));
        assert_eq!(recover_factors(2, 14, 15), Err(FactorFailure::TrivialRoot));
        assert_eq!(recover_factors(12, 2, 65), Err(FactorFailure::TrivialRoot));
        assert_eq!(recover_factors(3, 4, 7), Err(FactorFailure::OddOrder));
        assert_eq!(recover_factors(6, 2, 21), Ok((3, 7)));
    }

    #[test]
    fn reduce_multiple_to_order() {
        assert_eq!(reduce_to_order(2, 65, 48), 12);
        assert_eq!(reduce_to_order(7, 15, 4), 4);
        assert_eq!(reduce_to_order(2, 2033, 954 * 3), 954);
    }
}
