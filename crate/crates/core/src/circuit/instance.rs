use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::classical::{gcd, modpow, mulmod, multiplicative_order};

/// Reasons a pair `(n, x)` is not handed to the quantum part.
#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceError {
    #[error("N = {n} is too small (need N >= 3)")]
    TooSmall { n: u64 },
    #[error("N = {n} is even; 2 is a factor")]
    Even { n: u64 },
    #[error("N = {n} is prime")]
    Prime { n: u64 },
    #[error("N = {n} is a prime power {base}^{exponent}")]
    PrimePower { n: u64, base: u64, exponent: u32 },
    #[error("x = {x} is outside 1 < x < N = {n}")]
    BaseOutOfRange { n: u64, x: u64 },
    #[error("gcd(x, N) = {factor} is already a factor of N = {n}")]
    SharedFactor { n: u64, x: u64, factor: u64 },
    #[error("N = {n} needs {bits} bits; at most {max} are supported")]
    TooLarge { n: u64, bits: u32, max: u32 },
    #[error("no usable base x found for N = {n}")]
    NoBase { n: u64 },
}

/// Largest register width supported (the upper register then has 2l qubits).
pub const MAX_BITS: u32 = 31;

/// A validated order-finding problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShorInstance {
    pub n: u64,
    pub x: u64,
    /// Bits needed to hold `n`.
    pub l: u32,
    /// `x^(2^i) mod n` for `i` in `0..2l`.
    pub pow_table: Vec<u64>,
}

impl ShorInstance {
    pub fn upper_qubits(&self) -> usize {
        2 * self.l as usize
    }

    /// Dimension `2^(2l)` of the upper register.
    pub fn upper_dim(&self) -> u64 {
        1u64 << (2 * self.l)
    }

    pub fn order(&self) -> u64 {
        multiplicative_order(self.x, self.n).expect("validated instance")
    }
}

pub fn bit_length(n: u64) -> u32 {
    64 - n.leading_zeros()
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// `Some((p, k))` when `n = p^k` with `p` prime and `k >= 2`.
fn prime_power(n: u64) -> Option<(u64, u32)> {
    for k in (2..=bit_length(n)).rev() {
        let root = (n as f64).powf(1.0 / k as f64).round() as u64;
        for base in root.saturating_sub(1)..=root + 1 {
            if base >= 2 && base.checked_pow(k) == Some(n) && is_prime(base) {
                return Some((base, k));
            }
        }
    }
    None
}

/// Checks `n` on its own: odd, composite, not a prime power, small enough.
pub fn validate_modulus(n: u64) -> Result<u32, InstanceError> {
    if n < 3 {
        return Err(InstanceError::TooSmall { n });
    }
    if n % 2 == 0 {
        return Err(InstanceError::Even { n });
    }
    let l = bit_length(n);
    if l > MAX_BITS {
        return Err(InstanceError::TooLarge {
            n,
            bits: l,
            max: MAX_BITS,
        });
    }
    if is_prime(n) {
        return Err(InstanceError::Prime { n });
    }
    if let Some((base, exponent)) = prime_power(n) {
        return Err(InstanceError::PrimePower { n, base, exponent });
    }
    Ok(l)
}

pub fn validate_instance(n: u64, x: u64) -> Result<ShorInstance, InstanceError> {
    let l = validate_modulus(n)?;
    if x <= 1 || x >= n {
        return Err(InstanceError::BaseOutOfRange { n, x });
    }
    let g = gcd(x, n);
    if g != 1 {
        return Err(InstanceError::SharedFactor { n, x, factor: g });
    }
    let mut pow_table = Vec::with_capacity(2 * l as usize);
    let mut y = x;
    for _ in 0..2 * l {
        pow_table.push(y);
        y = mulmod(y, y, n);
    }
    Ok(ShorInstance { n, x, l, pow_table })
}

/// An order that leads to factors: even, and `x^(r/2) != -1 (mod n)`.
pub fn order_is_usable(x: u64, n: u64, r: u64) -> bool {
    r % 2 == 0 && modpow(x, r / 2, n) != n - 1
}

/// Picks the base `x` in `2..=budget` (and below `n`) with the largest order
/// among bases whose order yields factors; ties go to the smallest `x`. When
/// no base in range yields factors, the largest order overall is used.
pub fn select_base(n: u64, budget: u64) -> Result<u64, InstanceError> {
    validate_modulus(n)?;
    let mut best_usable: Option<(u64, u64)> = None;
    let mut best_any: Option<(u64, u64)> = None;
    for x in 2..n.min(budget.saturating_add(1)) {
        let Some(r) = multiplicative_order(x, n) else {
            continue;
        };
        if best_any.is_none_or(|(_, br)| r > br) {
            best_any = Some((x, r));
        }
        if order_is_usable(x, n, r) && best_usable.is_none_or(|(_, br)| r > br) {
            best_usable = Some((x, r));
        }
    }
    best_usable
        .or(best_any)
        .map(|(x, _)| x)
        .ok_or(InstanceError::NoBase { n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_instances() {
        let i = validate_instance(15, 7).unwrap();
        assert_eq!(i.l, 4);
        assert_eq!(i.pow_table, vec![7, 4, 1, 1, 1, 1, 1, 1]);
        assert_eq!(validate_instance(2033, 2).unwrap().l, 11);
        let i = validate_instance(65, 2).unwrap();
        for w in i.pow_table.windows(2) {
            assert_eq!(w[1], w[0] * w[0] % 65);
        }
    }

    #[test]
    fn rejections_are_classified() {
        assert_eq!(
            validate_instance(15, 5),
            Err(InstanceError::SharedFactor { n: 15, x: 5, factor: 5 })
        );
        assert_eq!(validate_instance(16, 3), Err(InstanceError::Even { n: 16 }));
        assert_eq!(validate_instance(13, 2), Err(InstanceError::Prime { n: 13 }));
        assert_eq!(
            validate_instance(27, 2),
            Err(InstanceError::PrimePower { n: 27, base: 3, exponent: 3 })
        );
        assert_eq!(
            validate_instance(49, 3),
            Err(InstanceError::PrimePower { n: 49, base: 7, exponent: 2 })
        );
        assert_eq!(validate_instance(2, 1), Err(InstanceError::TooSmall { n: 2 }));
        assert_eq!(validate_instance(15, 15), Err(InstanceError::BaseOutOfRange { n: 15, x: 15 }));
        assert_eq!(validate_instance(15, 1), Err(InstanceError::BaseOutOfRange { n: 15, x: 1 }));
    }

    #[test]
    fn base_selection_prefers_usable_orders() {
        // 2 has the maximal order 12 mod 65 but 2^6 = -1.
        let x = select_base(65, 64).unwrap();
        let r = multiplicative_order(x, 65).unwrap();
        assert_eq!(r, 12);
        assert!(order_is_usable(x, 65, r));
        assert_eq!(select_base(15, 64).unwrap(), 2);
        let x = select_base(2033, 64).unwrap();
        assert_eq!(multiplicative_order(x, 2033), Some(954));
        assert_ne!(x, 2);
    }
}
