//! Quantum Fourier transform of the upper register.
//!
//! Both variants use `out[y] = 2^(-n/2) sum_x exp(2 pi i x y / 2^n) in[x]`,
//! i.e. controlled phases `|11> -> exp(i pi / 2^k) |11>`.
//!
//! [`qft_contract`] absorbs one qubit at a time, most significant first,
//! into a single growing qudit. After `k` qubits the qudit is indexed by the
//! low `k` bits of `y`, so the final qudit is already in output order and no
//! swaps are needed. [`qft_nearest_neighbour`] instead runs the textbook gate
//! sequence with a swap after every controlled phase, so that all two-qubit
//! gates act on neighbouring sites. [`qft_standard`] applies the textbook
//! circuit directly, bringing each control next to its target for the
//! long-range phases and leaving the final bit reversal to the labels.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::matlin::{CMatrix, LinalgBackend, C64};
use crate::mps::{Decomposer, MpsState, SiteLabel};

use super::CircuitError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QftVariant {
    /// Contraction into one qudit; no decompositions.
    Contract,
    /// Nearest-neighbour gates with swaps and a decomposition after each swap.
    Nn,
    /// Textbook circuit; long-range phases are applied after moving the control.
    Standard,
}

impl std::str::FromStr for QftVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "contract" => Ok(Self::Contract),
            "nn" => Ok(Self::Nn),
            "standard" => Ok(Self::Standard),
            other => Err(format!("unknown QFT variant `{other}`")),
        }
    }
}

impl std::fmt::Display for QftVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Contract => "contract",
            Self::Nn => "nn",
            Self::Standard => "standard",
        })
    }
}

/// Bytes of working memory needed to absorb a site into a qudit of
/// `rows` entries per bond index, with right bond `bond`.
pub(crate) fn absorb_bytes(rows: usize, bond: usize) -> u128 {
    // Two products of `rows x bond` plus the combined `2 rows x bond` result.
    4 * rows as u128 * bond as u128 * std::mem::size_of::<C64>() as u128
}

/// `exp(i pi h / half)`: the phase picked up by the new qubit for output row `h`.
pub(crate) fn qft_phase(h: usize, half: usize) -> C64 {
    C64::from_polar(1.0, PI * h as f64 / half as f64)
}

/// Combines the two branch products of one absorption step for rows
/// `offset .. offset + x0.rows()` of a qudit with `half` rows; returns
/// the `+` and `-` halves.
pub(crate) fn combine_branches(x0: &CMatrix, x1: &CMatrix, offset: usize, half: usize) -> (CMatrix, CMatrix) {
    let (rows, cols) = x0.shape();
    let mut plus = CMatrix::zeros(rows, cols);
    let mut minus = CMatrix::zeros(rows, cols);
    let s = FRAC_1_SQRT_2;
    for h in 0..rows {
        let w = qft_phase(offset + h, half);
        let (r0, r1) = (x0.row(h), x1.row(h));
        let p = &mut plus.as_mut_slice()[h * cols..(h + 1) * cols];
        for c in 0..cols {
            let a = r0[c];
            let b = w * r1[c];
            p[c] = (a + b) * s;
        }
        let m = &mut minus.as_mut_slice()[h * cols..(h + 1) * cols];
        for c in 0..cols {
            let a = r0[c];
            let b = w * r1[c];
            m[c] = (a - b) * s;
        }
    }
    (plus, minus)
}

/// Returns the upper register as a chain `q_{n-1} ... q_0` (most significant
/// qubit leftmost), reversing it if it is stored the other way round.
pub fn msb_first_chain(state: &MpsState) -> Result<MpsState, CircuitError> {
    if state.lower.is_some() {
        return Err(CircuitError::LowerPresent);
    }
    let n = state.sites.len();
    let labels: Option<Vec<usize>> = state
        .sites
        .iter()
        .map(|s| match s.label() {
            Some(SiteLabel::Qubit(t)) => Some(*t),
            _ => None,
        })
        .collect();
    let labels = labels.ok_or(CircuitError::UnsupportedOrdering)?;
    if labels.iter().copied().eq((0..n).rev()) {
        Ok(state.clone())
    } else if labels.iter().copied().eq(0..n) {
        let mut r = state.clone();
        r.reverse();
        Ok(r)
    } else {
        Err(CircuitError::UnsupportedOrdering)
    }
}

/// QFT by contraction into a single `2^n`-dimensional qudit. Returns the
/// amplitudes indexed by the output value `y`.
pub fn qft_contract(
    state: &MpsState,
    backend: &dyn LinalgBackend,
    memory_cap_bytes: u64,
) -> Result<Vec<C64>, CircuitError> {
    let chain = msb_first_chain(state)?;
    let mut g = CMatrix::scalar_identity(1, C64::new(chain.global_norm, 0.0));
    for site in &chain.sites {
        let half = g.rows();
        let needed = absorb_bytes(half, site.bond_right());
        if needed > memory_cap_bytes as u128 {
            return Err(CircuitError::Capacity {
                stage: "qft",
                needed_bytes: needed,
                cap_bytes: memory_cap_bytes,
            });
        }
        let x0 = backend.matmul(&g, &site.mats[0])?;
        let x1 = backend.matmul(&g, &site.mats[1])?;
        let (plus, minus) = combine_branches(&x0, &x1, 0, half);
        g = CMatrix::vstack(&[plus, minus])?;
    }
    Ok(g.into_vec())
}

/// QFT with nearest-neighbour gates on the chain. Afterwards the site at
/// position `p` carries output bit `n - 1 - p` and is labelled accordingly.
pub fn qft_nearest_neighbour(state: &MpsState, dec: &Decomposer<'_>) -> Result<MpsState, CircuitError> {
    let mut chain = msb_first_chain(state)?;
    let n = chain.sites.len();
    let h = CMatrix::from_real_rows(&[&[FRAC_1_SQRT_2, FRAC_1_SQRT_2], &[FRAC_1_SQRT_2, -FRAC_1_SQRT_2]]);
    for t in 0..n {
        chain.apply_single_site_gate(0, &h, false)?;
        for j in 1..n - t {
            chain.contract_pair_with(j - 1, dec.backend)?;
            let phase = C64::from_polar(1.0, PI / (1u64 << j) as f64);
            chain.sites[j - 1].mats[3].scale(phase);
            chain.exchange_and_split(j - 1, 2, 2, dec)?;
        }
    }
    for (p, site) in chain.sites.iter_mut().enumerate() {
        site.parts = vec![(SiteLabel::Qubit(n - 1 - p), 2)];
    }
    Ok(chain)
}

/// QFT with the textbook gate sequence. Controlled phases between distant
/// qubits are applied by moving the control next to the target and back.
/// The closing swaps become a relabelling: position `p` carries output bit `p`.
pub fn qft_standard(state: &MpsState, dec: &Decomposer<'_>) -> Result<MpsState, CircuitError> {
    let mut chain = msb_first_chain(state)?;
    let n = chain.sites.len();
    let h = CMatrix::from_real_rows(&[&[FRAC_1_SQRT_2, FRAC_1_SQRT_2], &[FRAC_1_SQRT_2, -FRAC_1_SQRT_2]]);
    for t in 0..n {
        chain.apply_single_site_gate(t, &h, false)?;
        for k in t + 1..n {
            chain.move_site(k, t + 1, dec)?;
            chain.contract_pair_with(t, dec.backend)?;
            let phase = C64::from_polar(1.0, PI / (1u64 << (k - t)) as f64);
            chain.sites[t].mats[3].scale(phase);
            chain.split_site(t, 2, 2, dec)?;
            chain.move_site(t + 1, k, dec)?;
        }
    }
    for (p, site) in chain.sites.iter_mut().enumerate() {
        site.parts = vec![(SiteLabel::Qubit(p), 2)];
    }
    Ok(chain)
}

/// `|amplitude|^2` for every entry.
pub fn probabilities(amplitudes: &[C64]) -> Vec<f64> {
    amplitudes.iter().map(|a| a.norm_sqr()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matlin::{Serial, SplitMethod, ONE, ZERO};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dft(input: &[C64]) -> Vec<C64> {
        let q = input.len();
        let norm = 1.0 / (q as f64).sqrt();
        (0..q)
            .map(|y| {
                let mut acc = ZERO;
                for (x, v) in input.iter().enumerate() {
                    let angle = 2.0 * PI * ((x * y) % q) as f64 / q as f64;
                    acc += C64::from_polar(1.0, angle) * v;
                }
                acc * norm
            })
            .collect()
    }

    fn random_product(rng: &mut ChaCha8Rng, n: usize) -> MpsState {
        let qubits: Vec<[C64; 2]> = (0..n)
            .map(|_| {
                let a = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let b = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let s = (a.norm_sqr() + b.norm_sqr()).sqrt();
                [a / s, b / s]
            })
            .collect();
        MpsState::product_state(&qubits)
    }

    /// Random entangled chain built by swapping through a product state.
    fn random_entangled(rng: &mut ChaCha8Rng, n: usize) -> MpsState {
        let mut s = random_product(rng, n);
        let dec = Decomposer::serial(SplitMethod::Svd);
        for i in 0..n - 1 {
            s.contract_pair(i).unwrap();
            let u = rng.gen_range(0.0..PI);
            s.sites[i].mats[3].scale(C64::from_polar(1.0, u));
            s.sites[i].mats[1].scale(C64::from_polar(1.0, -u));
            s.split_site(i, 2, 2, &dec).unwrap();
        }
        let h = CMatrix::from_real_rows(&[&[FRAC_1_SQRT_2, FRAC_1_SQRT_2], &[FRAC_1_SQRT_2, -FRAC_1_SQRT_2]]);
        for i in 0..n {
            s.apply_single_site_gate(i, &h, true).unwrap();
        }
        s
    }

    fn max_diff(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_state_goes_to_uniform() {
        let s = MpsState::product_state(&[[ONE, ZERO]; 6]);
        let out = qft_contract(&s, &Serial, 1 << 30).unwrap();
        for v in out {
            assert!((v - C64::new(0.125, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn contraction_matches_dft_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [1, 3, 8] {
            let s = random_entangled(&mut rng, n);
            let input = s.to_dense(1 << 12).unwrap();
            let out = qft_contract(&s, &Serial, 1 << 30).unwrap();
            assert!(max_diff(&out, &dft(&input)) < 1e-12, "n = {n}");
            let mut rev = s.clone();
            rev.reverse();
            let out_rev = qft_contract(&rev, &Serial, 1 << 30).unwrap();
            assert!(max_diff(&out, &out_rev) < 1e-12);
        }
    }

    #[test]
    fn nearest_neighbour_matches_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for method in [SplitMethod::Svd, SplitMethod::Rrqr] {
            let s = random_entangled(&mut rng, 6);
            let input = s.to_dense(1 << 12).unwrap();
            let out = qft_nearest_neighbour(&s, &Decomposer::serial(method)).unwrap();
            let dense = out.to_dense(1 << 12).unwrap();
            assert!(max_diff(&dense, &dft(&input)) < 1e-10, "{method:?}");
        }
    }

    #[test]
    fn standard_circuit_matches_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for method in [SplitMethod::Svd, SplitMethod::Rrqr] {
            let s = random_entangled(&mut rng, 6);
            let input = s.to_dense(1 << 12).unwrap();
            let out = qft_standard(&s, &Decomposer::serial(method)).unwrap();
            let dense = out.to_dense(1 << 12).unwrap();
            assert!(max_diff(&dense, &dft(&input)) < 1e-10, "{method:?}");
        }
    }

    #[test]
    fn basis_input_keeps_small_bonds() {
        // The transform of a basis state is a product state.
        let dec = Decomposer::serial(SplitMethod::Svd);
        for x in 0..32u32 {
            let qubits: Vec<[C64; 2]> = (0..5)
                .map(|t| if x >> t & 1 == 1 { [ZERO, ONE] } else { [ONE, ZERO] })
                .collect();
            let s = MpsState::product_state(&qubits);
            for out in [qft_nearest_neighbour(&s, &dec).unwrap(), qft_standard(&s, &dec).unwrap()] {
                assert!(out.max_bond() <= 2, "x = {x}: {:?}", out.bond_dims());
            }
        }
    }

    #[test]
    fn capacity_is_enforced() {
        let s = MpsState::product_state(&[[ONE, ZERO]; 10]);
        assert!(matches!(
            qft_contract(&s, &Serial, 1000),
            Err(CircuitError::Capacity { .. })
        ));
    }
}
