//! Dense state-vector simulation of the same circuit, gate by gate.
//!
//! Basis index convention matches [`MpsState::to_dense`]: upper qubit `t` is
//! bit `t`, and the lower register's value sits above the upper bits.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::classical::mulmod;
use crate::circuit::{
    lower_distribution, measure_lower_register, probabilities, qft_contract, run_controlled_u_phase,
    CircuitError, GateOrder, Outcome, ShorInstance,
};
use crate::matlin::{C64, ONE, ZERO};
use crate::mps::{Decomposer, MpsError, MpsState};

/// Default limit on the number of qubits.
pub const DEFAULT_QUBIT_CAP: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{qubits} qubits exceed the oracle cap of {cap}")]
    Capacity { qubits: usize, cap: usize },
    #[error("states have {left} and {right} amplitudes")]
    Shape { left: usize, right: usize },
    #[error("qubit {qubit} out of range for {n} qubits")]
    QubitOutOfRange { qubit: usize, n: usize },
    #[error("outcome {value} has probability {probability:e}")]
    InvalidProjection { value: u64, probability: f64 },
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    pub n_qubits: usize,
    pub amps: Vec<C64>,
}

impl DenseState {
    /// `|0...0>` on `n` qubits.
    pub fn zero(n: usize, cap: usize) -> Result<Self, OracleError> {
        Self::basis(n, 0, cap)
    }

    pub fn basis(n: usize, index: usize, cap: usize) -> Result<Self, OracleError> {
        if n > cap {
            return Err(OracleError::Capacity { qubits: n, cap });
        }
        let mut amps = vec![ZERO; 1 << n];
        amps[index] = ONE;
        Ok(Self { n_qubits: n, amps })
    }

    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self, OracleError> {
        if !amps.len().is_power_of_two() {
            return Err(OracleError::Shape {
                left: amps.len(),
                right: amps.len().next_power_of_two(),
            });
        }
        Ok(Self {
            n_qubits: amps.len().trailing_zeros() as usize,
            amps,
        })
    }

    pub fn norm_squared(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    fn check(&self, q: usize) -> Result<(), OracleError> {
        if q >= self.n_qubits {
            return Err(OracleError::QubitOutOfRange {
                qubit: q,
                n: self.n_qubits,
            });
        }
        Ok(())
    }

    pub fn apply_h(&mut self, q: usize) -> Result<(), OracleError> {
        self.check(q)?;
        let bit = 1usize << q;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let (a, b) = (self.amps[i], self.amps[i | bit]);
                self.amps[i] = (a + b) * FRAC_1_SQRT_2;
                self.amps[i | bit] = (a - b) * FRAC_1_SQRT_2;
            }
        }
        Ok(())
    }

    /// Multiplies every basis state with both bits set by `exp(i angle)`.
    pub fn apply_controlled_phase(&mut self, a: usize, b: usize, angle: f64) -> Result<(), OracleError> {
        self.check(a)?;
        self.check(b)?;
        let mask = (1usize << a) | (1usize << b);
        let w = C64::from_polar(1.0, angle);
        for (i, v) in self.amps.iter_mut().enumerate() {
            if i & mask == mask {
                *v *= w;
            }
        }
        Ok(())
    }

    pub fn apply_swap(&mut self, a: usize, b: usize) -> Result<(), OracleError> {
        self.check(a)?;
        self.check(b)?;
        if a == b {
            return Ok(());
        }
        let (ba, bb) = (1usize << a, 1usize << b);
        for i in 0..self.amps.len() {
            if i & ba != 0 && i & bb == 0 {
                self.amps.swap(i, i ^ ba ^ bb);
            }
        }
        Ok(())
    }

    /// Controlled multiplication of the register in bits `offset..offset+width`
    /// by `y mod n` when bit `control` is set. Register values `>= n` are left alone.
    pub fn apply_controlled_mulmod(
        &mut self,
        control: usize,
        offset: usize,
        width: usize,
        y: u64,
        n: u64,
    ) -> Result<(), OracleError> {
        self.check(control)?;
        self.check(offset + width - 1)?;
        let mask = (1usize << width) - 1;
        let mut out = vec![ZERO; self.amps.len()];
        for (i, &v) in self.amps.iter().enumerate() {
            if v == ZERO {
                continue;
            }
            let j = if i & (1 << control) != 0 {
                let b = ((i >> offset) & mask) as u64;
                if b < n {
                    (i & !(mask << offset)) | ((mulmod(b, y, n) as usize) << offset)
                } else {
                    i
                }
            } else {
                i
            };
            out[j] += v;
        }
        self.amps = out;
        Ok(())
    }
}

/// The state after the controlled multiplications: `2l` upper qubits put in
/// superposition by `H`, then `U^(2^i)` on the lower register controlled by
/// upper qubit `i`. The lower register starts in `|1>`.
pub fn sv_order_finding(inst: &ShorInstance, cap: usize) -> Result<DenseState, OracleError> {
    let upper = inst.upper_qubits();
    let l = inst.l as usize;
    let mut s = DenseState::basis(upper + l, 1 << upper, cap)?;
    for t in 0..upper {
        s.apply_h(t)?;
    }
    for i in 0..upper {
        s.apply_controlled_mulmod(i, upper, l, inst.pow_table[i], inst.n)?;
    }
    Ok(s)
}

/// Projects the register above the lowest `upper` bits onto `value` and
/// returns the renormalised upper state with the outcome probability.
pub fn sv_measure(state: &DenseState, upper: usize, value: u64) -> Result<(DenseState, f64), OracleError> {
    let size = 1usize << upper;
    let base = (value as usize) << upper;
    if base + size > state.amps.len() {
        return Err(OracleError::InvalidProjection { value, probability: 0.0 });
    }
    let slice = &state.amps[base..base + size];
    let p: f64 = slice.iter().map(|a| a.norm_sqr()).sum();
    if p < 1e-12 {
        return Err(OracleError::InvalidProjection { value, probability: p });
    }
    let s = 1.0 / p.sqrt();
    let amps = slice.iter().map(|a| a * s).collect();
    Ok((DenseState { n_qubits: upper, amps }, p))
}

/// Probability of every value of the register above the lowest `upper` bits.
pub fn sv_lower_distribution(state: &DenseState, upper: usize) -> Vec<f64> {
    state
        .amps
        .chunks(1 << upper)
        .map(|c| c.iter().map(|a| a.norm_sqr()).sum())
        .collect()
}

/// QFT on all qubits by the textbook circuit: `H` and controlled phases
/// `exp(i pi / 2^k)`, then the reversing swaps. Computes
/// `out[y] = 2^(-n/2) sum_x exp(2 pi i x y / 2^n) in[x]`.
pub fn sv_qft(state: &DenseState) -> Result<DenseState, OracleError> {
    let mut s = state.clone();
    let n = s.n_qubits;
    for j in (0..n).rev() {
        s.apply_h(j)?;
        for k in (0..j).rev() {
            s.apply_controlled_phase(j, k, PI / (1u64 << (j - k)) as f64)?;
        }
    }
    for q in 0..n / 2 {
        s.apply_swap(q, n - 1 - q)?;
    }
    Ok(s)
}

/// Inverse of [`sv_qft`]: the gates in reverse with conjugate phases.
pub fn sv_inverse_qft(state: &DenseState) -> Result<DenseState, OracleError> {
    let mut s = state.clone();
    let n = s.n_qubits;
    for q in 0..n / 2 {
        s.apply_swap(q, n - 1 - q)?;
    }
    for j in 0..n {
        for k in 0..j {
            s.apply_controlled_phase(j, k, -PI / (1u64 << (j - k)) as f64)?;
        }
        s.apply_h(j)?;
    }
    Ok(s)
}

/// Largest amplitude deviation and where it occurs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub max_abs_diff: f64,
    pub argmax: usize,
}

pub fn compare_amplitudes(a: &[C64], b: &[C64]) -> Result<Comparison, OracleError> {
    if a.len() != b.len() {
        return Err(OracleError::Shape {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut best = Comparison {
        max_abs_diff: 0.0,
        argmax: 0,
    };
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        let d = (x - y).norm();
        if d > best.max_abs_diff || d.is_nan() {
            best = Comparison {
                max_abs_diff: d,
                argmax: i,
            };
        }
    }
    Ok(best)
}

/// Compares every amplitude of an MPS with a dense state.
pub fn sv_compare(mps: &MpsState, dense: &DenseState) -> Result<Comparison, OracleError> {
    let amps = mps.to_dense(dense.amps.len().max(1))?;
    compare_amplitudes(&amps, &dense.amps)
}

/// Largest difference between two distributions.
pub fn max_prob_diff(a: &[f64], b: &[f64]) -> Result<f64, OracleError> {
    if a.len() != b.len() {
        return Err(OracleError::Shape {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// Deviations between the MPS pipeline and the dense simulation of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    /// Amplitudes after the controlled multiplications.
    pub pre_measurement: Comparison,
    /// Largest difference in lower-register outcome probabilities.
    pub lower_distribution: f64,
    /// The lower-register value projected onto.
    pub outcome: u64,
    /// Upper-register amplitudes after projection and compression.
    pub post_measurement: Comparison,
    /// Largest difference of the post-QFT distributions.
    pub post_qft: f64,
}

impl OracleComparison {
    pub fn max_deviation(&self) -> f64 {
        self.pre_measurement
            .max_abs_diff
            .max(self.lower_distribution)
            .max(self.post_measurement.max_abs_diff)
            .max(self.post_qft)
    }
}

/// Runs the MPS pipeline up to the QFT (contraction variant) with the lower
/// register forced to `outcome` (default: the value 1) and compares each
/// stage against the dense simulation. `corrupt` applies a stray `Z` after the
/// controlled multiplications, for checking that deviations are caught.
pub fn compare_with_oracle(
    inst: &ShorInstance,
    order: GateOrder,
    outcome: Option<u64>,
    dec: &Decomposer<'_>,
    cap: usize,
    corrupt: bool,
) -> Result<OracleComparison, OracleError> {
    let upper = inst.upper_qubits();
    let dense = sv_order_finding(inst, cap)?;
    let (mut state, _) = run_controlled_u_phase(inst, order, dec)?;
    if corrupt {
        // Z on the first site keeps the norm but flips half the amplitudes.
        state.sites[0].mats[1].scale(C64::new(-1.0, 0.0));
    }
    let pre_measurement = sv_compare(&state, &dense)?;

    let dense_lower = sv_lower_distribution(&dense, upper);
    let mps_lower = lower_distribution(&state, dec)?;
    let mut lower_dev: f64 = 0.0;
    let mut mps_full = vec![0.0; dense_lower.len()];
    for (b, p) in mps_lower {
        let slot = mps_full.get_mut(b as usize).ok_or(OracleError::Shape {
            left: b as usize,
            right: dense_lower.len(),
        })?;
        *slot = p;
    }
    for (a, b) in mps_full.iter().zip(&dense_lower) {
        lower_dev = lower_dev.max((a - b).abs());
    }

    let b = outcome.unwrap_or(1);
    measure_lower_register(&mut state, Outcome::Forced(b), dec)?;
    let (dense_upper, _) = sv_measure(&dense, upper, b)?;
    let post_measurement = sv_compare(&state, &dense_upper)?;

    let cap_bytes = (dense_upper.amps.len() as u64) * 4 * std::mem::size_of::<C64>() as u64;
    let mps_qft = probabilities(&qft_contract(&state, dec.backend, cap_bytes)?);
    let dense_qft = sv_qft(&dense_upper)?.probabilities();
    Ok(OracleComparison {
        pre_measurement,
        lower_distribution: lower_dev,
        outcome: b,
        post_measurement,
        post_qft: max_prob_diff(&mps_qft, &dense_qft)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::validate_instance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng, n: usize) -> DenseState {
        let mut amps: Vec<C64> = (0..1 << n)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let s = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amps {
            *a /= s;
        }
        DenseState::from_amplitudes(amps).unwrap()
    }

    fn dft(input: &[C64]) -> Vec<C64> {
        let q = input.len();
        (0..q)
            .map(|y| {
                let mut acc = ZERO;
                for (x, v) in input.iter().enumerate() {
                    acc += C64::from_polar(1.0, 2.0 * PI * ((x * y) % q) as f64 / q as f64) * v;
                }
                acc / (q as f64).sqrt()
            })
            .collect()
    }

    #[test]
    fn fifteen_has_uniform_support() {
        let inst = validate_instance(15, 7).unwrap();
        let s = sv_order_finding(&inst, DEFAULT_QUBIT_CAP).unwrap();
        let nonzero: Vec<usize> = (0..s.amps.len()).filter(|&i| s.amps[i].norm() > 1e-12).collect();
        assert_eq!(nonzero.len(), 256);
        for &i in &nonzero {
            assert!((s.amps[i] - C64::new(1.0 / 16.0, 0.0)).norm() < 1e-14);
            let (upper, lower) = (i & 0xff, i >> 8);
            let mut expect = 1u64;
            for _ in 0..upper {
                expect = expect * 7 % 15;
            }
            assert_eq!(lower as u64, expect);
        }
        assert!((s.norm_squared() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn qft_gates_equal_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for n in 1..=7 {
            let s = random_state(&mut rng, n);
            let out = sv_qft(&s).unwrap();
            let c = compare_amplitudes(&out.amps, &dft(&s.amps)).unwrap();
            assert!(c.max_abs_diff < 1e-12, "n = {n}");
            let back = sv_inverse_qft(&out).unwrap();
            assert!(compare_amplitudes(&back.amps, &s.amps).unwrap().max_abs_diff < 1e-10);
        }
        let delta = DenseState::zero(5, DEFAULT_QUBIT_CAP).unwrap();
        for a in sv_qft(&delta).unwrap().amps {
            assert!((a - C64::new(32f64.sqrt().recip(), 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn qft_matrix_is_unitary() {
        let n = 6;
        let cols: Vec<Vec<C64>> = (0..1 << n)
            .map(|i| sv_qft(&DenseState::basis(n, i, DEFAULT_QUBIT_CAP).unwrap()).unwrap().amps)
            .collect();
        for (i, a) in cols.iter().enumerate() {
            for (j, b) in cols.iter().enumerate() {
                let dot: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
                let expect = if i == j { ONE } else { ZERO };
                assert!((dot - expect).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn fifteen_peaks_at_multiples_of_64() {
        let inst = validate_instance(15, 7).unwrap();
        let s = sv_order_finding(&inst, DEFAULT_QUBIT_CAP).unwrap();
        let dist = sv_lower_distribution(&s, 8);
        for v in [1, 7, 4, 13] {
            assert!((dist[v] - 0.25).abs() < 1e-12);
        }
        let (upper, p) = sv_measure(&s, 8, 4).unwrap();
        assert!((p - 0.25).abs() < 1e-12);
        let probs = sv_qft(&upper).unwrap().probabilities();
        for (m, p) in probs.iter().enumerate() {
            let expect = if m % 64 == 0 { 0.25 } else { 0.0 };
            assert!((p - expect).abs() < 1e-12);
        }
        assert!(sv_measure(&s, 8, 2).is_err());
    }

    #[test]
    fn comparison_finds_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let s = random_state(&mut rng, 5);
        assert_eq!(compare_amplitudes(&s.amps, &s.amps).unwrap().max_abs_diff, 0.0);
        let mut t = s.clone();
        t.amps[19] += C64::new(1e-3, 0.0);
        let c = compare_amplitudes(&s.amps, &t.amps).unwrap();
        assert_eq!(c.argmax, 19);
        assert!(compare_amplitudes(&s.amps, &s.amps[1..]).is_err());
    }

    #[test]
    fn pipeline_agrees_on_fifteen() {
        let inst = validate_instance(15, 7).unwrap();
        let dec = Decomposer::serial(crate::matlin::SplitMethod::Rrqr);
        for order in [GateOrder::Increasing, GateOrder::Decreasing] {
            let c = compare_with_oracle(&inst, order, Some(4), &dec, DEFAULT_QUBIT_CAP, false).unwrap();
            assert!(c.max_deviation() < 1e-9, "{c:?}");
        }
        let c = compare_with_oracle(&inst, GateOrder::Decreasing, None, &dec, DEFAULT_QUBIT_CAP, true).unwrap();
        assert!(c.pre_measurement.max_abs_diff > 1e-6);
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(DenseState::zero(25, 24), Err(OracleError::Capacity { .. })));
        let inst = validate_instance(511, 2).unwrap();
        assert!(sv_order_finding(&inst, DEFAULT_QUBIT_CAP).is_err());
    }
}
