//! Measurement of the lower register.
//!
//! The probability of lower value `b` is `R_b† E R_b` where `E` is built from
//! the left: `E <- sum_a A_a† E A_a` over every site before the register.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matlin::{CMatrix, ZERO};
use crate::mps::{Decomposer, MpsState, SiteLabel};

use super::CircuitError;

/// Allowed deviation of the total probability from one.
pub const NORM_TOLERANCE: f64 = 1e-8;
/// Smallest probability a forced outcome may have.
pub const MIN_FORCED_PROBABILITY: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Draw from the distribution with a generator seeded by this value.
    Sample(u64),
    /// Project onto this lower-register value.
    Forced(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerMeasurement {
    pub value: u64,
    pub probability: f64,
}

/// Deterministic inverse-CDF sampler over a discrete distribution.
#[derive(Debug, Clone)]
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Index drawn with probability proportional to `probs[index]`.
    pub fn draw(&mut self, probs: &[f64]) -> Result<usize, CircuitError> {
        let total: f64 = probs.iter().sum();
        if !total.is_finite() || (total - 1.0).abs() > NORM_TOLERANCE {
            return Err(CircuitError::Unnormalized { total });
        }
        let u = self.rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut last_positive = None;
        for (i, &p) in probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            last_positive = Some(i);
            if u < acc {
                return Ok(i);
            }
        }
        last_positive.ok_or(CircuitError::Unnormalized { total })
    }
}

/// One draw from `probs` with a fresh generator.
pub fn sample_upper(probs: &[f64], seed: u64) -> Result<usize, CircuitError> {
    Sampler::new(seed).draw(probs)
}

fn lower_site(state: &MpsState) -> Result<usize, CircuitError> {
    let pos = state.sites.len().checked_sub(1).ok_or(CircuitError::LowerNotRightmost)?;
    if state.sites[pos].label() != Some(&SiteLabel::Lower) || state.lower.is_none() {
        return Err(CircuitError::LowerNotRightmost);
    }
    Ok(pos)
}

/// Probability of each stored lower value, in sparse-basis order.
pub fn lower_distribution(
    state: &MpsState,
    dec: &Decomposer<'_>,
) -> Result<Vec<(u64, f64)>, CircuitError> {
    let r_pos = lower_site(state)?;
    let mut env = CMatrix::identity(1);
    for site in &state.sites[..r_pos] {
        let d = site.bond_right();
        let mut next = CMatrix::zeros(d, d);
        for m in &site.mats {
            let t = dec.backend.matmul(&env, m)?;
            let term = dec.backend.matmul(&m.adjoint(), &t)?;
            for (x, y) in next.as_mut_slice().iter_mut().zip(term.as_slice()) {
                *x += y;
            }
        }
        env = next;
    }
    let scale = state.global_norm * state.global_norm;
    let values = state.lower.as_ref().unwrap().values();
    let mut out = Vec::with_capacity(values.len());
    for (col, &value) in state.sites[r_pos].mats.iter().zip(values) {
        let mut acc = ZERO;
        let v = col.as_slice();
        for (r, &vr) in v.iter().enumerate() {
            if vr == ZERO {
                continue;
            }
            let erow = env.row(r);
            let mut inner = ZERO;
            for (e, vc) in erow.iter().zip(v) {
                inner += e * vc;
            }
            acc += vr.conj() * inner;
        }
        out.push((value, acc.re * scale));
    }
    let total: f64 = out.iter().map(|p| p.1).sum();
    if (total - 1.0).abs() > NORM_TOLERANCE {
        return Err(CircuitError::NormDrift {
            stage: "lower-register measurement",
            total,
        });
    }
    Ok(out)
}

/// Measures the lower register, projects onto the result, removes the
/// register from the chain and compresses the remaining upper register.
pub fn measure_lower_register(
    state: &mut MpsState,
    outcome: Outcome,
    dec: &Decomposer<'_>,
) -> Result<LowerMeasurement, CircuitError> {
    let dist = lower_distribution(state, dec)?;
    let column = match outcome {
        Outcome::Sample(seed) => {
            let probs: Vec<f64> = dist.iter().map(|p| p.1).collect();
            sample_upper(&probs, seed)?
        }
        Outcome::Forced(b) => {
            let col = state.lower.as_ref().unwrap().position(b);
            let p = col.map_or(0.0, |c| dist[c].1);
            if p < MIN_FORCED_PROBABILITY {
                return Err(CircuitError::InvalidProjection {
                    value: b,
                    probability: p,
                });
            }
            col.unwrap()
        }
    };
    let (value, probability) = dist[column];
    project_lower(state, column, probability, dec)?;
    Ok(LowerMeasurement { value, probability })
}

fn project_lower(
    state: &mut MpsState,
    column: usize,
    probability: f64,
    dec: &Decomposer<'_>,
) -> Result<(), CircuitError> {
    let r_pos = lower_site(state)?;
    if r_pos == 0 {
        return Err(CircuitError::LowerNotRightmost);
    }
    let r_site = state.sites.remove(r_pos);
    let vector = &r_site.mats[column];
    let last = &mut state.sites[r_pos - 1];
    let mut mats = Vec::with_capacity(last.dim());
    for m in &last.mats {
        mats.push(dec.backend.matmul(m, vector)?);
    }
    last.mats = mats;
    state.lower = None;
    state.global_norm /= probability.sqrt();
    state.sweep_compress(dec)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{run_controlled_u_phase, validate_instance, GateOrder};
    use super::*;
    use crate::matlin::{Serial, SplitMethod};

    #[test]
    fn point_mass_always_sampled() {
        let probs = [0.0, 0.0, 1.0, 0.0];
        for seed in 0..20 {
            assert_eq!(sample_upper(&probs, seed).unwrap(), 2);
        }
        assert!(sample_upper(&[0.5, 0.4], 1).is_err());
    }

    #[test]
    fn fifteen_has_four_equal_outcomes() {
        let inst = validate_instance(15, 7).unwrap();
        let dec = Decomposer::serial(SplitMethod::Rrqr);
        let (state, _) = run_controlled_u_phase(&inst, GateOrder::Decreasing, &dec).unwrap();
        let dist = lower_distribution(&state, &dec).unwrap();
        let mut values: Vec<u64> = dist.iter().map(|p| p.0).collect();
        values.sort_unstable();
        assert_eq!(values, vec![1, 4, 7, 13]);
        for (_, p) in &dist {
            assert!((p - 0.25).abs() < 1e-12);
        }
        let mut s = state.clone();
        let m = measure_lower_register(&mut s, Outcome::Forced(7), &dec).unwrap();
        assert_eq!(m.value, 7);
        assert!(s.lower.is_none());
        assert!((s.norm_squared(&Serial).unwrap() - 1.0).abs() < 1e-10);
        let mut s = state.clone();
        assert!(matches!(
            measure_lower_register(&mut s, Outcome::Forced(2), &dec),
            Err(CircuitError::InvalidProjection { .. })
        ));
    }
}
