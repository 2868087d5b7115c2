//! The controlled modular multiplications of the order-finding circuit.
//!
//! Every control qubit starts in `|0>`, so its matrices are scalars. Before
//! its gate it is commuted to the left of the lower register `R` for free.
//! The Hadamard on the control, the contraction with `R`, the controlled
//! multiplication and the rearrangement into one matrix happen in one step,
//! and the result is split with the trivial decomposition.

use serde::{Deserialize, Serialize};

use crate::matlin::{trivial_decompose, CMatrix, C64, ONE, ZERO};
use crate::mps::{Decomposer, MpsState, RankTrace, SiteLabel, SiteTensor};

use super::classical::mulmod;
use super::{CircuitError, ShorInstance};

/// Order in which the exponents `2^i` are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateOrder {
    Increasing,
    Decreasing,
}

impl GateOrder {
    /// Exponent indices `i` (gate `U^(2^i)`) in application order.
    pub fn schedule(self, steps: usize) -> Vec<usize> {
        match self {
            Self::Increasing => (0..steps).collect(),
            Self::Decreasing => (0..steps).rev().collect(),
        }
    }
}

impl std::str::FromStr for GateOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "increasing" => Ok(Self::Increasing),
            "decreasing" => Ok(Self::Decreasing),
            other => Err(format!("unknown gate order `{other}`")),
        }
    }
}

impl std::fmt::Display for GateOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Increasing => "increasing",
            Self::Decreasing => "decreasing",
        })
    }
}

pub fn gate_label(i: usize) -> String {
    format!("U^{}", 1u128 << i)
}

/// `|0...0>|1>` on `2l` control qubits and the lower register.
pub fn initial_state(inst: &ShorInstance) -> MpsState {
    MpsState::basis_state(&vec![0; inst.upper_qubits()], 1, inst.l)
        .expect("1 fits in any register")
}

/// Applies `H` to control qubit `q_i` followed by the controlled
/// multiplication of the lower register by `x^(2^i) mod N`.
///
/// On return `q_i` sits directly left of the lower register.
pub fn apply_controlled_u_step(
    state: &mut MpsState,
    inst: &ShorInstance,
    i: usize,
    dec: &Decomposer<'_>,
) -> Result<(), CircuitError> {
    let n_sites = state.sites.len();
    let r_pos = n_sites - 1;
    if state.sites[r_pos].label() != Some(&SiteLabel::Lower) {
        return Err(CircuitError::LowerNotRightmost);
    }
    let q_label = SiteLabel::Qubit(i);
    let q_pos = state
        .position_of(&q_label)
        .ok_or(CircuitError::UnknownControl(i))?;
    match state.sites[q_pos].scalar_coefficients().as_deref() {
        Some([c0, c1]) if *c0 == ONE && *c1 == ZERO => {}
        _ => return Err(CircuitError::ControlReused(i)),
    }
    state.move_site(q_pos, r_pos - 1, dec)?;

    let h = std::f64::consts::FRAC_1_SQRT_2;
    // H|0> gives equal weights on both branches.
    let coeffs = [C64::new(h, 0.0), C64::new(h, 0.0)];
    let y = inst.pow_table[i];

    let lower = state.lower.as_mut().ok_or(CircuitError::LowerNotRightmost)?;
    let old_values: Vec<u64> = lower.values().to_vec();
    let targets: Vec<usize> = old_values
        .iter()
        .map(|&b| lower.insert(mulmod(b, y, inst.n)))
        .collect();
    let width = lower.len();

    let r_site = &state.sites[r_pos];
    let bond = r_site.bond_left();
    let mut arranged = CMatrix::zeros(2 * bond, width);
    for (j, col) in r_site.mats.iter().enumerate() {
        for r in 0..bond {
            let v = col[(r, 0)];
            if v != ZERO {
                arranged[(r, j)] = coeffs[0] * v;
                arranged[(bond + r, targets[j])] = coeffs[1] * v;
            }
        }
    }

    let (left, right) = trivial_decompose(&arranged);
    let k = left.cols();
    let q_mats = vec![left.submatrix(0, 0, bond, k), left.submatrix(bond, 0, bond, k)];
    let r_mats = (0..width).map(|b| right.submatrix(0, b, k, 1)).collect();
    state.sites[r_pos - 1] = SiteTensor::new(q_label, q_mats);
    state.sites[r_pos] = SiteTensor::new(SiteLabel::Lower, r_mats);
    Ok(())
}

/// Applies all `2l` controlled multiplications, recording the bond
/// dimensions after each one.
pub fn run_controlled_u_phase(
    inst: &ShorInstance,
    order: GateOrder,
    dec: &Decomposer<'_>,
) -> Result<(MpsState, RankTrace), CircuitError> {
    let mut state = initial_state(inst);
    let mut trace = RankTrace::default();
    for i in order.schedule(inst.upper_qubits()) {
        apply_controlled_u_step(&mut state, inst, i, dec)?;
        trace.push(gate_label(i), state.bond_dims());
    }
    Ok((state, trace))
}

/// Bond dimensions and storage of the controlled-multiplication phase,
/// derived from the lower-register value sets alone (no matrices).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub trace: RankTrace,
    /// Complex scalars held by the chain after the last step.
    pub stored_scalars: u64,
    /// Largest number held after any step.
    pub peak_stored_scalars: u64,
    /// Size of the lower register's sparse basis after the last step.
    pub lower_values: usize,
}

pub fn plan_controlled_u_phase(inst: &ShorInstance, order: GateOrder) -> PhasePlan {
    let steps = inst.upper_qubits();
    let mut values: Vec<u64> = vec![1];
    let mut seen = std::collections::HashSet::from([1u64]);
    let mut used_bonds: Vec<usize> = Vec::new();
    let mut trace = RankTrace::default();
    let mut peak = 0u64;
    let mut stored = 0u64;
    for (t, i) in order.schedule(steps).into_iter().enumerate() {
        let y = inst.pow_table[i];
        let count = values.len();
        for j in 0..count {
            let v = mulmod(values[j], y, inst.n);
            if seen.insert(v) {
                values.push(v);
            }
        }
        let left = used_bonds.last().copied().unwrap_or(1);
        used_bonds.push((2 * left).min(values.len()));
        let untouched = steps - t - 1;
        let mut bonds = vec![1; untouched + 1];
        bonds.extend(&used_bonds);
        bonds.push(1);
        // Untouched qubits hold two 1x1 scalars; used qubit j holds two
        // bond_left x bond_right matrices; the lower site one column per value.
        let mut total = 2 * untouched as u64;
        let mut prev = 1u64;
        for &b in &used_bonds {
            total += 2 * prev * b as u64;
            prev = b as u64;
        }
        total += prev * values.len() as u64;
        stored = total;
        peak = peak.max(total);
        trace.push(gate_label(i), bonds);
    }
    PhasePlan {
        trace,
        stored_scalars: stored,
        peak_stored_scalars: peak,
        lower_values: values.len(),
    }
}
