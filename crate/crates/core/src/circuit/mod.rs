//! The order-finding circuit on a matrix product state: controlled modular
//! multiplications, measurement of the lower register, Fourier transform of
//! the upper register and classical post-processing.

pub mod classical;
mod controlled_u;
mod instance;
mod measure;
mod pipeline;
mod qft;

use thiserror::Error;

use crate::matlin::LinalgError;
use crate::mps::MpsError;

pub use controlled_u::{
    apply_controlled_u_step, gate_label, initial_state, plan_controlled_u_phase,
    run_controlled_u_phase, GateOrder, PhasePlan,
};
pub use instance::{
    bit_length, order_is_usable, select_base, validate_instance, validate_modulus, InstanceError,
    ShorInstance, MAX_BITS,
};
pub use measure::{
    lower_distribution, measure_lower_register, sample_upper, LowerMeasurement, Outcome, Sampler,
    MIN_FORCED_PROBABILITY, NORM_TOLERANCE,
};
pub use pipeline::{
    run_pipeline, ClusterReport, FailureReason, PipelineConfig, PipelineOutput, RunReport,
    SampleRecord, StorageReport, Timings, DEFAULT_BASE_BUDGET, DEFAULT_MAX_SAMPLES,
    DEFAULT_MEMORY_CAP,
};
pub use qft::{
    msb_first_chain, probabilities, qft_contract, qft_nearest_neighbour, qft_standard, QftVariant,
};

pub(crate) use qft::{absorb_bytes, qft_phase};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error("control qubit q_{0} has already been used")]
    ControlReused(usize),
    #[error("control qubit q_{0} is not part of the chain")]
    UnknownControl(usize),
    #[error("the lower register must be the rightmost site")]
    LowerNotRightmost,
    #[error("the lower register has not been measured out")]
    LowerPresent,
    #[error("the chain is not ordered by qubit index")]
    UnsupportedOrdering,
    #[error("total probability {total} after {stage} deviates from 1")]
    NormDrift { stage: &'static str, total: f64 },
    #[error("distribution sums to {total}, not 1")]
    Unnormalized { total: f64 },
    #[error("cannot project onto lower value {value} with probability {probability:e}")]
    InvalidProjection { value: u64, probability: f64 },
    #[error("{stage} needs {needed_bytes} bytes, above the cap of {cap_bytes}")]
    Capacity {
        stage: &'static str,
        needed_bytes: u128,
        cap_bytes: u64,
    },
}

impl From<LinalgError> for CircuitError {
    fn from(e: LinalgError) -> Self {
        Self::Mps(MpsError::Linalg(e))
    }
}
