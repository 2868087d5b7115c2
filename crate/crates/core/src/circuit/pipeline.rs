//! End-to-end order finding: controlled multiplications, lower-register
//! measurement, QFT, sampling and classical post-processing.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::{distributed_qft_contract, Cluster, TransferStats, WorkerGrid};
use crate::matlin::{LinalgBackend, RankPolicy, Serial, SplitMethod};
use crate::mps::{Decomposer, MpsState, RankTrace};

use super::classical::{order_candidates, recover_factors, reduce_to_order, FactorFailure};
use super::{
    apply_controlled_u_step, gate_label, initial_state, measure_lower_register, probabilities,
    qft_contract, qft_nearest_neighbour, qft_standard, select_base, validate_instance, CircuitError,
    GateOrder, LowerMeasurement, Outcome, QftVariant, Sampler, ShorInstance, NORM_TOLERANCE,
};

/// Largest base tried when `x` is not given.
pub const DEFAULT_BASE_BUDGET: u64 = 64;
/// Default memory cap for the QFT stage: 4 GiB.
pub const DEFAULT_MEMORY_CAP: u64 = 4 << 30;
pub const DEFAULT_MAX_SAMPLES: usize = 10;

/// Everything needed to run one pipeline. Field names match the CLI flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub n: u64,
    /// Base; when absent the base with the largest usable order up to
    /// `base_budget` is chosen.
    pub x: Option<u64>,
    pub order: GateOrder,
    pub qft: QftVariant,
    pub seed: u64,
    /// Worker count; when absent everything runs serially.
    pub nproc: Option<usize>,
    pub memory_cap_bytes: u64,
    /// Project the lower register onto this value instead of sampling it.
    pub force_outcome: Option<u64>,
    pub max_samples: usize,
    pub base_budget: u64,
    pub policy: RankPolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n: 15,
            x: None,
            order: GateOrder::Decreasing,
            qft: QftVariant::Contract,
            seed: 0,
            nproc: None,
            memory_cap_bytes: DEFAULT_MEMORY_CAP,
            force_outcome: None,
            max_samples: DEFAULT_MAX_SAMPLES,
            base_budget: DEFAULT_BASE_BUDGET,
            policy: RankPolicy::default(),
        }
    }
}

impl PipelineConfig {
    pub fn new(n: u64) -> Self {
        Self {
            n,
            ..Self::default()
        }
    }

    /// The validated instance, choosing a base if none was given.
    pub fn instance(&self) -> Result<ShorInstance, CircuitError> {
        let x = match self.x {
            Some(x) => x,
            None => select_base(self.n, self.base_budget)?,
        };
        Ok(validate_instance(self.n, x)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureReason {
    /// The recovered order is odd.
    OddOrder { r: u64 },
    /// The recovered order gives `x^(r/2) = -1 (mod N)`.
    TrivialRoot { r: u64 },
    /// No sample led to a verified order.
    NoOrderFound { samples: usize },
}

impl std::fmt::Display for FailureReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::OddOrder { r } => write!(f, "order {r} is odd"),
            Self::TrivialRoot { r } => write!(f, "order {r} gives a trivial square root of unity"),
            Self::NoOrderFound { samples } => write!(f, "no order found in {samples} samples"),
        }
    }
}

/// One sampled upper-register value and what continued fractions made of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub m: u64,
    /// Convergent denominators of `m / 2^(2l)` below `N`.
    pub convergents: Vec<u64>,
    /// Candidates with `x^c = 1 (mod N)`.
    pub verified: Vec<u64>,
}

/// Counts of stored complex scalars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageReport {
    pub after_controlled_u: u64,
    /// Largest count at any point before the QFT.
    pub peak_before_qft: u64,
    pub after_measurement: u64,
    /// Amplitudes held after the QFT.
    pub after_qft: u64,
}

/// Stage timings in seconds; `t_total` covers the three quantum stages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub t_u: f64,
    pub t_meas: f64,
    pub t_qft: f64,
    pub t_total: f64,
}

/// Communication of a run on a [`Cluster`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub nproc: usize,
    pub grid: WorkerGrid,
    pub transfers: TransferStats,
    pub qft_transfers: TransferStats,
    /// Bytes moved by the phase and Hadamard gates of the QFT.
    pub qft_local_gate_bytes: u64,
    /// Entries of the final qudit held by each worker.
    pub qft_entries_per_worker: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub n: u64,
    pub x: u64,
    pub l: u32,
    pub gate_order: GateOrder,
    pub qft: QftVariant,
    pub seed: u64,
    pub compression: SplitMethod,
    /// Order of `x` computed classically, for reference.
    pub classical_order: u64,
    pub order_found: Option<u64>,
    pub lower: LowerMeasurement,
    pub samples: Vec<SampleRecord>,
    pub factors: Option<[u64; 2]>,
    pub failure: Option<FailureReason>,
    pub rank_trace: RankTrace,
    /// Bonds of the upper register after measurement and compression.
    pub measured_bonds: Vec<usize>,
    pub storage: StorageReport,
    pub cluster: Option<ClusterReport>,
    pub timings: Timings,
}

impl RunReport {
    pub fn succeeded(&self) -> bool {
        self.factors.is_some()
    }

    /// The report as JSON with the timing fields zeroed.
    pub fn to_json_without_timings(&self) -> String {
        let mut r = self.clone();
        r.timings = Timings::default();
        serde_json::to_string_pretty(&r).expect("report serialises")
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: RunReport,
    /// Probability of each upper-register value after the QFT.
    pub distribution: Vec<f64>,
}

fn qft_amplitudes(
    variant: QftVariant,
    state: &MpsState,
    dec: &Decomposer<'_>,
    cluster: Option<&Cluster>,
    cap: u64,
) -> Result<(Vec<crate::matlin::C64>, Option<crate::blocks::DistributedQft>), CircuitError> {
    let n = state.sites.len();
    let dense_bytes = (1u128 << n) * std::mem::size_of::<crate::matlin::C64>() as u128;
    let to_dense = |s: MpsState| -> Result<Vec<_>, CircuitError> {
        if dense_bytes > cap as u128 {
            return Err(CircuitError::Capacity {
                stage: "qft",
                needed_bytes: dense_bytes,
                cap_bytes: cap,
            });
        }
        Ok(s.to_dense(1usize << n)?)
    };
    match (variant, cluster) {
        (QftVariant::Contract, Some(c)) => {
            let out = distributed_qft_contract(c, state, cap)?;
            Ok((out.amplitudes.clone(), Some(out)))
        }
        (QftVariant::Contract, None) => Ok((qft_contract(state, dec.backend, cap)?, None)),
        (QftVariant::Nn, _) => Ok((to_dense(qft_nearest_neighbour(state, dec)?)?, None)),
        (QftVariant::Standard, _) => Ok((to_dense(qft_standard(state, dec)?)?, None)),
    }
}

/// Runs the full pipeline. Rejected instances and capacity problems are
/// errors; algorithmic failures (no order, odd order, trivial root) are
/// reported in [`RunReport::failure`].
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutput, CircuitError> {
    let inst = config.instance()?;
    let cluster = match config.nproc {
        Some(p) => Some(Cluster::new(p).map_err(|e| {
            CircuitError::from(crate::matlin::LinalgError::Backend(e.to_string()))
        })?),
        None => None,
    };
    let (backend, method): (&dyn LinalgBackend, SplitMethod) = match &cluster {
        Some(c) => (c, SplitMethod::Svd),
        None => (&Serial, SplitMethod::Rrqr),
    };
    let dec = Decomposer::new(backend, method, config.policy);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lower_seed: u64 = rng.gen();
    let upper_seed: u64 = rng.gen();

    let start = Instant::now();
    let mut state = initial_state(&inst);
    let mut trace = RankTrace::default();
    let mut peak = state.stored_scalars() as u64;
    for i in config.order.schedule(inst.upper_qubits()) {
        apply_controlled_u_step(&mut state, &inst, i, &dec)?;
        trace.push(gate_label(i), state.bond_dims());
        peak = peak.max(state.stored_scalars() as u64);
    }
    let after_u = state.stored_scalars() as u64;
    let t_u = Instant::now();

    let outcome = match config.force_outcome {
        Some(b) => Outcome::Forced(b),
        None => Outcome::Sample(lower_seed),
    };
    let lower = measure_lower_register(&mut state, outcome, &dec)?;
    let after_meas = state.stored_scalars() as u64;
    let measured_bonds = state.bond_dims();
    let t_meas = Instant::now();

    let qft_start = cluster.as_ref().map(|c| c.transfers());
    let (amplitudes, dist_qft) = qft_amplitudes(config.qft, &state, &dec, cluster.as_ref(), config.memory_cap_bytes)?;
    let t_qft = Instant::now();

    let distribution = probabilities(&amplitudes);
    drop(amplitudes);
    let total: f64 = distribution.iter().sum();
    if (total - 1.0).abs() > NORM_TOLERANCE {
        return Err(CircuitError::NormDrift { stage: "qft", total });
    }

    let q = inst.upper_dim();
    let mut sampler = Sampler::new(upper_seed);
    let mut samples = Vec::new();
    let mut order_found = None;
    let mut factors = None;
    let mut failure = None;
    for _ in 0..config.max_samples.max(1) {
        let m = sampler.draw(&distribution)? as u64;
        let cands = order_candidates(m, q, inst.n, inst.x);
        samples.push(SampleRecord {
            m,
            convergents: cands.denominators,
            verified: cands.verified.clone(),
        });
        let Some(&c) = cands.verified.first() else {
            continue;
        };
        let r = reduce_to_order(inst.x, inst.n, c);
        order_found = Some(r);
        match recover_factors(r, inst.x, inst.n) {
            Ok((a, b)) => factors = Some([a, b]),
            // Every further sample would recover the same order.
            Err(FactorFailure::OddOrder) => failure = Some(FailureReason::OddOrder { r }),
            Err(FactorFailure::TrivialRoot) => failure = Some(FailureReason::TrivialRoot { r }),
        }
        break;
    }
    if order_found.is_none() {
        failure = Some(FailureReason::NoOrderFound {
            samples: samples.len(),
        });
    }

    let secs = |a: Instant, b: Instant| b.duration_since(a).as_secs_f64();
    let timings = Timings {
        t_u: secs(start, t_u),
        t_meas: secs(t_u, t_meas),
        t_qft: secs(t_meas, t_qft),
        t_total: secs(start, t_qft),
    };
    let cluster_report = cluster.as_ref().map(|c| {
        let end = c.transfers();
        ClusterReport {
            nproc: c.n_proc(),
            grid: c.grid(),
            qft_transfers: end.since(qft_start.as_ref().unwrap()),
            transfers: end,
            qft_local_gate_bytes: dist_qft.as_ref().map_or(0, |d| d.local_gate_bytes),
            qft_entries_per_worker: dist_qft
                .as_ref()
                .map(|d| d.final_entries_per_worker.clone())
                .unwrap_or_default(),
        }
    });
    let report = RunReport {
        n: inst.n,
        x: inst.x,
        l: inst.l,
        gate_order: config.order,
        qft: config.qft,
        seed: config.seed,
        compression: method,
        classical_order: inst.order(),
        order_found,
        lower,
        samples,
        factors,
        failure,
        rank_trace: trace,
        measured_bonds,
        storage: StorageReport {
            after_controlled_u: after_u,
            peak_before_qft: peak.max(after_meas),
            after_measurement: after_meas,
            after_qft: distribution.len() as u64,
        },
        cluster: cluster_report,
        timings,
    };
    Ok(PipelineOutput {
        report,
        distribution,
    })
}
