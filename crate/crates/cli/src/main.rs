//! `shormps`: factor numbers with the MPS order-finding simulation, print
//! rank traces, compare against the dense oracle and time the stages.
//!
//! Exit codes: 0 success, 1 error (or oracle mismatch), 2 algorithmic
//! failure or rejected instance, 3 capacity exceeded, 64 usage error.

mod config;

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use shor_mps::blocks::Cluster;
use shor_mps::circuit::{
    plan_controlled_u_phase, run_controlled_u_phase, run_pipeline, CircuitError, PipelineConfig,
};
use shor_mps::matlin::{LinalgBackend, RankPolicy, Serial, SplitMethod};
use shor_mps::mps::{Decomposer, RankTrace};
use shor_mps::oracle::{compare_with_oracle, OracleError, DEFAULT_QUBIT_CAP};

use config::{Format, RunArgs, RunConfig};

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_FAILURE: u8 = 2;
const EXIT_CAPACITY: u8 = 3;
const EXIT_USAGE: u8 = 64;

/// Largest deviation from the oracle that `compare` accepts.
const COMPARE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "shormps", version, about = "Order finding on a matrix product state simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the full pipeline and report factors.
    Factor {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Bond dimensions after each controlled multiplication.
    Trace {
        #[command(flatten)]
        run: RunArgs,
        /// Derive the trace from the lower-register values only, without matrices.
        #[arg(long)]
        plan_only: bool,
    },
    /// Compare the MPS pipeline against the dense state-vector simulation.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, hide = true)]
        debug_corrupt: bool,
    },
    /// Stage timings, optionally for several worker counts.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        /// Worker counts to sweep, e.g. `1,2,4,8`.
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<usize>,
    },
}

/// An error together with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<CircuitError> for Failure {
    fn from(e: CircuitError) -> Self {
        let code = match e {
            CircuitError::Instance(_) => EXIT_FAILURE,
            CircuitError::Capacity { .. } => EXIT_CAPACITY,
            _ => EXIT_ERROR,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Circuit(c) => c.into(),
            OracleError::Capacity { .. } => Self {
                code: EXIT_CAPACITY,
                message: e.to_string(),
            },
            other => Self {
                code: EXIT_ERROR,
                message: other.to_string(),
            },
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: EXIT_ERROR,
            message: e.to_string(),
        }
    }
}

fn emit(cfg: &RunConfig, text: &str) -> Result<(), Failure> {
    match &cfg.out {
        Some(path) => std::fs::write(path, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable");
    s.push('\n');
    s
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Failure {
            code: EXIT_ERROR,
            message: e.to_string(),
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Failure {
        code: EXIT_ERROR,
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn require_n(cfg: &RunConfig) -> Result<u64, Failure> {
    cfg.n.ok_or_else(|| Failure::usage("--n is required (flag, SHORMPS_N or config file)"))
}

fn with_backend<R>(
    nproc: Option<usize>,
    f: impl FnOnce(&dyn LinalgBackend, SplitMethod) -> Result<R, Failure>,
) -> Result<R, Failure> {
    match nproc {
        Some(p) => {
            let cluster = Cluster::new(p).map_err(|e| Failure::usage(e.to_string()))?;
            f(&cluster, SplitMethod::Svd)
        }
        None => f(&Serial, SplitMethod::Rrqr),
    }
}

fn cmd_factor(cfg: &RunConfig) -> Result<u8, Failure> {
    let n = require_n(cfg)?;
    let out = match run_pipeline(&cfg.pipeline(n)) {
        Ok(out) => out,
        Err(CircuitError::Instance(e)) => {
            let text = match cfg.format {
                Format::Json => to_json(&json!({ "n": n, "x": cfg.x, "rejected": e, "message": e.to_string() })),
                Format::Csv => {
                    #[derive(Serialize)]
                    struct Row {
                        n: u64,
                        x: Option<u64>,
                        rejected: String,
                    }
                    to_csv(&[Row {
                        n,
                        x: cfg.x,
                        rejected: e.to_string(),
                    }])?
                }
            };
            emit(cfg, &text)?;
            eprintln!("rejected: {e}");
            return Ok(EXIT_FAILURE);
        }
        Err(e) => return Err(e.into()),
    };
    let r = &out.report;
    let text = match cfg.format {
        Format::Json => to_json(r),
        Format::Csv => {
            #[derive(Serialize)]
            struct Row {
                n: u64,
                x: u64,
                r: Option<u64>,
                m: Option<u64>,
                factor_a: Option<u64>,
                factor_b: Option<u64>,
                failure: Option<String>,
            }
            to_csv(&[Row {
                n: r.n,
                x: r.x,
                r: r.order_found,
                m: r.samples.last().map(|s| s.m),
                factor_a: r.factors.map(|f| f[0]),
                factor_b: r.factors.map(|f| f[1]),
                failure: r.failure.map(|f| f.to_string()),
            }])?
        }
    };
    emit(cfg, &text)?;
    if let Some(f) = &r.failure {
        eprintln!("no factors: {f}");
        return Ok(EXIT_FAILURE);
    }
    Ok(EXIT_OK)
}

fn trace_csv(trace: &RankTrace) -> String {
    let width = trace.rows.first().map_or(0, |r| r.bonds.len());
    let mut s = String::from("gate");
    for i in 0..width {
        s.push_str(&format!(",b{i}"));
    }
    s.push('\n');
    for row in &trace.rows {
        s.push_str(&row.gate);
        for b in &row.bonds {
            s.push_str(&format!(",{b}"));
        }
        s.push('\n');
    }
    s
}

fn cmd_trace(cfg: &RunConfig, plan_only: bool) -> Result<u8, Failure> {
    let n = require_n(cfg)?;
    let inst = cfg.pipeline(n).instance()?;
    let (trace, stored) = if plan_only {
        let plan = plan_controlled_u_phase(&inst, cfg.order);
        (plan.trace, plan.stored_scalars)
    } else {
        with_backend(cfg.nproc, |backend, method| {
            let dec = Decomposer::new(backend, method, RankPolicy::default());
            let (state, trace) = run_controlled_u_phase(&inst, cfg.order, &dec)?;
            Ok((trace, state.stored_scalars() as u64))
        })?
    };
    let text = match cfg.format {
        Format::Csv => trace_csv(&trace),
        Format::Json => to_json(&json!({
            "n": inst.n,
            "x": inst.x,
            "l": inst.l,
            "gate_order": cfg.order,
            "r": inst.order(),
            "stored_scalars": stored,
            "rows": trace.rows,
        })),
    };
    emit(cfg, &text)?;
    Ok(EXIT_OK)
}

fn cmd_compare(cfg: &RunConfig, corrupt: bool) -> Result<u8, Failure> {
    let n = require_n(cfg)?;
    let inst = cfg.pipeline(n).instance()?;
    let cmp = with_backend(cfg.nproc, |backend, method| {
        let dec = Decomposer::new(backend, method, RankPolicy::default());
        Ok(compare_with_oracle(&inst, cfg.order, cfg.force_outcome, &dec, DEFAULT_QUBIT_CAP, corrupt)?)
    })?;
    let deviation = cmp.max_deviation();
    let pass = deviation < COMPARE_TOLERANCE;
    let text = match cfg.format {
        Format::Json => to_json(&json!({
            "n": inst.n,
            "x": inst.x,
            "max_deviation": deviation,
            "tolerance": COMPARE_TOLERANCE,
            "pass": pass,
            "stages": cmp,
        })),
        Format::Csv => {
            #[derive(Serialize)]
            struct Row {
                n: u64,
                x: u64,
                pre_measurement: f64,
                pre_measurement_argmax: usize,
                lower_distribution: f64,
                post_measurement: f64,
                post_qft: f64,
                max_deviation: f64,
                pass: bool,
            }
            to_csv(&[Row {
                n: inst.n,
                x: inst.x,
                pre_measurement: cmp.pre_measurement.max_abs_diff,
                pre_measurement_argmax: cmp.pre_measurement.argmax,
                lower_distribution: cmp.lower_distribution,
                post_measurement: cmp.post_measurement.max_abs_diff,
                post_qft: cmp.post_qft,
                max_deviation: deviation,
                pass,
            }])?
        }
    };
    emit(cfg, &text)?;
    if !pass {
        eprintln!(
            "deviation {deviation:e} exceeds {COMPARE_TOLERANCE:e} (pre-measurement argmax {})",
            cmp.pre_measurement.argmax
        );
        return Ok(EXIT_ERROR);
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct BenchRow {
    l: u32,
    #[serde(rename = "N")]
    n: u64,
    x: u64,
    n_proc: Option<usize>,
    #[serde(rename = "t_U")]
    t_u: f64,
    t_meas: f64,
    #[serde(rename = "t_QFT")]
    t_qft: f64,
    t_total: f64,
}

fn cmd_bench(cfg: &RunConfig, sweep: &[usize]) -> Result<u8, Failure> {
    let n = require_n(cfg)?;
    let counts: Vec<Option<usize>> = if sweep.is_empty() {
        vec![cfg.nproc]
    } else {
        for &p in sweep {
            if p == 0 || !p.is_power_of_two() {
                return Err(Failure::usage(format!("--sweep: {p} is not a power of two")));
            }
        }
        sweep.iter().map(|&p| Some(p)).collect()
    };
    let mut rows = Vec::new();
    for nproc in counts {
        let pc = PipelineConfig {
            nproc,
            ..cfg.pipeline(n)
        };
        let r = run_pipeline(&pc)?.report;
        rows.push(BenchRow {
            l: r.l,
            n: r.n,
            x: r.x,
            n_proc: nproc,
            t_u: r.timings.t_u,
            t_meas: r.timings.t_meas,
            t_qft: r.timings.t_qft,
            t_total: r.timings.t_total,
        });
    }
    let text = match cfg.format {
        Format::Json => to_json(&rows),
        Format::Csv => to_csv(&rows)?,
    };
    emit(cfg, &text)?;
    Ok(EXIT_OK)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let resolve = |run: &RunArgs| run.resolve().map_err(Failure::usage);
    match cli.command {
        Command::Factor { run } => cmd_factor(&resolve(&run)?),
        Command::Trace { run, plan_only } => cmd_trace(&resolve(&run)?, plan_only),
        Command::Compare { run, debug_corrupt } => cmd_compare(&resolve(&run)?, debug_corrupt),
        Command::Bench { run, sweep } => cmd_bench(&resolve(&run)?, &sweep),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
