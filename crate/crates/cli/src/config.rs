use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use shor_mps::circuit::{
    GateOrder, PipelineConfig, QftVariant, DEFAULT_BASE_BUDGET, DEFAULT_MAX_SAMPLES, DEFAULT_MEMORY_CAP,
};
use shor_mps::matlin::RankPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Settings shared by all commands. Field names match the long flags
/// (with `-` for `_`), so a config file and the flags are interchangeable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n: Option<u64>,
    pub x: Option<u64>,
    pub order: GateOrder,
    pub qft: QftVariant,
    pub seed: u64,
    pub nproc: Option<usize>,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub memory_cap_bytes: u64,
    pub force_outcome: Option<u64>,
    pub max_samples: usize,
    pub base_budget: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: None,
            x: None,
            order: GateOrder::Decreasing,
            qft: QftVariant::Contract,
            seed: 0,
            nproc: None,
            format: Format::Json,
            out: None,
            memory_cap_bytes: DEFAULT_MEMORY_CAP,
            force_outcome: None,
            max_samples: DEFAULT_MAX_SAMPLES,
            base_budget: DEFAULT_BASE_BUDGET,
        }
    }
}

impl RunConfig {
    pub fn pipeline(&self, n: u64) -> PipelineConfig {
        PipelineConfig {
            n,
            x: self.x,
            order: self.order,
            qft: self.qft,
            seed: self.seed,
            nproc: self.nproc,
            memory_cap_bytes: self.memory_cap_bytes,
            force_outcome: self.force_outcome,
            max_samples: self.max_samples,
            base_budget: self.base_budget,
            policy: RankPolicy::default(),
        }
    }
}

/// Flags and environment overrides; anything left unset falls back to the
/// config file and then to the defaults.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct RunArgs {
    /// Number to factor.
    #[arg(long, env = "SHORMPS_N")]
    pub n: Option<u64>,
    /// Base; chosen to maximise the order when omitted.
    #[arg(long, env = "SHORMPS_X")]
    pub x: Option<u64>,
    /// Order of the controlled multiplications.
    #[arg(long, env = "SHORMPS_ORDER", value_parser = parse_order)]
    pub order: Option<GateOrder>,
    /// QFT variant.
    #[arg(long, env = "SHORMPS_QFT", value_parser = parse_qft)]
    pub qft: Option<QftVariant>,
    #[arg(long, env = "SHORMPS_SEED")]
    pub seed: Option<u64>,
    /// Worker count (a power of two); serial when omitted.
    #[arg(long, env = "SHORMPS_NPROC", value_parser = parse_nproc)]
    pub nproc: Option<usize>,
    #[arg(long, env = "SHORMPS_FORMAT", value_enum)]
    pub format: Option<Format>,
    /// Write output here instead of standard output.
    #[arg(long, env = "SHORMPS_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, env = "SHORMPS_MEMORY_CAP_BYTES")]
    pub memory_cap_bytes: Option<u64>,
    /// Project the lower register onto this value instead of sampling it.
    #[arg(long, env = "SHORMPS_FORCE_OUTCOME")]
    pub force_outcome: Option<u64>,
    #[arg(long, env = "SHORMPS_MAX_SAMPLES")]
    pub max_samples: Option<usize>,
    /// Largest base tried when searching for x.
    #[arg(long, env = "SHORMPS_BASE_BUDGET")]
    pub base_budget: Option<u64>,
    /// JSON config file with the same field names as the flags.
    #[arg(long, env = "SHORMPS_CONFIG")]
    pub config: Option<PathBuf>,
}

fn parse_order(s: &str) -> Result<GateOrder, String> {
    s.parse()
}

fn parse_qft(s: &str) -> Result<QftVariant, String> {
    s.parse()
}

fn parse_nproc(s: &str) -> Result<usize, String> {
    let p: usize = s.parse().map_err(|e| format!("{e}"))?;
    if p == 0 || !p.is_power_of_two() {
        return Err(format!("{p} is not a power of two"));
    }
    Ok(p)
}

impl RunArgs {
    /// Overlays the flags on `base`.
    pub fn apply(&self, mut base: RunConfig) -> RunConfig {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f.clone() { base.$f = v; })*};
        }
        macro_rules! set_opt {
            ($($f:ident),*) => {$(if self.$f.is_some() { base.$f = self.$f.clone(); })*};
        }
        set!(order, qft, seed, format, memory_cap_bytes, max_samples, base_budget);
        set_opt!(n, x, nproc, out, force_outcome);
        base
    }

    pub fn resolve(&self) -> Result<RunConfig, String> {
        let base = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
            }
            None => RunConfig::default(),
        };
        let cfg = self.apply(base);
        if let Some(p) = cfg.nproc {
            parse_nproc(&p.to_string())?;
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips() {
        let cfg = RunConfig {
            n: Some(65),
            x: Some(2),
            order: GateOrder::Increasing,
            qft: QftVariant::Nn,
            seed: 17,
            nproc: Some(4),
            format: Format::Csv,
            out: Some("trace.csv".into()),
            memory_cap_bytes: 12345,
            force_outcome: Some(1),
            max_samples: 3,
            base_budget: 9,
        };
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), cfg);
    }

    #[test]
    fn flags_override_file_values() {
        let base: RunConfig = serde_json::from_str(r#"{"n": 21, "seed": 4, "qft": "nn"}"#).unwrap();
        let args = RunArgs {
            seed: Some(9),
            ..RunArgs::default()
        };
        let cfg = args.apply(base);
        assert_eq!((cfg.n, cfg.seed, cfg.qft), (Some(21), 9, QftVariant::Nn));
    }
}
