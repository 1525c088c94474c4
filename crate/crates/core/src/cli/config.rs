//! Run configuration (TOML, `version = 1`).
//!
//! ```toml
//! version = 1
//! seed = 7
//!
//! [problem]
//! horizon = 16
//! demand = 10.8          # y1, kWh
//! v_max = 1.8            # kWh per interval
//! penalty = { c1 = 0.8, c2 = 0.05 }
//! tariff = [ { start_interval = 1, buy = 0.43, sell = 0.17 } ]
//! devices = [ { a = 0.9, b = 1.0, d_max = 1.0 } ]
//!
//! [dg]
//! model = { kind = "independent", mean = [1.5], std = [0.5], g_max = 2.0 }
//! # or: trace = "trace.csv" with fit = { kind = "ar1" }
//!
//! [grid]
//! dy = 0.45
//! g_bins = 16
//! ```
//!
//! Every other section is optional and falls back to its defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::MpcConfig;
use crate::demand::{DeferrableSpec, DeviceSet, PenaltyFunction, QuadraticUtility};
use crate::dg::{discretize, fit, read_trace_csv, DGModel, FitVariant, DEFAULT_BINS};
use crate::dp::{Grid, SolverMode, DEFAULT_BUDGET, DEFAULT_ND};
use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::ptrl::LearnerConfig;
use crate::tariff::{TariffCalendar, TariffSegment};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    pub problem: Option<ProblemConfig>,
    pub dg: Option<DgConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub learn: LearnerConfig,
    #[serde(default)]
    pub mpc: MpcConfig,
    pub fit: Option<FitConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub horizon: usize,
    /// Deferrable demand at the start of the horizon, kWh.
    pub demand: f64,
    /// Charger limit per interval, kWh.
    pub v_max: f64,
    pub penalty: PenaltyConfig,
    pub tariff: Vec<TariffSegment>,
    #[serde(default)]
    pub devices: Vec<QuadraticUtility>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgConfig {
    pub model: Option<DGModel>,
    /// CSV trace with `timestamp,dg_kwh`; relative paths resolve against the config file.
    pub trace: Option<PathBuf>,
    pub fit: Option<FitVariant>,
    /// Pin the first interval's supply instead of drawing it.
    pub fixed_g1: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Demand lattice step; defaults to `v_max / 4`.
    pub dy: Option<f64>,
    pub y_max: Option<f64>,
    pub g_bins: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { dy: None, y_max: None, g_bins: DEFAULT_BINS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    #[default]
    Structured,
    BruteForce,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub mode: ModeName,
    /// Nondeferrable lattice points per device in brute-force mode.
    pub nd: usize,
    /// Upper bound on stage evaluations, applied in both modes.
    pub budget: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { mode: ModeName::Structured, nd: DEFAULT_ND, budget: DEFAULT_BUDGET }
    }
}

impl SolverConfig {
    pub fn mode(&self) -> SolverMode {
        match self.mode {
            ModeName::Structured => SolverMode::Structured,
            ModeName::BruteForce => SolverMode::BruteForce { nd: self.nd, budget: self.budget },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub policy: String,
    pub episodes: usize,
    /// Required for `ptrl-checkpoint`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { policy: "dp".into(), episodes: 1000, checkpoint: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub episodes: usize,
    pub policies: Vec<String>,
    /// Learner checkpoint for `ptrl-checkpoint`; without one the learner is
    /// trained in-process with the `[learn]` settings.
    pub checkpoint: Option<PathBuf>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            episodes: 2000,
            policies: ["dp", "procrastination", "threshold-joint", "mpc", "greedy", "uniform", "ptrl-checkpoint"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub trace: PathBuf,
    pub variant: FitVariant,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

/// Policy names accepted by `simulate` and `compare`.
pub const POLICY_NAMES: [&str; 8] =
    ["dp", "dp-lookup", "procrastination", "threshold-joint", "mpc", "greedy", "uniform", "ptrl-checkpoint"];

/// A parsed config plus the directory relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    /// Hex SHA-256 of the canonical config with seed and output dir removed.
    pub hash: String,
}

impl LoadedConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, base)
    }

    pub fn from_str(text: &str, base_dir: PathBuf) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::param(format!("config: {e}")))?;
        if config.version != CONFIG_VERSION {
            return Err(Error::param(format!("config version {} is not supported (expected {CONFIG_VERSION})", config.version)));
        }
        let hash = config_hash(&config)?;
        let loaded = LoadedConfig { config, base_dir, hash };
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn hash8(&self) -> &str {
        &self.hash[..8]
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        for name in c.compare.policies.iter().chain(std::iter::once(&c.simulate.policy)) {
            if !POLICY_NAMES.contains(&name.as_str()) {
                return Err(Error::param(format!("unknown policy `{name}`; expected one of {}", POLICY_NAMES.join(", "))));
            }
        }
        c.learn.validate()?;
        if let Some(dg) = &c.dg {
            if dg.model.is_some() == dg.trace.is_some() {
                return Err(Error::param("[dg] needs exactly one of `model` or `trace`"));
            }
            if dg.trace.is_some() && dg.fit.is_none() {
                return Err(Error::param("[dg] with a trace needs a `fit` variant"));
            }
        }
        if c.problem.is_some() {
            self.problem()?;
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<Problem> {
        let p = self.config.problem.as_ref().ok_or_else(|| Error::param("config has no [problem] section"))?;
        let spec = DeferrableSpec::new(p.demand, p.horizon, p.v_max)?;
        let tariff = TariffCalendar::from_segments(p.horizon, &p.tariff)?;
        let penalty = PenaltyFunction::new(p.penalty.c1, p.penalty.c2, &tariff)?;
        Problem::new(spec, DeviceSet::new(p.devices.clone())?, penalty, tariff)
    }

    pub fn model(&self, horizon: usize) -> Result<DGModel> {
        let dg = self.config.dg.as_ref().ok_or_else(|| Error::param("config has no [dg] section"))?;
        let model = match (&dg.model, &dg.trace, dg.fit) {
            (Some(m), _, _) => m.clone(),
            (None, Some(path), Some(variant)) => fit(&read_trace_csv(&self.resolve(path))?.values, variant)?,
            _ => return Err(Error::param("[dg] needs `model`, or `trace` with `fit`")),
        };
        model.validate()?;
        model.check_horizon(horizon)?;
        Ok(model)
    }

    pub fn fixed_g1(&self) -> Option<f64> {
        self.config.dg.as_ref().and_then(|d| d.fixed_g1)
    }

    pub fn dy(&self, problem: &Problem) -> f64 {
        self.config.grid.dy.unwrap_or(problem.v_max() / 4.0)
    }

    pub fn grid(&self, problem: &Problem, model: &DGModel) -> Result<Grid> {
        let g = &self.config.grid;
        let dg = discretize(model, g.g_bins, problem.horizon())?;
        let grid = Grid::new(problem, self.dy(problem), g.y_max, dg)?;
        // The structured solver's cost is dominated by the expectation over next-stage bins.
        if self.config.solver.mode == ModeName::Structured {
            let required = (grid.horizon * grid.ny() * grid.ng() * grid.ng()) as u128;
            if required > self.config.solver.budget as u128 {
                return Err(Error::BudgetExceeded { required, budget: self.config.solver.budget as u128 });
            }
        }
        Ok(grid)
    }
}

fn config_hash(config: &RunConfig) -> Result<String> {
    let mut canonical = config.clone();
    canonical.seed = 0;
    canonical.output = OutputConfig::default();
    let bytes = serde_json::to_vec(&canonical)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
