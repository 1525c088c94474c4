use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use super::config::LoadedConfig;
use super::output::{Envelope, Outputs};
use crate::baselines::{GreedyPolicy, MpcPolicy, UniformPolicy};
use crate::dg::{fit, read_trace_csv, DGModel};
use crate::dp::{
    check_concavity, check_lemma2, clamp_warnings, policy_csv, solve_with, table_header, values_csv, ConcavityReport,
    Lemma2Report, OrderingViolation, Solution, TableHeader,
};
use crate::error::{Error, Result};
use crate::policy::{LookaheadPolicy, Policy, ProcrastinationPolicy, TablePolicy, ThresholdJointPolicy};
use crate::problem::Problem;
use crate::ptrl::{train, Checkpoint, ThetaParams};
use crate::sim::{compare, report_from, rollouts, EpisodeConfig, EpisodeResult, MonteCarloReport};

/// Relative tolerance of the concavity diagnostic.
const CONCAVITY_REL_TOL: f64 = 1e-6;
const ORDERING_TOL: f64 = 1e-9;

/// Raised after all outputs are written when a solve fails its checks.
#[derive(Debug)]
pub struct DiagnosticFailure(pub String);

pub enum CommandError {
    Core(Error),
    Diagnostics(DiagnosticFailure),
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        CommandError::Core(e)
    }
}

type CmdResult = std::result::Result<Vec<std::path::PathBuf>, CommandError>;

#[derive(Debug, Serialize)]
pub struct SolveDiagnostics {
    pub passed: bool,
    pub concavity: ConcavityReport,
    pub lemma2: Lemma2Report,
    pub ordering_violations: Vec<OrderingViolation>,
    pub interpolation_clamps: u64,
}

#[derive(Debug, Serialize)]
pub struct SolveSummary {
    pub header: TableHeader,
    /// Expected optimal reward from `y1` under the initial supply law.
    pub expected_value: f64,
    pub diagnostics: SolveDiagnostics,
}

struct Setup {
    problem: Arc<Problem>,
    model: DGModel,
    env: EpisodeConfig,
}

fn setup(cfg: &LoadedConfig) -> Result<Setup> {
    let problem = Arc::new(cfg.problem()?);
    let model = cfg.model(problem.horizon())?;
    let mut env = EpisodeConfig::new(problem.clone(), model.clone())?;
    env.fixed_g1 = cfg.fixed_g1();
    Ok(Setup { problem, model, env })
}

fn solve_problem(cfg: &LoadedConfig, s: &Setup) -> Result<Solution> {
    let grid = cfg.grid(&s.problem, &s.model)?;
    solve_with(&s.problem, &grid, cfg.config.solver.mode())
}

pub fn solve(cfg: &LoadedConfig, seed: u64, out_dir: &Path) -> CmdResult {
    let s = setup(cfg)?;
    let before = clamp_warnings();
    let sol = solve_problem(cfg, &s)?;
    let concavity = check_concavity(&sol.values, CONCAVITY_REL_TOL);
    let lemma2 = check_lemma2(&sol.policy, &sol.grid, &s.problem.spec);
    let ordering = sol.thresholds.ordering_violations(&s.problem.spec, ORDERING_TOL);
    let passed = concavity.passed() && lemma2.violations.is_empty() && ordering.is_empty();
    let iy = sol.grid.nearest(s.problem.spec.y1);
    let expected_value = sol.grid.dg.initial_dist.iter().enumerate().map(|(ig, p)| p * sol.values.get(0, iy, ig)).sum();
    let failures = format!(
        "{} concavity, {} lemma-2 and {} ordering violations",
        concavity.violations.len(),
        lemma2.violations.len(),
        ordering.len()
    );
    let summary = SolveSummary {
        header: table_header(&sol),
        expected_value,
        diagnostics: SolveDiagnostics {
            passed,
            concavity,
            lemma2,
            ordering_violations: ordering,
            interpolation_clamps: clamp_warnings() - before,
        },
    };
    let mut out = Outputs::new(out_dir, "solve", &cfg.hash, seed)?;
    out.json(&summary)?;
    out.csv("values", &values_csv(&sol)?)?;
    out.csv("policy", &policy_csv(&sol)?)?;
    out.csv("thresholds", &sol.thresholds.to_csv()?)?;
    if !passed {
        return Err(CommandError::Diagnostics(DiagnosticFailure(failures)));
    }
    Ok(out.written().to_vec())
}

/// Builds policies by name, solving or training at most once.
struct PolicyFactory<'a> {
    cfg: &'a LoadedConfig,
    setup: &'a Setup,
    seed: u64,
    checkpoint: Option<&'a Path>,
    solution: Option<Arc<Solution>>,
    learned: Option<ThetaParams>,
}

impl<'a> PolicyFactory<'a> {
    fn solution(&mut self) -> Result<Arc<Solution>> {
        if self.solution.is_none() {
            self.solution = Some(Arc::new(solve_problem(self.cfg, self.setup)?));
        }
        Ok(self.solution.clone().expect("just set"))
    }

    fn learned(&mut self) -> Result<ThetaParams> {
        if self.learned.is_none() {
            let params = match self.checkpoint {
                Some(path) => load_checkpoint(&self.cfg.resolve(path))?.params,
                None => train(&self.setup.env, &self.cfg.config.learn, self.seed)?.params,
            };
            self.learned = Some(params);
        }
        Ok(self.learned.clone().expect("just set"))
    }

    fn build(&mut self, name: &str) -> Result<Box<dyn Policy>> {
        let problem = self.setup.problem.clone();
        Ok(match name {
            "dp" => Box::new(LookaheadPolicy { problem, solution: self.solution()? }),
            "dp-lookup" => Box::new(TablePolicy { problem, solution: self.solution()? }),
            "threshold-joint" => Box::new(ThresholdJointPolicy::new(problem, Arc::new(self.solution()?.thresholds.clone()))),
            "procrastination" => Box::new(ProcrastinationPolicy { problem }),
            "greedy" => Box::new(GreedyPolicy { problem }),
            "uniform" => Box::new(UniformPolicy { problem }),
            "mpc" => {
                let dy = self.cfg.dy(&problem);
                Box::new(MpcPolicy::new(problem, self.setup.model.clone(), self.cfg.config.mpc, dy)?)
            }
            "ptrl-checkpoint" => {
                let thresholds = Arc::new(self.learned()?.expand(&self.setup.env)?);
                Box::new(ThresholdJointPolicy { label: name.into(), problem, thresholds })
            }
            other => return Err(Error::param(format!("unknown policy `{other}`"))),
        })
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)?;
    let env: Envelope<Checkpoint> = serde_json::from_str(&text)?;
    Ok(env.result)
}

fn energy_mix_csv(problem: &Problem, results: &[EpisodeResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "episode",
        "dg_to_deferrable_onpeak",
        "dg_to_deferrable_offpeak",
        "grid_to_deferrable_onpeak",
        "grid_to_deferrable_offpeak",
        "total",
        "completed",
        "final_y",
        "reward",
    ])?;
    for (i, r) in results.iter().enumerate() {
        let m = &r.energy_mix;
        w.write_record([
            i.to_string(),
            m.dg_to_deferrable_onpeak.to_string(),
            m.dg_to_deferrable_offpeak.to_string(),
            m.grid_to_deferrable_onpeak.to_string(),
            m.grid_to_deferrable_offpeak.to_string(),
            m.total().to_string(),
            (problem.spec.y1 - r.final_y).to_string(),
            r.final_y.to_string(),
            r.cumulative_reward.to_string(),
        ])?;
    }
    finish(w)
}

fn steps_csv(k: usize, result: &EpisodeResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head: Vec<String> = ["t", "y", "g", "v"].iter().map(|s| s.to_string()).collect();
    head.extend((1..=k).map(|i| format!("d{i}")));
    head.extend(["z".to_string(), "reward".to_string()]);
    w.write_record(&head)?;
    for s in &result.steps {
        let mut rec = vec![s.t.to_string(), s.y.to_string(), s.g.to_string(), s.v.to_string()];
        rec.extend(s.d.iter().map(|d| d.to_string()));
        rec.extend([s.z.to_string(), s.reward.to_string()]);
        w.write_record(&rec)?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn simulate(cfg: &LoadedConfig, seed: u64, out_dir: &Path) -> CmdResult {
    let s = setup(cfg)?;
    let sim = &cfg.config.simulate;
    let mut factory =
        PolicyFactory { cfg, setup: &s, seed, checkpoint: sim.checkpoint.as_deref(), solution: None, learned: None };
    let policy = factory.build(&sim.policy)?;
    if sim.episodes == 0 {
        return Err(Error::param("simulate needs at least one episode").into());
    }
    let results = rollouts(&s.env, policy.as_ref(), sim.episodes, seed)?;
    let report: MonteCarloReport = report_from(policy.name(), seed, &results);
    let mut out = Outputs::new(out_dir, "simulate", &cfg.hash, seed)?;
    out.json(&report)?;
    out.csv("energy_mix", &energy_mix_csv(&s.problem, &results)?)?;
    out.csv("episode0", &steps_csv(s.problem.devices.len(), &results[0])?)?;
    Ok(out.written().to_vec())
}

pub fn learn(cfg: &LoadedConfig, seed: u64, out_dir: &Path) -> CmdResult {
    let s = setup(cfg)?;
    let report = train(&s.env, &cfg.config.learn, seed)?;
    let thresholds = report.params.expand(&s.env)?;
    let mut out = Outputs::new(out_dir, "learn", &cfg.hash, seed)?;
    out.json(&report)?;
    out.artifact_json("checkpoint", &report.checkpoint(&cfg.config.learn, seed))?;
    out.csv("curve", &report.curve_csv()?)?;
    out.csv("thresholds", &thresholds.to_csv()?)?;
    Ok(out.written().to_vec())
}

fn comparison_csv(c: &crate::sim::Comparison) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["policy", "mean", "std", "std_err", "normalized_std", "gap", "relative_gap", "gap_std_err", "significant"])?;
    for (i, r) in c.reports.iter().enumerate() {
        let (gap, rel, se, sig) = match i.checked_sub(1).map(|j| &c.gaps[j]) {
            None => (0.0, 0.0, 0.0, false),
            Some(g) => (g.mean_diff, g.relative_gap, g.std_err, g.significant),
        };
        w.write_record([
            r.policy.clone(),
            r.mean.to_string(),
            r.std.to_string(),
            r.std_err.to_string(),
            r.normalized_std.to_string(),
            gap.to_string(),
            rel.to_string(),
            se.to_string(),
            sig.to_string(),
        ])?;
    }
    finish(w)
}

pub fn compare_cmd(cfg: &LoadedConfig, seed: u64, out_dir: &Path) -> CmdResult {
    let s = setup(cfg)?;
    let cc = &cfg.config.compare;
    if cc.policies.is_empty() || cc.episodes == 0 {
        return Err(Error::param("compare needs at least one policy and one episode").into());
    }
    let mut factory =
        PolicyFactory { cfg, setup: &s, seed, checkpoint: cc.checkpoint.as_deref(), solution: None, learned: None };
    let policies = cc.policies.iter().map(|n| factory.build(n)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&dyn Policy> = policies.iter().map(|p| p.as_ref()).collect();
    let comparison = compare(&s.env, &refs, cc.episodes, seed)?;
    let mut out = Outputs::new(out_dir, "compare", &cfg.hash, seed)?;
    out.json(&comparison)?;
    out.csv("table", &comparison_csv(&comparison)?)?;
    Ok(out.written().to_vec())
}

#[derive(Serialize)]
struct FitSummary {
    readings: usize,
    spacing_secs: i64,
    model: DGModel,
}

pub fn fit_dg(cfg: &LoadedConfig, seed: u64, out_dir: &Path) -> CmdResult {
    let fc = cfg.config.fit.as_ref().ok_or_else(|| Error::param("config has no [fit] section"))?;
    let trace = read_trace_csv(&cfg.resolve(&fc.trace))?;
    let model = fit(&trace.values, fc.variant)?;
    let mut out = Outputs::new(out_dir, "fit-dg", &cfg.hash, seed)?;
    out.json(&FitSummary { readings: trace.values.len(), spacing_secs: trace.spacing_secs, model })?;
    Ok(out.written().to_vec())
}
