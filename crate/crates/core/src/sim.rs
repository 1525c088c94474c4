//! Episode engine and Monte Carlo harness.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::demand::{total_utility, Utility};
use crate::dg::{episode_rng, DGModel, Rng};
use crate::error::{Error, Result};
use crate::policy::{Observation, Policy};
use crate::problem::Problem;

/// Everything needed to roll out episodes except the policy and the seed.
#[derive(Debug, Clone)]
pub struct EpisodeConfig {
    pub problem: Arc<Problem>,
    pub model: DGModel,
    /// Start every episode from this supply level instead of a draw.
    pub fixed_g1: Option<f64>,
}

impl EpisodeConfig {
    pub fn new(problem: Arc<Problem>, model: DGModel) -> Result<Self> {
        problem.validate()?;
        model.validate()?;
        model.check_horizon(problem.horizon())?;
        Ok(EpisodeConfig { problem, model, fixed_g1: None })
    }

    pub fn sample_path(&self, rng: &mut Rng) -> Vec<f64> {
        self.model.sample_path(self.problem.horizon(), self.fixed_g1, rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    /// 1-based interval.
    pub t: usize,
    pub y: f64,
    pub g: f64,
    pub d: Vec<f64>,
    pub v: f64,
    pub z: f64,
    pub reward: f64,
}

/// Where the delivered deferrable energy came from, in kWh.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EnergyMix {
    pub dg_to_deferrable_onpeak: f64,
    pub dg_to_deferrable_offpeak: f64,
    pub grid_to_deferrable_onpeak: f64,
    pub grid_to_deferrable_offpeak: f64,
}

impl EnergyMix {
    pub fn total(&self) -> f64 {
        self.dg_to_deferrable_onpeak + self.dg_to_deferrable_offpeak + self.grid_to_deferrable_onpeak + self.grid_to_deferrable_offpeak
    }

    fn add(&mut self, o: &EnergyMix) {
        self.dg_to_deferrable_onpeak += o.dg_to_deferrable_onpeak;
        self.dg_to_deferrable_offpeak += o.dg_to_deferrable_offpeak;
        self.grid_to_deferrable_onpeak += o.grid_to_deferrable_onpeak;
        self.grid_to_deferrable_offpeak += o.grid_to_deferrable_offpeak;
    }

    fn scaled(&self, s: f64) -> EnergyMix {
        EnergyMix {
            dg_to_deferrable_onpeak: self.dg_to_deferrable_onpeak * s,
            dg_to_deferrable_offpeak: self.dg_to_deferrable_offpeak * s,
            grid_to_deferrable_onpeak: self.grid_to_deferrable_onpeak * s,
            grid_to_deferrable_offpeak: self.grid_to_deferrable_offpeak * s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub steps: Vec<StepRecord>,
    pub final_y: f64,
    pub terminal_penalty: f64,
    pub cumulative_reward: f64,
    pub energy_mix: EnergyMix,
    /// Actions that had to be pulled back into the feasible box.
    pub clamp_count: usize,
}

/// Rolls `policy` along a given supply path.
pub fn run_episode_on_path(cfg: &EpisodeConfig, policy: &dyn Policy, path: &[f64]) -> Result<EpisodeResult> {
    let p = &cfg.problem;
    let horizon = p.horizon();
    if path.len() != horizon {
        return Err(Error::param(format!("supply path has {} values, horizon is {horizon}", path.len())));
    }
    let mut ctl = policy.controller();
    let mut y = p.spec.y1;
    let mut steps = Vec::with_capacity(horizon);
    let mut mix = EnergyMix::default();
    let mut clamp_count = 0;
    let mut stage_total = 0.0;
    for (t, &g) in path.iter().enumerate() {
        let devices = p.devices.at(t);
        let pv = p.tariff.at(t);
        let act = ctl.act(&Observation { t, y, g });
        if !act.v.is_finite() || act.d.len() != devices.len() || act.d.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteAction { policy: policy.name(), interval: t + 1 });
        }
        let v = act.v.clamp(0.0, y.min(p.v_max()));
        let mut clamped = (v - act.v).abs() > 1e-12;
        let d: Vec<f64> = act
            .d
            .iter()
            .zip(devices)
            .map(|(&x, u)| {
                let c = x.clamp(0.0, u.capacity());
                clamped |= (c - x).abs() > 1e-12;
                c
            })
            .collect();
        clamp_count += clamped as usize;

        let served: f64 = d.iter().sum();
        let z = v + served - g;
        let reward = total_utility(devices, &d) - pv.payment(z);
        // Supply covers nondeferrable load first, then the charger.
        let dg_to_v = v.min((g - served.min(g)).max(0.0));
        let grid_to_v = v - dg_to_v;
        if p.tariff.is_on_peak(t) {
            mix.dg_to_deferrable_onpeak += dg_to_v;
            mix.grid_to_deferrable_onpeak += grid_to_v;
        } else {
            mix.dg_to_deferrable_offpeak += dg_to_v;
            mix.grid_to_deferrable_offpeak += grid_to_v;
        }
        steps.push(StepRecord { t: t + 1, y, g, d, v, z, reward });
        stage_total += reward;
        y -= v;
    }
    let terminal_penalty = p.penalty.value(y);
    Ok(EpisodeResult {
        steps,
        final_y: y,
        terminal_penalty,
        cumulative_reward: stage_total - terminal_penalty,
        energy_mix: mix,
        clamp_count,
    })
}

/// Episode `index` of the stream seeded by `master_seed`.
pub fn run_episode(cfg: &EpisodeConfig, policy: &dyn Policy, master_seed: u64, index: u64) -> Result<EpisodeResult> {
    let path = cfg.sample_path(&mut episode_rng(master_seed, index));
    run_episode_on_path(cfg, policy, &path)
}

/// Mean, spread and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation.
    pub std: f64,
    pub std_err: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Summary {
        let n = xs.len();
        if n == 0 {
            return Summary { n, mean: f64::NAN, std: f64::NAN, std_err: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        // A constant sample has no spread, whatever the rounding in `mean`.
        let constant = xs.iter().all(|&x| x == xs[0]);
        let std = if n > 1 && !constant { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        Summary { n, mean, std, std_err: std / (n as f64).sqrt() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloReport {
    pub policy: String,
    pub episodes: usize,
    pub seed: u64,
    pub mean: f64,
    pub std: f64,
    pub std_err: f64,
    /// Standard error relative to |mean|.
    pub normalized_std: f64,
    pub rewards: Vec<f64>,
    /// Per-episode average mix.
    pub energy_mix: EnergyMix,
    pub clamp_count: usize,
}

/// Runs episodes `0..n` of `master_seed` in parallel; results are in
/// episode order regardless of scheduling.
pub fn rollouts(cfg: &EpisodeConfig, policy: &dyn Policy, n: usize, master_seed: u64) -> Result<Vec<EpisodeResult>> {
    (0..n as u64).into_par_iter().map(|i| run_episode(cfg, policy, master_seed, i)).collect()
}

pub fn monte_carlo(cfg: &EpisodeConfig, policy: &dyn Policy, n: usize, master_seed: u64) -> Result<MonteCarloReport> {
    if n == 0 {
        return Err(Error::param("Monte Carlo needs at least one episode"));
    }
    let results = rollouts(cfg, policy, n, master_seed)?;
    Ok(report_from(policy.name(), master_seed, &results))
}

pub fn report_from(policy: String, seed: u64, results: &[EpisodeResult]) -> MonteCarloReport {
    let rewards: Vec<f64> = results.iter().map(|r| r.cumulative_reward).collect();
    let s = Summary::of(&rewards);
    let mut mix = EnergyMix::default();
    for r in results {
        mix.add(&r.energy_mix);
    }
    MonteCarloReport {
        policy,
        episodes: results.len(),
        seed,
        mean: s.mean,
        std: s.std,
        std_err: s.std_err,
        normalized_std: if s.mean != 0.0 { s.std_err / s.mean.abs() } else { f64::NAN },
        rewards,
        energy_mix: mix.scaled(1.0 / results.len().max(1) as f64),
        clamp_count: results.iter().map(|r| r.clamp_count).sum(),
    }
}

/// Paired difference of two policies evaluated on the same episodes.
#[derive(Debug, Clone, Serialize)]
pub struct PairedGap {
    pub reference: String,
    pub policy: String,
    /// Mean of `reference - policy` per episode.
    pub mean_diff: f64,
    pub std_err: f64,
    /// Gap relative to |reference mean|.
    pub relative_gap: f64,
    /// `|mean_diff| > 2 std_err`.
    pub significant: bool,
}

pub fn paired_gap(reference: &MonteCarloReport, other: &MonteCarloReport) -> PairedGap {
    let diffs: Vec<f64> = reference.rewards.iter().zip(&other.rewards).map(|(a, b)| a - b).collect();
    let s = Summary::of(&diffs);
    PairedGap {
        reference: reference.policy.clone(),
        policy: other.policy.clone(),
        mean_diff: s.mean,
        std_err: s.std_err,
        relative_gap: if reference.mean != 0.0 { s.mean / reference.mean.abs() } else { f64::NAN },
        significant: s.mean.abs() > 2.0 * s.std_err,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub seed: u64,
    pub episodes: usize,
    pub reports: Vec<MonteCarloReport>,
    /// Gaps of every policy against the first one.
    pub gaps: Vec<PairedGap>,
}

/// Evaluates all policies on the same episode seeds.
pub fn compare(cfg: &EpisodeConfig, policies: &[&dyn Policy], n: usize, master_seed: u64) -> Result<Comparison> {
    let reports = policies.iter().map(|p| monte_carlo(cfg, *p, n, master_seed)).collect::<Result<Vec<_>>>()?;
    let gaps = reports.iter().skip(1).map(|r| paired_gap(&reports[0], r)).collect();
    Ok(Comparison { seed: master_seed, episodes: n, reports, gaps })
}
