//! Threshold learning: simultaneous-perturbation gradient ascent on the
//! threshold anchors of each pricing period and supply bin.

use std::sync::Arc;

use rand::{Rng as _, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dg::Rng;
use crate::dp::{ThresholdSet, ThresholdTriple};
use crate::error::{Error, Result};
use crate::policy::{propagate_thresholds, ThetaZeroRule, ThresholdJointPolicy};
use crate::sim::{run_episode, EpisodeConfig, Summary};

/// Salt separating the validation stream from the training stream.
const VALIDATION_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
/// Stream index reserved for perturbation signs.
const PERTURB_STREAM: u64 = u64::MAX - 1;

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn inv_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Unconstrained anchor parameters. Per (period, bin) the three raw values
/// map to `theta- = s(a1)`, `theta0 = theta- + s(a2)`, `theta+ = theta0 + s(a3)`
/// with `s(a) = tau * softplus(a / tau)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    pub n_periods: usize,
    pub n_bins: usize,
    pub g_max: f64,
    pub tau: f64,
    /// Layout `(period * n_bins + bin) * 3 + j`.
    pub raw: Vec<f64>,
}

impl ThetaParams {
    /// Parameters reproducing the given anchors (`anchors[p][b]`).
    pub fn from_anchors(anchors: &[Vec<ThresholdTriple>], g_max: f64, tau: f64) -> Result<Self> {
        let n_periods = anchors.len();
        let n_bins = anchors.first().map_or(0, Vec::len);
        if n_periods == 0 || n_bins == 0 || anchors.iter().any(|a| a.len() != n_bins) || !(tau > 0.0) {
            return Err(Error::param("anchors must form a nonempty periods x bins table and tau must be positive"));
        }
        // Keep gaps slightly positive so the inverse map stays finite.
        let floor = 1e-6 * tau;
        let inv = |gap: f64| tau * inv_softplus(gap.max(floor) / tau);
        let mut raw = Vec::with_capacity(3 * n_periods * n_bins);
        for row in anchors {
            for a in row {
                let zero = a.zero_or_minus();
                raw.push(inv(a.theta_minus));
                raw.push(inv(zero - a.theta_minus));
                raw.push(inv(a.theta_plus - zero));
            }
        }
        Ok(ThetaParams { n_periods, n_bins, g_max, tau, raw })
    }

    pub fn dimension(&self) -> usize {
        self.raw.len()
    }

    fn s(&self, a: f64) -> f64 {
        self.tau * softplus(a / self.tau)
    }

    pub fn anchors_from(&self, raw: &[f64]) -> Vec<Vec<ThresholdTriple>> {
        (0..self.n_periods)
            .map(|p| {
                (0..self.n_bins)
                    .map(|b| {
                        let i = (p * self.n_bins + b) * 3;
                        let minus = self.s(raw[i]);
                        let zero = minus + self.s(raw[i + 1]);
                        ThresholdTriple::new(minus, Some(zero), zero + self.s(raw[i + 2]))
                    })
                    .collect()
            })
            .collect()
    }

    pub fn anchors(&self) -> Vec<Vec<ThresholdTriple>> {
        self.anchors_from(&self.raw)
    }

    /// Full threshold set for the episode configuration.
    pub fn expand(&self, env: &EpisodeConfig) -> Result<ThresholdSet> {
        self.expand_raw(&self.raw, env)
    }

    fn expand_raw(&self, raw: &[f64], env: &EpisodeConfig) -> Result<ThresholdSet> {
        let p = &env.problem;
        propagate_thresholds(&self.anchors_from(raw), &p.tariff, &p.spec, self.g_max, ThetaZeroRule::AnchorFraction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    /// Training episode budget (both perturbation sides count).
    pub episodes: usize,
    /// Episodes per side of each gradient estimate.
    pub n_eval: usize,
    /// Supply bins of the learned thresholds.
    pub bins: usize,
    /// Initial anchor `(theta-, theta0, theta+)` in units of `v_max`.
    pub init_anchor: [f64; 3],
    /// Perturbation and step scales in units of `v_max`.
    pub perturbation: f64,
    pub step: f64,
    pub gamma: f64,
    pub alpha: f64,
    /// Fixed validation episodes used to pick the best parameters.
    pub validation_episodes: usize,
    /// Validate every this many iterations.
    pub validate_every: usize,
    pub moving_window: usize,
    /// Relative band around the final moving average that defines convergence.
    pub convergence_tol: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            episodes: 2000,
            n_eval: 8,
            bins: 1,
            init_anchor: [0.5, 1.0, 1.5],
            perturbation: 0.1,
            step: 0.05,
            gamma: 0.101,
            alpha: 0.602,
            validation_episodes: 32,
            validate_every: 5,
            moving_window: 200,
            convergence_tol: 0.02,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_eval == 0 || self.bins == 0 || self.validate_every == 0 || self.moving_window == 0 {
            return Err(Error::param("n_eval, bins, validate_every and moving_window must be positive"));
        }
        let [m, z, p] = self.init_anchor;
        if !(0.0 <= m && m <= z && z <= p) {
            return Err(Error::param("init_anchor must satisfy 0 <= theta- <= theta0 <= theta+"));
        }
        if !(self.perturbation > 0.0 && self.step > 0.0) {
            return Err(Error::param("perturbation and step scales must be positive"));
        }
        Ok(())
    }

    pub fn initial_params(&self, env: &EpisodeConfig) -> Result<ThetaParams> {
        let v = env.problem.v_max();
        let [m, z, p] = self.init_anchor;
        let anchor = ThresholdTriple::new(m * v, Some(z * v), p * v);
        let anchors = vec![vec![anchor; self.bins]; env.problem.tariff.periods().len()];
        ThetaParams::from_anchors(&anchors, env.model.g_max(), 0.1 * v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub reward: f64,
    pub moving_avg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationPoint {
    pub iteration: usize,
    pub training_episodes: usize,
    pub value: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub curve: Vec<CurvePoint>,
    pub validation: Vec<ValidationPoint>,
    /// Best parameters by validation reward.
    pub params: ThetaParams,
    pub last_params: ThetaParams,
    pub best_value: f64,
    pub iterations: usize,
    pub training_episodes: usize,
    pub validation_episodes: usize,
    pub episodes_to_convergence: Option<usize>,
    /// Standard deviation over the final window relative to its |mean|.
    pub terminal_normalized_std: f64,
}

/// Learner state saved alongside the parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub params: ThetaParams,
    pub last_params: ThetaParams,
    pub best_value: f64,
    pub iterations: usize,
    pub training_episodes: usize,
    pub config: LearnerConfig,
    pub seed: u64,
}

impl TrainReport {
    pub fn checkpoint(&self, config: &LearnerConfig, seed: u64) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            last_params: self.last_params.clone(),
            best_value: self.best_value,
            iterations: self.iterations,
            training_episodes: self.training_episodes,
            config: config.clone(),
            seed,
        }
    }

    /// `episode,reward,moving_avg`.
    pub fn curve_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["episode", "reward", "moving_avg"])?;
        for c in &self.curve {
            w.write_record([c.episode.to_string(), c.reward.to_string(), c.moving_avg.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn rewards(env: &EpisodeConfig, set: ThresholdSet, seed: u64, indices: std::ops::Range<u64>) -> Result<Vec<f64>> {
    let policy = ThresholdJointPolicy::new(env.problem.clone(), Arc::new(set));
    let out: Vec<f64> = indices
        .into_par_iter()
        .map(|i| run_episode(env, &policy, seed, i).map(|r| r.cumulative_reward))
        .collect::<Result<_>>()?;
    if out.iter().any(|r| !r.is_finite()) {
        return Err(Error::Divergence("non-finite episode reward".into()));
    }
    Ok(out)
}

/// Mean and spread of the threshold-joint policy built from `params` over
/// episodes `0..n` of `seed`.
pub fn evaluate(params: &ThetaParams, env: &EpisodeConfig, n: usize, seed: u64) -> Result<Summary> {
    if n == 0 {
        return Err(Error::param("evaluation needs at least one episode"));
    }
    Ok(Summary::of(&rewards(env, params.expand(env)?, seed, 0..n as u64)?))
}

fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= window {
            sum -= xs[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

fn convergence_episode(ma: &[f64], tol: f64) -> Option<usize> {
    let last = *ma.last()?;
    let band = tol * last.abs().max(1e-12);
    let mut first = ma.len();
    for i in (0..ma.len()).rev() {
        if (ma[i] - last).abs() > band {
            break;
        }
        first = i;
    }
    (first < ma.len()).then_some(first + 1)
}

pub fn train(env: &EpisodeConfig, config: &LearnerConfig, seed: u64) -> Result<TrainReport> {
    config.validate()?;
    let init = config.initial_params(env)?;
    train_from(env, config, seed, init)
}

/// Runs the learner from explicit starting parameters.
pub fn train_from(env: &EpisodeConfig, config: &LearnerConfig, seed: u64, init: ThetaParams) -> Result<TrainReport> {
    config.validate()?;
    let v = env.problem.v_max();
    let c0 = config.perturbation * v;
    let a0 = config.step * v;
    let raw_limit = 1e3 * (env.problem.horizon() as f64 * v + 1.0);
    let val_seed = seed ^ VALIDATION_SALT;
    let mut signs = Rng::seed_from_u64(seed);
    signs.set_stream(PERTURB_STREAM);

    let mut raw = init.raw.clone();
    let mut best_raw = raw.clone();
    let mut best_value = f64::NEG_INFINITY;
    let mut validation = Vec::new();
    let mut val_used = 0;
    let mut validate = |raw: &[f64], iteration: usize, used: usize, best_raw: &mut Vec<f64>, best_value: &mut f64| -> Result<()> {
        if config.validation_episodes == 0 {
            return Ok(());
        }
        let set = init.expand_raw(raw, env)?;
        let value = Summary::of(&rewards(env, set, val_seed, 0..config.validation_episodes as u64)?).mean;
        val_used += config.validation_episodes;
        if value > *best_value {
            *best_value = value;
            best_raw.clone_from(&raw.to_vec());
        }
        validation.push(ValidationPoint { iteration, training_episodes: used, value, best_so_far: *best_value });
        Ok(())
    };
    validate(&raw, 0, 0, &mut best_raw, &mut best_value)?;

    let mut episode_rewards = Vec::with_capacity(config.episodes);
    let mut used = 0;
    let mut k = 0;
    let dim = raw.len();
    while used + 2 * config.n_eval <= config.episodes {
        k += 1;
        let ck = c0 / (k as f64).powf(config.gamma);
        let ak = a0 / (k as f64).powf(config.alpha);
        let delta: Vec<f64> = (0..dim).map(|_| if signs.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let plus: Vec<f64> = raw.iter().zip(&delta).map(|(a, d)| a + ck * d).collect();
        let minus: Vec<f64> = raw.iter().zip(&delta).map(|(a, d)| a - ck * d).collect();
        // Both sides see the same episodes.
        let idx = (k as u64 - 1) * config.n_eval as u64..k as u64 * config.n_eval as u64;
        let rp = rewards(env, init.expand_raw(&plus, env)?, seed, idx.clone())?;
        let rm = rewards(env, init.expand_raw(&minus, env)?, seed, idx)?;
        used += 2 * config.n_eval;
        let jp = rp.iter().sum::<f64>() / rp.len() as f64;
        let jm = rm.iter().sum::<f64>() / rm.len() as f64;
        episode_rewards.extend(rp);
        episode_rewards.extend(rm);

        let grad: Vec<f64> = delta.iter().map(|d| (jp - jm) / (2.0 * ck * d)).collect();
        let rms = (grad.iter().map(|g| g * g).sum::<f64>() / dim as f64).sqrt();
        if rms > 0.0 {
            for (a, g) in raw.iter_mut().zip(&grad) {
                *a += ak * g / rms;
            }
        }
        if raw.iter().any(|a| !a.is_finite() || a.abs() > raw_limit) {
            return Err(Error::Divergence(format!("parameters left the admissible range at iteration {k}")));
        }
        if k % config.validate_every == 0 {
            validate(&raw, k, used, &mut best_raw, &mut best_value)?;
        }
    }
    if k % config.validate_every != 0 {
        validate(&raw, k, used, &mut best_raw, &mut best_value)?;
    }

    let ma = moving_average(&episode_rewards, config.moving_window);
    let curve = episode_rewards
        .iter()
        .zip(&ma)
        .enumerate()
        .map(|(i, (&reward, &moving_avg))| CurvePoint { episode: i + 1, reward, moving_avg })
        .collect();
    let tail = &episode_rewards[episode_rewards.len().saturating_sub(config.moving_window)..];
    let ts = Summary::of(tail);
    let params = ThetaParams { raw: best_raw, ..init.clone() };
    let last_params = ThetaParams { raw, ..init };
    Ok(TrainReport {
        curve,
        validation,
        params,
        last_params,
        best_value,
        iterations: k,
        training_episodes: used,
        validation_episodes: val_used,
        episodes_to_convergence: convergence_episode(&ma, config.convergence_tol),
        terminal_normalized_std: if ts.mean != 0.0 { ts.std / ts.mean.abs() } else { f64::NAN },
    })
}
