//! Colocated supply (DG) models.
//!
//! Every model produces values in `[0, g_max]`. Parametric models draw a
//! Gaussian and clamp it to that range, so mass outside the range piles up at
//! the boundaries; the discretization uses the same censored law, which keeps
//! transition rows exactly stochastic.

mod discretize;
mod fit;
mod trace;

pub use discretize::{discretize, DGDiscretization, DEFAULT_BINS};
pub use fit::{fit, FitVariant};
pub use fit::MIN_TRACE_LEN;
pub use trace::{read_trace, read_trace_csv, Trace};

use rand::{Rng as _, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rng = rand_chacha::ChaCha8Rng;

/// Random stream for episode `index` under `master_seed`. Streams for
/// different indices do not overlap, whatever order they are consumed in.
pub fn episode_rng(master_seed: u64, index: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Gaussian law before clamping to `[0, g_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CensoredGaussian {
    pub mean: f64,
    pub std: f64,
    pub g_max: f64,
}

impl CensoredGaussian {
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        let eps: f64 = if self.std > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
        (self.mean + self.std * eps).clamp(0.0, self.g_max)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if self.std <= 0.0 {
            return if x >= self.mean { 1.0 } else { 0.0 };
        }
        normal_cdf((x - self.mean) / self.std)
    }

    /// Mean of the clamped variable.
    pub fn censored_mean(&self) -> f64 {
        if self.std <= 0.0 {
            return self.mean.clamp(0.0, self.g_max);
        }
        // E[clamp(X, 0, M)] = integral over [0, M] of P(X > x).
        let a = -self.mean / self.std;
        let b = (self.g_max - self.mean) / self.std;
        let psi = |z: f64| z * normal_cdf(z) + normal_pdf(z);
        self.g_max - self.std * (psi(b) - psi(a))
    }
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Supply model. Interval indices are 0-based episode intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DGModel {
    /// Independent across intervals; `mean[t % len]`, `std[t % len]`.
    Independent { mean: Vec<f64>, std: Vec<f64>, g_max: f64 },
    /// `g' = c + phi * g + sigma * eps`. The first interval draws from the
    /// stationary law.
    Ar1 { c: f64, phi: f64, sigma: f64, g_max: f64 },
    /// Recorded day traces; an episode replays one trace chosen uniformly.
    Empirical { traces: Vec<Vec<f64>>, g_max: f64 },
}

impl DGModel {
    pub fn independent(mean: Vec<f64>, std: Vec<f64>, g_max: f64) -> Result<Self> {
        let m = DGModel::Independent { mean, std, g_max };
        m.validate()?;
        Ok(m)
    }

    pub fn ar1(c: f64, phi: f64, sigma: f64, g_max: f64) -> Result<Self> {
        let m = DGModel::Ar1 { c, phi, sigma, g_max };
        m.validate()?;
        Ok(m)
    }

    pub fn empirical(traces: Vec<Vec<f64>>, g_max: f64) -> Result<Self> {
        let m = DGModel::Empirical { traces, g_max };
        m.validate()?;
        Ok(m)
    }

    /// Deterministic supply: independent with zero spread.
    pub fn deterministic(profile: Vec<f64>, g_max: f64) -> Result<Self> {
        let std = vec![0.0; profile.len()];
        Self::independent(profile, std, g_max)
    }

    pub fn g_max(&self) -> f64 {
        match self {
            DGModel::Independent { g_max, .. } | DGModel::Ar1 { g_max, .. } | DGModel::Empirical { g_max, .. } => {
                *g_max
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g_max = self.g_max();
        if !(g_max > 0.0) || !g_max.is_finite() {
            return Err(Error::param(format!("g_max must be positive, got {g_max}")));
        }
        match self {
            DGModel::Independent { mean, std, .. } => {
                if mean.is_empty() || mean.len() != std.len() {
                    return Err(Error::param("independent model needs equal-length, nonempty mean and std profiles"));
                }
                if mean.iter().chain(std).any(|x| !x.is_finite()) || std.iter().any(|&s| s < 0.0) {
                    return Err(Error::param("independent model needs finite means and nonnegative stds"));
                }
            }
            DGModel::Ar1 { c, phi, sigma, .. } => {
                if !(phi.abs() < 1.0) {
                    return Err(Error::param(format!("AR(1) coefficient must satisfy |phi| < 1, got {phi}")));
                }
                if !c.is_finite() || !(sigma >= &0.0) || !sigma.is_finite() {
                    return Err(Error::param("AR(1) needs finite c and sigma >= 0"));
                }
            }
            DGModel::Empirical { traces, .. } => {
                if traces.is_empty() || traces.iter().any(|t| t.is_empty()) {
                    return Err(Error::param("empirical model needs at least one nonempty trace"));
                }
                if traces.iter().flatten().any(|&x| !(0.0..=g_max).contains(&x)) {
                    return Err(Error::param("empirical readings must lie in [0, g_max]"));
                }
            }
        }
        Ok(())
    }

    /// Checks the model can drive an episode of `horizon` intervals.
    pub fn check_horizon(&self, horizon: usize) -> Result<()> {
        if let DGModel::Empirical { traces, .. } = self {
            if let Some(short) = traces.iter().find(|t| t.len() < horizon) {
                return Err(Error::param(format!(
                    "empirical trace has {} readings, horizon needs {horizon}",
                    short.len()
                )));
            }
        }
        Ok(())
    }

    /// Law of the first interval's supply, for parametric models.
    pub fn initial_law(&self) -> Option<CensoredGaussian> {
        match self {
            DGModel::Independent { mean, std, g_max } => Some(CensoredGaussian { mean: mean[0], std: std[0], g_max: *g_max }),
            DGModel::Ar1 { c, phi, sigma, g_max } => Some(CensoredGaussian {
                mean: c / (1.0 - phi),
                std: sigma / (1.0 - phi * phi).sqrt(),
                g_max: *g_max,
            }),
            DGModel::Empirical { .. } => None,
        }
    }

    /// Law of `g_{t+1}` given `g_t = g`, for parametric models.
    pub fn conditional_law(&self, t: usize, g: f64) -> Option<CensoredGaussian> {
        match self {
            DGModel::Independent { mean, std, g_max } => {
                let k = (t + 1) % mean.len();
                Some(CensoredGaussian { mean: mean[k], std: std[k], g_max: *g_max })
            }
            DGModel::Ar1 { c, phi, sigma, g_max } => {
                Some(CensoredGaussian { mean: c + phi * g, std: *sigma, g_max: *g_max })
            }
            DGModel::Empirical { .. } => None,
        }
    }

    pub fn sample_initial(&self, rng: &mut Rng) -> f64 {
        match self {
            DGModel::Empirical { traces, .. } => traces[pick(rng, traces.len())][0],
            _ => self.initial_law().expect("parametric").sample(rng),
        }
    }

    /// Draws `g_{t+1}` given `g_t = g`.
    pub fn sample_next(&self, g: f64, t: usize, rng: &mut Rng) -> f64 {
        match self {
            DGModel::Empirical { traces, .. } => {
                let tr = &traces[pick(rng, traces.len())];
                tr[(t + 1) % tr.len()]
            }
            _ => self.conditional_law(t, g).expect("parametric").sample(rng),
        }
    }

    /// A whole episode path. Empirical models replay a single trace.
    pub fn sample_path(&self, horizon: usize, fixed_first: Option<f64>, rng: &mut Rng) -> Vec<f64> {
        let g_max = self.g_max();
        if let DGModel::Empirical { traces, .. } = self {
            let tr = &traces[pick(rng, traces.len())];
            let mut path: Vec<f64> = (0..horizon).map(|t| tr[t % tr.len()]).collect();
            if let (Some(g1), Some(first)) = (fixed_first, path.first_mut()) {
                *first = g1.clamp(0.0, g_max);
            }
            return path;
        }
        let mut path = Vec::with_capacity(horizon);
        if horizon == 0 {
            return path;
        }
        let mut g = match fixed_first {
            Some(g1) => g1.clamp(0.0, g_max),
            None => self.sample_initial(rng),
        };
        path.push(g);
        for t in 0..horizon - 1 {
            g = self.sample_next(g, t, rng);
            path.push(g);
        }
        path
    }

    /// `E[g_{t+1} | g_t = g]` under the clamped law.
    pub fn conditional_mean(&self, t: usize, g: f64) -> f64 {
        match self {
            DGModel::Empirical { traces, .. } => {
                traces.iter().map(|tr| tr[(t + 1) % tr.len()]).sum::<f64>() / traces.len() as f64
            }
            _ => self.conditional_law(t, g).expect("parametric").censored_mean(),
        }
    }
}

fn pick(rng: &mut Rng, n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        rng.random_range(0..n)
    }
}
