use serde::{Deserialize, Serialize};

use super::DGModel;
use crate::error::{Error, Result};

pub const MIN_TRACE_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FitVariant {
    /// Per-interval-of-day Gaussian; `period` is the number of intervals in a day.
    Independent { period: usize },
    Ar1,
}

/// Estimates a supply model from a single reading sequence.
pub fn fit(trace: &[f64], variant: FitVariant) -> Result<DGModel> {
    if trace.len() < MIN_TRACE_LEN {
        return Err(Error::InvalidTrace(format!(
            "need at least {MIN_TRACE_LEN} readings, got {}",
            trace.len()
        )));
    }
    if let Some(i) = trace.iter().position(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidTrace(format!("reading {} is {}; readings must be finite and nonnegative", i + 1, trace[i])));
    }
    let max = trace.iter().cloned().fold(0.0, f64::max);
    let g_max = (1.1 * max).max(1e-6);
    let floor = 1e-6 * g_max;

    match variant {
        FitVariant::Independent { period } => {
            if period == 0 || period > trace.len() {
                return Err(Error::param(format!("period {period} does not fit a trace of {}", trace.len())));
            }
            let mut mean = Vec::with_capacity(period);
            let mut std = Vec::with_capacity(period);
            for k in 0..period {
                let xs: Vec<f64> = trace.iter().skip(k).step_by(period).copied().collect();
                let (m, s) = mean_std(&xs);
                mean.push(m);
                std.push(s.max(floor));
            }
            DGModel::independent(mean, std, g_max)
        }
        FitVariant::Ar1 => {
            let x = &trace[..trace.len() - 1];
            let y = &trace[1..];
            let (mx, _) = mean_std(x);
            let (my, _) = mean_std(y);
            let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
            let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
            let (c, phi) = if sxx <= f64::EPSILON * x.len() as f64 * (1.0 + mx * mx) {
                (my, 0.0)
            } else {
                let phi = sxy / sxx;
                (my - phi * mx, phi)
            };
            if !(phi.abs() < 1.0) {
                return Err(Error::InvalidTrace(format!("fitted AR(1) coefficient {phi:.4} is not stationary")));
            }
            let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - c - phi * a).powi(2)).sum();
            let dof = (x.len() as f64 - 2.0).max(1.0);
            let sigma = (rss / dof).sqrt().max(floor);
            DGModel::ar1(c, phi, sigma, g_max)
        }
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}
