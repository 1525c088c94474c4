use serde::Serialize;

use super::grid::Grid;
use super::tables::{PolicyTable, ValueTable};
use crate::demand::DeferrableSpec;

/// Largest positive second difference of a lattice function (zero if concave).
pub fn concavity_excess(w: &[f64]) -> f64 {
    w.windows(3).map(|p| p[2] - 2.0 * p[1] + p[0]).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcavityReport {
    pub max_excess: f64,
    pub scale: f64,
    pub tol: f64,
    /// `(t, g_bin, excess)` with `t` 1-based.
    pub violations: Vec<(usize, usize, f64)>,
}

impl ConcavityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Second-difference test of every `(t, g)` slice; `rel_tol` scales with the
/// largest |V| in the table.
pub fn check_concavity(values: &ValueTable, rel_tol: f64) -> ConcavityReport {
    let scale = values.max_abs().max(1.0);
    let tol = rel_tol * scale;
    let mut report = ConcavityReport { max_excess: 0.0, scale, tol, violations: Vec::new() };
    for t in 0..values.layers {
        for ig in 0..values.ng {
            let e = concavity_excess(values.slice(t, ig));
            report.max_excess = report.max_excess.max(e);
            if e > tol {
                report.violations.push((t + 1, ig, e));
            }
        }
    }
    report
}

/// Pairs `(t, g_bin)` where V increases with remaining demand beyond `tol`.
pub fn check_monotone(values: &ValueTable, tol: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for t in 0..values.layers {
        for ig in 0..values.ng {
            if values.slice(t, ig).windows(2).any(|p| p[1] > p[0] + tol) {
                out.push((t + 1, ig));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma2Violation {
    pub t: usize,
    pub y: f64,
    pub g_bin: usize,
    pub v: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma2Report {
    pub checked: usize,
    pub violations: Vec<Lemma2Violation>,
}

/// Where the remaining demand needs every remaining interval
/// (`y >= (T - t) v_max` with `t` 0-based), the stored charge must be
/// `min(y, v_max)`.
pub fn check_lemma2(policy: &PolicyTable, grid: &Grid, spec: &DeferrableSpec) -> Lemma2Report {
    let mut report = Lemma2Report { checked: 0, violations: Vec::new() };
    for t in 0..policy.horizon {
        let need = spec.capacity_from(t);
        for (iy, &y) in grid.y_points.iter().enumerate() {
            if y < need - 1e-9 * grid.dy {
                continue;
            }
            for ig in 0..policy.ng {
                report.checked += 1;
                let v = policy.v_at(t, iy, ig);
                let expected = y.min(spec.v_max);
                if (v - expected).abs() > 1e-12 * (1.0 + expected) {
                    report.violations.push(Lemma2Violation { t: t + 1, y, g_bin: ig, v, expected });
                }
            }
        }
    }
    report
}
