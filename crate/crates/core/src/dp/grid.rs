use serde::{Deserialize, Serialize};

use crate::dg::DGDiscretization;
use crate::error::{Error, Result};
use crate::problem::Problem;

/// Relative tolerance for lattice commensurability checks.
const LATTICE_TOL: f64 = 1e-9;

/// Discretized state space: a uniform lattice in remaining demand times the
/// supply bins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grid {
    pub y_points: Vec<f64>,
    pub dy: f64,
    pub dg: DGDiscretization,
    pub horizon: usize,
}

fn steps(x: f64, dy: f64) -> Option<usize> {
    let r = x / dy;
    let n = r.round();
    ((r - n).abs() <= LATTICE_TOL * n.max(1.0)).then_some(n as usize)
}

impl Grid {
    /// Lattice over `[0, y_max]` with `y_max` defaulting to the initial demand.
    pub fn new(problem: &Problem, dy: f64, y_max: Option<f64>, dg: DGDiscretization) -> Result<Self> {
        let spec = &problem.spec;
        if !(dy > 0.0) || !dy.is_finite() {
            return Err(Error::InvalidGrid(format!("step must be positive, got {dy}")));
        }
        if steps(spec.v_max, dy).is_none() {
            return Err(Error::InvalidGrid(format!("step {dy} does not divide v_max = {}", spec.v_max)));
        }
        if steps(spec.y1, dy).is_none() {
            return Err(Error::InvalidGrid(format!("step {dy} does not divide y1 = {}", spec.y1)));
        }
        let y_max = y_max.unwrap_or(spec.y1);
        if y_max < spec.y1 - LATTICE_TOL {
            return Err(Error::InvalidGrid(format!("grid top {y_max} lies below y1 = {}", spec.y1)));
        }
        let n = steps(y_max, dy).ok_or_else(|| Error::InvalidGrid(format!("step {dy} does not divide y_max = {y_max}")))?;
        if dg.horizon() != spec.horizon {
            return Err(Error::InvalidGrid(format!(
                "supply discretization covers {} intervals, horizon is {}",
                dg.horizon(),
                spec.horizon
            )));
        }
        let mut y_points: Vec<f64> = (0..=n).map(|k| k as f64 * dy).collect();
        if let Some(last) = y_points.last_mut() {
            *last = if n == 0 { 0.0 } else { y_max };
        }
        // Snap the points that later need exact comparisons.
        for y in y_points.iter_mut() {
            for anchor in [spec.y1, spec.v_max] {
                if (*y - anchor).abs() <= LATTICE_TOL * dy {
                    *y = anchor;
                }
            }
        }
        Ok(Grid { y_points, dy, dg, horizon: spec.horizon })
    }

    pub fn ny(&self) -> usize {
        self.y_points.len()
    }

    pub fn ng(&self) -> usize {
        self.dg.n_bins()
    }

    pub fn y_max(&self) -> f64 {
        *self.y_points.last().expect("nonempty lattice")
    }

    /// Lattice index of `y`, if `y` sits on the lattice.
    pub fn index_of(&self, y: f64) -> Option<usize> {
        let k = (y / self.dy).round();
        (k >= 0.0 && (k as usize) < self.ny() && (y - self.y_points[k as usize]).abs() <= LATTICE_TOL * self.dy.max(1.0))
            .then_some(k as usize)
    }

    /// Nearest lattice index, clamped into range.
    pub fn nearest(&self, y: f64) -> usize {
        let k = (y / self.dy).round().max(0.0) as usize;
        k.min(self.ny() - 1)
    }
}
