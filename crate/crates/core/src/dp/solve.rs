use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::diagnostics::concavity_excess;
use super::grid::Grid;
use super::stage::{interpolate, StageDecision, StagePlan};
use super::tables::{PolicyTable, ValueTable};
use super::thresholds::{ThresholdSet, ThresholdTriple};
use crate::demand::Zone;
use crate::error::{Error, Result};
use crate::problem::Problem;

pub const DEFAULT_ND: usize = 51;
pub const DEFAULT_BUDGET: u64 = 1_000_000_000;
/// Relative tolerance of the concavity test, scaled by the largest |V|.
pub const CONCAVITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SolverMode {
    /// Zone-wise stage optimization using the threshold structure.
    Structured,
    /// Exhaustive enumeration: charging on the lattice and `nd` levels per device.
    BruteForce { nd: usize, budget: u64 },
}

impl SolverMode {
    pub fn bruteforce() -> Self {
        SolverMode::BruteForce { nd: DEFAULT_ND, budget: DEFAULT_BUDGET }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SolverMode::Structured => "structured",
            SolverMode::BruteForce { .. } => "bruteforce",
        }
    }
}

/// Tables produced by backward induction.
#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub mode: SolverMode,
    pub grid: Grid,
    /// `horizon + 1` layers; the last is the terminal value `-q(y)`.
    pub values: ValueTable,
    /// `E[V_{t+1}(y, g') | g bin]` for each of the `horizon` stages.
    pub continuation: ValueTable,
    pub policy: PolicyTable,
    pub thresholds: ThresholdSet,
}

impl Solution {
    /// Continuation slice over the lattice at stage `t` for a supply bin.
    pub fn continuation_slice(&self, t: usize, g_bin: usize) -> &[f64] {
        self.continuation.slice(t, g_bin)
    }

    /// Stage plan in effect at `(t, g_bin)`.
    pub fn plan<'a>(&'a self, problem: &'a Problem, t: usize, g_bin: usize) -> StagePlan<'a> {
        StagePlan::new(
            *problem.tariff.at(t),
            problem.devices.at(t),
            problem.v_max(),
            self.grid.dy,
            problem.spec.laxity(t),
            self.continuation.slice(t, g_bin),
        )
    }
}

/// `sum_j P[t][g_bin][j] V_{t+1}(y, j)`, linear in `y` between lattice
/// points. The last stage sees the supply-independent terminal layer.
pub fn expected_continuation(values: &ValueTable, grid: &Grid, t: usize, y: f64, g_bin: usize) -> f64 {
    let horizon = values.layers - 1;
    if t + 1 >= horizon {
        return interpolate(values.slice(horizon, 0), grid.dy, y);
    }
    grid.dg
        .row(t, g_bin)
        .iter()
        .enumerate()
        .map(|(j, p)| p * interpolate(values.slice(t + 1, j), grid.dy, y))
        .sum()
}

fn continuation_layer(values: &ValueTable, grid: &Grid, t: usize) -> Vec<Vec<f64>> {
    let horizon = values.layers - 1;
    let ny = grid.ny();
    (0..grid.ng())
        .map(|ig| {
            if t + 1 >= horizon {
                values.slice(horizon, 0).to_vec()
            } else {
                let row = grid.dg.row(t, ig);
                (0..ny).map(|iy| row.iter().enumerate().map(|(j, p)| p * values.get(t + 1, iy, j)).sum()).collect()
            }
        })
        .collect()
}

fn terminal_values(problem: &Problem, grid: &Grid) -> ValueTable {
    let (ny, ng, horizon) = (grid.ny(), grid.ng(), grid.horizon);
    let mut values = ValueTable::zeros(horizon + 1, ny, ng);
    for ig in 0..ng {
        for (iy, &y) in grid.y_points.iter().enumerate() {
            values.slice_mut(horizon, ig)[iy] = -problem.penalty.value(y);
        }
    }
    values
}

fn check_budget(problem: &Problem, grid: &Grid, nd: usize, budget: u64) -> Result<()> {
    let k = problem.devices.len();
    if k > 2 {
        return Err(Error::param(format!("brute-force mode supports at most 2 devices, got {k}")));
    }
    if nd < 2 {
        return Err(Error::param("brute-force mode needs at least 2 levels per device"));
    }
    let nv = (problem.v_max() / grid.dy).round() as u128 + 1;
    let required = grid.horizon as u128 * grid.ny() as u128 * grid.ng() as u128 * nv * (nd as u128).pow(k as u32);
    if required > budget as u128 {
        return Err(Error::BudgetExceeded { required, budget: budget as u128 });
    }
    Ok(())
}

fn solve(problem: &Problem, grid: &Grid, mode: SolverMode) -> Result<Solution> {
    problem.validate()?;
    if grid.horizon != problem.horizon() {
        return Err(Error::InvalidGrid("grid horizon differs from the problem".into()));
    }
    if let SolverMode::BruteForce { nd, budget } = mode {
        check_budget(problem, grid, nd, budget)?;
    }
    let (ny, ng, horizon, k) = (grid.ny(), grid.ng(), grid.horizon, problem.devices.len());
    let mut values = terminal_values(problem, grid);
    let mut continuation = ValueTable::zeros(horizon, ny, ng);
    let mut policy = PolicyTable::new(horizon, ny, ng, k);
    let check_concave = matches!(mode, SolverMode::Structured) || k == 0;

    for t in (0..horizon).rev() {
        let layer = continuation_layer(&values, grid, t);
        if check_concave {
            let scale = values.max_abs().max(1.0);
            for (ig, w) in layer.iter().enumerate() {
                let excess = concavity_excess(w);
                if excess > CONCAVITY_TOL * scale {
                    return Err(Error::NonConcave { stage: t + 1, g_bin: ig, excess });
                }
            }
        }
        let pv = *problem.tariff.at(t);
        let devices = problem.devices.at(t);
        let cells: Vec<Vec<StageDecision>> = layer
            .par_iter()
            .enumerate()
            .map(|(ig, w)| {
                let plan = StagePlan::new(pv, devices, problem.v_max(), grid.dy, problem.spec.laxity(t), w);
                let g = grid.dg.bin_centers[ig];
                grid.y_points
                    .iter()
                    .map(|&y| match mode {
                        SolverMode::Structured => plan.optimize(y, g),
                        SolverMode::BruteForce { nd, .. } => plan.enumerate(y, g, nd),
                    })
                    .collect()
            })
            .collect();
        for (ig, (w, decs)) in layer.iter().zip(cells).enumerate() {
            continuation.slice_mut(t, ig).copy_from_slice(w);
            for (iy, dec) in decs.into_iter().enumerate() {
                values.slice_mut(t, ig)[iy] = dec.value;
                let idx = policy.index(t, iy, ig);
                policy.v[idx] = dec.v;
                policy.zone[idx] = dec.zone;
                policy.d[idx * k..(idx + 1) * k].copy_from_slice(&dec.d);
            }
        }
    }
    if let Some(bad) = values.values.iter().find(|v| !v.is_finite()) {
        return Err(Error::param(format!("backward induction produced a non-finite value {bad}")));
    }
    let thresholds = thresholds_from_continuation(problem, grid, &continuation)?;
    Ok(Solution { mode, grid: grid.clone(), values, continuation, policy, thresholds })
}

pub fn solve_structured(problem: &Problem, grid: &Grid) -> Result<Solution> {
    solve(problem, grid, SolverMode::Structured)
}

pub fn solve_bruteforce(problem: &Problem, grid: &Grid, nd: usize, budget: u64) -> Result<Solution> {
    solve(problem, grid, SolverMode::BruteForce { nd, budget })
}

pub fn solve_with(problem: &Problem, grid: &Grid, mode: SolverMode) -> Result<Solution> {
    solve(problem, grid, mode)
}

/// Thresholds of one stage cell. The net-zero threshold is the lower median
/// over the lattice states that land in the net-zero zone of the threshold
/// implied by their shadow price.
pub fn cell_thresholds(plan: &StagePlan<'_>, grid: &Grid, g: f64) -> ThresholdTriple {
    let active = grid.y_points.iter().any(|&y| plan.optimize(y, g).zone == Zone::NetZero);
    let zero = active.then(|| plan.threshold_at_price(plan.pv.mid()).clamp(plan.theta_minus, plan.theta_plus));
    ThresholdTriple::new(plan.theta_minus, zero, plan.theta_plus)
}

fn thresholds_from_continuation(problem: &Problem, grid: &Grid, continuation: &ValueTable) -> Result<ThresholdSet> {
    let ng = grid.ng();
    let mut triples = Vec::with_capacity(grid.horizon * ng);
    for t in 0..grid.horizon {
        for ig in 0..ng {
            let plan = StagePlan::new(
                *problem.tariff.at(t),
                problem.devices.at(t),
                problem.v_max(),
                grid.dy,
                problem.spec.laxity(t),
                continuation.slice(t, ig),
            );
            triples.push(cell_thresholds(&plan, grid, grid.dg.bin_centers[ig]));
        }
    }
    ThresholdSet::new(grid.horizon, ng, grid.dg.g_max, triples)
}

/// Thresholds implied by a value table, whichever solver produced it.
pub fn extract_thresholds(problem: &Problem, grid: &Grid, values: &ValueTable) -> Result<ThresholdSet> {
    let scale = values.max_abs().max(1.0);
    let mut continuation = ValueTable::zeros(grid.horizon, grid.ny(), grid.ng());
    for t in 0..grid.horizon {
        for (ig, w) in continuation_layer(values, grid, t).into_iter().enumerate() {
            let excess = concavity_excess(&w);
            if excess > CONCAVITY_TOL * scale {
                return Err(Error::NonConcave { stage: t + 1, g_bin: ig, excess });
            }
            continuation.slice_mut(t, ig).copy_from_slice(&w);
        }
    }
    thresholds_from_continuation(problem, grid, &continuation)
}
