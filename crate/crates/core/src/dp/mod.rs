//! Backward induction on the discretized state space.

mod diagnostics;
mod grid;
mod io;
mod solve;
mod stage;
mod tables;
mod thresholds;

pub use diagnostics::{check_concavity, check_lemma2, check_monotone, concavity_excess, ConcavityReport, Lemma2Report, Lemma2Violation};
pub use grid::Grid;
pub use io::{policy_csv, table_header, values_csv, TableHeader};
pub use solve::{
    cell_thresholds, expected_continuation, extract_thresholds, solve_bruteforce, solve_structured, solve_with, Solution,
    SolverMode, CONCAVITY_TOL, DEFAULT_BUDGET, DEFAULT_ND,
};
pub use stage::{clamp_warnings, interpolate, StageDecision, StagePlan};
pub use tables::{PolicyTable, ValueTable};
pub use thresholds::{OrderingViolation, ThresholdSet, ThresholdTriple};
