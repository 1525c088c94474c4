//! Decision rules mapping an observed state to an action.

mod rules;

use std::sync::Arc;

pub use rules::{
    consumption_after_charging, deferrable_threshold_action, joint_action, marginal_value, procrastination_action,
    propagate_thresholds,
    JointAction, PrioritySegment, ThetaZeroRule, ZoneDecision,
};

use crate::dp::{Solution, ThresholdSet};
use crate::problem::Problem;

/// What a controller sees at the start of interval `t` (0-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub t: usize,
    pub y: f64,
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub d: Vec<f64>,
    pub v: f64,
}

/// Per-episode decision maker. Controllers may carry state within an episode.
pub trait Controller {
    fn act(&mut self, obs: &Observation) -> Action;
}

/// A shareable policy; each episode gets its own controller.
pub trait Policy: Send + Sync {
    fn name(&self) -> String;
    fn controller(&self) -> Box<dyn Controller + '_>;
}

/// Stateless controllers are just closures over the policy.
struct FnController<F>(F);

impl<F: FnMut(&Observation) -> Action> Controller for FnController<F> {
    fn act(&mut self, obs: &Observation) -> Action {
        (self.0)(obs)
    }
}

pub(crate) fn controller_from<'a>(f: impl FnMut(&Observation) -> Action + 'a) -> Box<dyn Controller + 'a> {
    Box::new(FnController(f))
}

/// Closed-form procrastination charging; nondeferrable load takes what the
/// charger leaves of the supply.
pub struct ProcrastinationPolicy {
    pub problem: Arc<Problem>,
}

impl Policy for ProcrastinationPolicy {
    fn name(&self) -> String {
        "procrastination".into()
    }

    fn controller(&self) -> Box<dyn Controller + '_> {
        let p = &self.problem;
        controller_from(move |o: &Observation| {
            let v = procrastination_action(&p.spec, o.t, o.y, o.g);
            let d = consumption_after_charging(p.devices.at(o.t), p.tariff.at(o.t), o.g, v);
            Action { d, v }
        })
    }
}

/// Two-threshold charging rule from a threshold set.
pub struct ThresholdDeferrablePolicy {
    pub problem: Arc<Problem>,
    pub thresholds: Arc<ThresholdSet>,
}

impl Policy for ThresholdDeferrablePolicy {
    fn name(&self) -> String {
        "threshold-deferrable".into()
    }

    fn controller(&self) -> Box<dyn Controller + '_> {
        let (p, th) = (&self.problem, &self.thresholds);
        controller_from(move |o: &Observation| {
            let v = deferrable_threshold_action(&p.spec, th.at(o.t, o.g), o.y, o.g);
            let d = consumption_after_charging(p.devices.at(o.t), p.tariff.at(o.t), o.g, v);
            Action { d, v }
        })
    }
}

/// Three-zone joint rule from a threshold set.
pub struct ThresholdJointPolicy {
    pub label: String,
    pub problem: Arc<Problem>,
    pub thresholds: Arc<ThresholdSet>,
}

impl ThresholdJointPolicy {
    pub fn new(problem: Arc<Problem>, thresholds: Arc<ThresholdSet>) -> Self {
        ThresholdJointPolicy { label: "threshold-joint".into(), problem, thresholds }
    }
}

impl Policy for ThresholdJointPolicy {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn controller(&self) -> Box<dyn Controller + '_> {
        let (p, th) = (&self.problem, &self.thresholds);
        controller_from(move |o: &Observation| {
            let ja = joint_action(th.at(o.t, o.g), p.devices.at(o.t), p.tariff.at(o.t), p.v_max(), o.y, o.g);
            Action { d: ja.d, v: ja.v }
        })
    }
}

/// Stored DP actions at the nearest lattice state.
pub struct TablePolicy {
    pub problem: Arc<Problem>,
    pub solution: Arc<Solution>,
}

impl Policy for TablePolicy {
    fn name(&self) -> String {
        "dp-lookup".into()
    }

    fn controller(&self) -> Box<dyn Controller + '_> {
        let (p, s) = (&self.problem, &self.solution);
        controller_from(move |o: &Observation| {
            let iy = s.grid.nearest(o.y);
            let ig = s.grid.dg.bin_of(o.g);
            let v = s.policy.v_at(o.t, iy, ig).min(o.y.max(0.0)).min(p.v_max());
            Action { d: s.policy.d_at(o.t, iy, ig).to_vec(), v }
        })
    }
}

/// One-step lookahead on the DP continuation at the exact observed state.
pub struct LookaheadPolicy {
    pub problem: Arc<Problem>,
    pub solution: Arc<Solution>,
}

impl Policy for LookaheadPolicy {
    fn name(&self) -> String {
        "dp".into()
    }

    fn controller(&self) -> Box<dyn Controller + '_> {
        let (p, s) = (&self.problem, &self.solution);
        controller_from(move |o: &Observation| {
            let plan = s.plan(p, o.t, s.grid.dg.bin_of(o.g));
            let dec = plan.optimize(o.y.max(0.0), o.g.max(0.0));
            Action { d: dec.d, v: dec.v }
        })
    }
}
