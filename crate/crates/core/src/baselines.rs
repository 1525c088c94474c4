//! Comparison policies: certainty-equivalent MPC, greedy and uniform charging.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dg::DGModel;
use crate::dp::StagePlan;
use crate::error::{Error, Result};
use crate::policy::{consumption_after_charging, controller_from, Action, Controller, Observation, Policy};
use crate::problem::Problem;

/// Charge as fast as possible.
pub fn greedy_action(problem: &Problem, t: usize, y: f64, g: f64) -> Action {
    let v = y.max(0.0).min(problem.v_max());
    Action { d: consumption_after_charging(problem.devices.at(t), problem.tariff.at(t), g, v), v }
}

/// Spread the remaining demand evenly over the remaining intervals.
pub fn uniform_action(problem: &Problem, t: usize, y: f64, g: f64) -> Action {
    let left = problem.horizon().saturating_sub(t).max(1) as f64;
    let v = (y.max(0.0) / left).min(problem.v_max());
    Action { d: consumption_after_charging(problem.devices.at(t), problem.tariff.at(t), g, v), v }
}

pub struct GreedyPolicy {
    pub problem: Arc<Problem>,
}

impl Policy for GreedyPolicy {
    fn name(&self) -> String {
        "greedy".into()
    }

    fn controller(&self) -> Box<dyn Controller + '_> {
        controller_from(move |o: &Observation| greedy_action(&self.problem, o.t, o.y, o.g))
    }
}

pub struct UniformPolicy {
    pub problem: Arc<Problem>,
}

impl Policy for UniformPolicy {
    fn name(&self) -> String {
        "uniform".into()
    }

    fn controller(&self) -> Box<dyn Controller + '_> {
        controller_from(move |o: &Observation| uniform_action(&self.problem, o.t, o.y, o.g))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Forecast {
    /// Iterate the model's conditional mean from the observed supply.
    #[default]
    ConditionalMean,
    /// Hold the observed supply constant.
    Persistence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub forecast: Forecast,
    pub replan_every: usize,
    /// Upper bound on lattice points times stages per plan.
    pub budget: u64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig { forecast: Forecast::ConditionalMean, replan_every: 1, budget: 10_000_000 }
    }
}

/// Certainty-equivalent receding-horizon control on a demand lattice.
pub struct MpcPolicy {
    pub problem: Arc<Problem>,
    pub model: DGModel,
    pub config: MpcConfig,
    dy: f64,
    y_points: Vec<f64>,
}

impl MpcPolicy {
    /// `dy` must divide `v_max` and `y1`, as for the DP grid.
    pub fn new(problem: Arc<Problem>, model: DGModel, config: MpcConfig, dy: f64) -> Result<Self> {
        if config.replan_every == 0 {
            return Err(Error::param("replan_every must be at least 1"));
        }
        let steps = |x: f64| {
            let r = x / dy;
            ((r - r.round()).abs() <= 1e-9 * r.round().max(1.0)).then_some(r.round() as usize)
        };
        if !(dy > 0.0) || steps(problem.v_max()).is_none() {
            return Err(Error::InvalidGrid(format!("step {dy} does not divide v_max = {}", problem.v_max())));
        }
        let n = steps(problem.spec.y1).ok_or_else(|| Error::InvalidGrid(format!("step {dy} does not divide y1 = {}", problem.spec.y1)))?;
        let required = (n as u128 + 1) * problem.horizon() as u128;
        if required > config.budget as u128 {
            return Err(Error::BudgetExceeded { required, budget: config.budget as u128 });
        }
        let mut y_points: Vec<f64> = (0..=n).map(|k| k as f64 * dy).collect();
        if let Some(last) = y_points.last_mut() {
            *last = problem.spec.y1;
        }
        Ok(MpcPolicy { problem, model, config, dy, y_points })
    }

    /// Supply forecast for intervals `t..T` starting from the observed `g`.
    pub fn forecast(&self, t: usize, g: f64) -> Vec<f64> {
        let horizon = self.problem.horizon();
        let mut out = Vec::with_capacity(horizon - t);
        let mut cur = g;
        for tau in t..horizon {
            out.push(cur);
            if self.config.forecast == Forecast::ConditionalMean {
                cur = self.model.conditional_mean(tau, cur);
            }
        }
        out
    }

    /// Deterministic backward induction along the forecast. Returns the
    /// continuation after each interval `t..T` on the lattice: element `k`
    /// is the value of entering interval `t + k + 1`.
    pub fn plan(&self, t: usize, g: f64) -> Vec<Vec<f64>> {
        let p = &self.problem;
        let horizon = p.horizon();
        let path = self.forecast(t, g);
        let mut w: Vec<f64> = self.y_points.iter().map(|&y| -p.penalty.value(y)).collect();
        let mut layers = vec![w.clone()];
        for tau in (t + 1..horizon).rev() {
            let gf = path[tau - t];
            let next: Vec<f64> = {
                let plan = StagePlan::new(*p.tariff.at(tau), p.devices.at(tau), p.v_max(), self.dy, p.spec.laxity(tau), &w);
                self.y_points.iter().map(|&y| plan.optimize(y, gf).value).collect()
            };
            w = next;
            layers.push(w.clone());
        }
        layers.reverse();
        layers
    }
}

struct MpcController<'a> {
    policy: &'a MpcPolicy,
    planned_at: Option<usize>,
    layers: Vec<Vec<f64>>,
}

impl Controller for MpcController<'_> {
    fn act(&mut self, o: &Observation) -> Action {
        let pol = self.policy;
        let p = &pol.problem;
        let stale = match self.planned_at {
            None => true,
            Some(s) => o.t < s || o.t - s >= pol.config.replan_every,
        };
        if stale {
            self.layers = pol.plan(o.t, o.g);
            self.planned_at = Some(o.t);
        }
        let k = o.t - self.planned_at.expect("planned");
        let w = &self.layers[k];
        let plan = StagePlan::new(*p.tariff.at(o.t), p.devices.at(o.t), p.v_max(), pol.dy, p.spec.laxity(o.t), w);
        let dec = plan.optimize(o.y.max(0.0), o.g.max(0.0));
        Action { d: dec.d, v: dec.v }
    }
}

impl Policy for MpcPolicy {
    fn name(&self) -> String {
        "mpc".into()
    }

    fn controller(&self) -> Box<dyn Controller + '_> {
        Box::new(MpcController { policy: self, planned_at: None, layers: Vec::new() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{DeferrableSpec, DeviceSet, PenaltyFunction, QuadraticUtility};
    use crate::tariff::TariffCalendar;

    fn problem(k: usize) -> Arc<Problem> {
        let tariff = TariffCalendar::flat(5, 0.4, 0.1).unwrap();
        let devs = (0..k).map(|_| QuadraticUtility::new(0.9, 1.0, 1.0).unwrap()).collect();
        Arc::new(
            Problem::new(
                DeferrableSpec::new(3.0, 5, 1.0).unwrap(),
                DeviceSet::new(devs).unwrap(),
                PenaltyFunction::new(0.6, 0.05, &tariff).unwrap(),
                tariff,
            )
            .unwrap(),
        )
    }

    #[test]
    fn greedy_and_uniform_definitions() {
        let p = problem(1);
        assert_eq!(greedy_action(&p, 0, 3.0, 0.2).v, 1.0);
        assert_eq!(greedy_action(&p, 0, 0.4, 0.2).v, 0.4);
        assert_eq!(uniform_action(&p, 2, 3.0, 0.0).v, 1.0);
        assert_eq!(uniform_action(&p, 0, 2.5, 0.0).v, 0.5);
        for t in 0..5 {
            for iy in 0..=30 {
                let y = iy as f64 * 0.1;
                for ig in 0..10 {
                    let g = ig as f64 * 0.3;
                    for a in [greedy_action(&p, t, y, g), uniform_action(&p, t, y, g)] {
                        assert!(a.v >= 0.0 && a.v <= y.min(1.0));
                        assert!(a.d.iter().all(|&d| (0.0..=1.0).contains(&d)));
                    }
                }
            }
        }
    }

    #[test]
    fn persistence_without_supply_plans_for_none() {
        let p = problem(0);
        let model = DGModel::independent(vec![1.0], vec![0.3], 2.0).unwrap();
        let cfg = MpcConfig { forecast: Forecast::Persistence, ..Default::default() };
        let mpc = MpcPolicy::new(p.clone(), model, cfg, 0.5).unwrap();
        assert!(mpc.forecast(1, 0.0).iter().all(|&g| g == 0.0));
        // With no supply in sight, buying can wait exactly until the laxity runs out.
        let mut c = mpc.controller();
        let a = c.act(&Observation { t: 0, y: 3.0, g: 0.0 });
        assert_eq!(a.v, 0.0);
        let a = c.act(&Observation { t: 2, y: 3.0, g: 0.0 });
        assert_eq!(a.v, 1.0);
    }

    #[test]
    fn conditional_mean_forecast_iterates_the_model() {
        let p = problem(0);
        let model = DGModel::ar1(0.2, 0.5, 0.0, 2.0).unwrap();
        let mpc = MpcPolicy::new(p, model, MpcConfig::default(), 0.5).unwrap();
        let f = mpc.forecast(2, 1.0);
        assert_eq!(f.len(), 3);
        assert!((f[1] - 0.7).abs() < 1e-12 && (f[2] - 0.55).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let p = problem(0);
        let model = DGModel::independent(vec![1.0], vec![0.3], 2.0).unwrap();
        let cfg = MpcConfig { replan_every: 0, ..Default::default() };
        assert!(MpcPolicy::new(p.clone(), model.clone(), cfg, 0.5).is_err());
        let cfg = MpcConfig { budget: 3, ..Default::default() };
        assert!(matches!(MpcPolicy::new(p, model, cfg, 0.5), Err(Error::BudgetExceeded { .. })));
    }
}
