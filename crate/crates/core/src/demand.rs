//! Demand side: utilities of the nondeferrable devices, the incompletion
//! penalty, the deferrable job, and the per-interval optimal nondeferrable
//! consumption (consumer / producer / net-zero zones).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tariff::{PriceVector, TariffCalendar};

/// What the stage optimizer needs from a concave device utility.
///
/// Other concave families can be added by implementing these three maps;
/// `inverse_marginal` must return the maximizer of `value(d) - p * d` over
/// `[0, capacity]`.
pub trait Utility {
    fn value(&self, d: f64) -> f64;
    fn marginal(&self, d: f64) -> f64;
    fn inverse_marginal(&self, p: f64) -> f64;
    fn capacity(&self) -> f64;
}

/// `U(d) = a*d - b/2 * d^2` on `[0, d_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticUtility {
    pub a: f64,
    pub b: f64,
    pub d_max: f64,
}

impl QuadraticUtility {
    pub fn new(a: f64, b: f64, d_max: f64) -> Result<Self> {
        let u = QuadraticUtility { a, b, d_max };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite() && self.d_max.is_finite()) {
            return Err(Error::param("utility parameters must be finite"));
        }
        if self.b <= 0.0 {
            return Err(Error::param(format!("utility curvature must be positive, got {}", self.b)));
        }
        if self.d_max < 0.0 || self.a < 0.0 {
            return Err(Error::param("utility requires a >= 0 and d_max >= 0"));
        }
        Ok(())
    }
}

impl Utility for QuadraticUtility {
    fn value(&self, d: f64) -> f64 {
        self.a * d - 0.5 * self.b * d * d
    }

    fn marginal(&self, d: f64) -> f64 {
        self.a - self.b * d
    }

    fn inverse_marginal(&self, p: f64) -> f64 {
        ((self.a - p) / self.b).clamp(0.0, self.d_max)
    }

    fn capacity(&self) -> f64 {
        self.d_max
    }
}

pub fn inverse_marginal(u: &QuadraticUtility, p: f64) -> f64 {
    u.inverse_marginal(p)
}

/// Nondeferrable devices, time-invariant unless an interval has an override.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceSet {
    pub devices: Vec<QuadraticUtility>,
    /// 0-based interval -> replacement device list (same length as `devices`).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<usize, Vec<QuadraticUtility>>,
}

impl DeviceSet {
    pub fn new(devices: Vec<QuadraticUtility>) -> Result<Self> {
        let set = DeviceSet { devices, overrides: BTreeMap::new() };
        set.validate()?;
        Ok(set)
    }

    pub fn empty() -> Self {
        DeviceSet::default()
    }

    pub fn with_override(mut self, t: usize, devices: Vec<QuadraticUtility>) -> Result<Self> {
        self.overrides.insert(t, devices);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for u in &self.devices {
            u.validate()?;
        }
        for (t, list) in &self.overrides {
            if list.len() != self.devices.len() {
                return Err(Error::param(format!(
                    "device override at interval {} has {} devices, expected {}",
                    t + 1,
                    list.len(),
                    self.devices.len()
                )));
            }
            for u in list {
                u.validate()?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    /// Devices in effect at 0-based interval `t`.
    pub fn at(&self, t: usize) -> &[QuadraticUtility] {
        self.overrides.get(&t).map(Vec::as_slice).unwrap_or(&self.devices)
    }
}

pub fn total_utility(devices: &[QuadraticUtility], d: &[f64]) -> f64 {
    devices.iter().zip(d).map(|(u, &x)| u.value(x)).sum()
}

pub fn total_capacity(devices: &[QuadraticUtility]) -> f64 {
    devices.iter().map(|u| u.d_max).sum()
}

/// Aggregate demand `sum_i inverse_marginal_i(p)`.
pub fn aggregate_demand(devices: &[QuadraticUtility], p: f64) -> f64 {
    devices.iter().map(|u| u.inverse_marginal(p)).sum()
}

/// Net-consumption zone of an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Zone {
    Consumer,
    Producer,
    NetZero,
}

impl Zone {
    pub fn as_str(&self) -> &'static str {
        match self {
            Zone::Consumer => "consumer",
            Zone::Producer => "producer",
            Zone::NetZero => "net-zero",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NondeferrableDecision {
    pub d: Vec<f64>,
    pub zone: Zone,
    /// Shadow price of supply: the buy rate for consumers, the sell rate for
    /// producers, the water level in between for net-zero.
    pub nu: f64,
}

/// Splits `total` kWh across devices by equalizing marginal utility.
///
/// Aggregate demand is piecewise linear in the water level, so the level is
/// found exactly on the segment between consecutive device breakpoints in
/// `[lo, hi]`. The caller guarantees
/// `aggregate_demand(hi) <= total <= aggregate_demand(lo)`. Returns the
/// allocation and the water level.
pub fn water_fill(devices: &[QuadraticUtility], total: f64, lo: f64, hi: f64) -> Result<(Vec<f64>, f64)> {
    const TOL: f64 = 1e-12;
    let d_hi = aggregate_demand(devices, hi);
    let d_lo = aggregate_demand(devices, lo);
    if !(d_hi <= total + TOL && total <= d_lo + TOL) || !total.is_finite() {
        return Err(Error::Bracket { target: total, capacity: total_capacity(devices) });
    }
    let alloc = |p: f64| -> Vec<f64> { devices.iter().map(|u| u.inverse_marginal(p)).collect() };
    if (d_hi - total).abs() <= TOL {
        return Ok((alloc(hi), hi));
    }
    if (d_lo - total).abs() <= TOL {
        return Ok((alloc(lo), lo));
    }
    let mut knots: Vec<f64> = devices
        .iter()
        .flat_map(|u| [u.a, u.a - u.b * u.d_max])
        .filter(|&p| p > lo && p < hi)
        .collect();
    knots.push(lo);
    knots.push(hi);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut level = hi;
    for w in knots.windows(2) {
        let (p0, p1) = (w[0], w[1]);
        let (s0, s1) = (aggregate_demand(devices, p0), aggregate_demand(devices, p1));
        if s1 <= total && total <= s0 {
            level = if s0 > s1 { p0 + (s0 - total) / (s0 - s1) * (p1 - p0) } else { p0 };
            break;
        }
    }
    Ok((alloc(level), level))
}

/// Water-fills any feasible total, with the bracket taken wide enough to cover
/// every device's marginal range.
pub fn water_fill_total(devices: &[QuadraticUtility], total: f64) -> Result<(Vec<f64>, f64)> {
    let hi = devices.iter().map(|u| u.a).fold(0.0, f64::max);
    let lo = devices.iter().map(|u| u.a - u.b * u.d_max).fold(hi, f64::min);
    water_fill(devices, total, lo, hi)
}

/// Optimal nondeferrable consumption when `g` kWh of free supply is available.
///
/// `g` at or below the consumer boundary `sum d+` buys at the margin; at or
/// above the producer boundary `sum d-` exports at the margin; in between the
/// household consumes exactly `g`. At either boundary exactly, the net-zero
/// branch is taken; it gives the same allocation. Negative `g` (supply already
/// committed elsewhere) is a consumer.
pub fn nondeferrable_optimal(devices: &[QuadraticUtility], pv: &PriceVector, g: f64) -> Result<NondeferrableDecision> {
    let d_plus = aggregate_demand(devices, pv.buy);
    let d_minus = aggregate_demand(devices, pv.sell);
    if g < d_plus {
        return Ok(NondeferrableDecision {
            d: devices.iter().map(|u| u.inverse_marginal(pv.buy)).collect(),
            zone: Zone::Consumer,
            nu: pv.buy,
        });
    }
    if g > d_minus {
        return Ok(NondeferrableDecision {
            d: devices.iter().map(|u| u.inverse_marginal(pv.sell)).collect(),
            zone: Zone::Producer,
            nu: pv.sell,
        });
    }
    let (d, nu) = water_fill(devices, g, pv.sell, pv.buy)?;
    Ok(NondeferrableDecision { d, zone: Zone::NetZero, nu })
}

/// `q(y) = c1*y + c2*y^2`, the penalty on demand left at the deadline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyFunction {
    pub c1: f64,
    pub c2: f64,
}

impl PenaltyFunction {
    /// Builds the penalty and checks that its slope at zero beats every buy rate.
    pub fn new(c1: f64, c2: f64, tariff: &TariffCalendar) -> Result<Self> {
        let q = PenaltyFunction { c1, c2 };
        q.check_against(tariff)?;
        Ok(q)
    }

    pub fn check_against(&self, tariff: &TariffCalendar) -> Result<()> {
        if !(self.c1.is_finite() && self.c2.is_finite()) || self.c2 <= 0.0 {
            return Err(Error::param(format!("penalty requires finite c1 and c2 > 0, got c2={}", self.c2)));
        }
        let max_buy = tariff.max_buy();
        if self.c1 <= max_buy {
            return Err(Error::param(format!(
                "penalty slope at zero c1={} must exceed the maximum buy rate {max_buy}",
                self.c1
            )));
        }
        Ok(())
    }

    /// Penalty for `y >= 0`; negative inputs are treated as zero.
    pub fn value(&self, y: f64) -> f64 {
        let y = y.max(0.0);
        self.c1 * y + self.c2 * y * y
    }

    pub fn slope(&self, y: f64) -> f64 {
        self.c1 + 2.0 * self.c2 * y.max(0.0)
    }
}

pub fn penalty(q: &PenaltyFunction, y: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::param(format!("penalty argument must be nonnegative, got {y}")));
    }
    Ok(q.value(y))
}

pub fn penalty_slope(q: &PenaltyFunction, y: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::param(format!("penalty argument must be nonnegative, got {y}")));
    }
    Ok(q.slope(y))
}

/// Charging efficiency. Demand is expressed in delivered kWh, so it is one.
pub const ETA: f64 = 1.0;

/// The deferrable job: `y1` kWh to deliver over `horizon` intervals at most
/// `v_max` kWh per interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeferrableSpec {
    pub y1: f64,
    pub horizon: usize,
    pub v_max: f64,
}

impl DeferrableSpec {
    pub fn new(y1: f64, horizon: usize, v_max: f64) -> Result<Self> {
        let s = DeferrableSpec { y1, horizon, v_max };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::param("horizon must be at least one interval"));
        }
        if !(self.v_max > 0.0) || !self.v_max.is_finite() {
            return Err(Error::param(format!("v_max must be positive, got {}", self.v_max)));
        }
        let cap = self.horizon as f64 * self.v_max;
        if !(self.y1 >= 0.0) || self.y1 > cap * (1.0 + 1e-12) {
            return Err(Error::param(format!(
                "initial demand {} must lie in [0, horizon * v_max = {cap}]",
                self.y1
            )));
        }
        Ok(())
    }

    /// Energy deliverable from 0-based interval `t` through the deadline.
    pub fn capacity_from(&self, t: usize) -> f64 {
        self.horizon.saturating_sub(t) as f64 * self.v_max
    }

    /// Largest useful threshold at 0-based interval `t`: what the intervals
    /// after `t` can still deliver.
    pub fn laxity(&self, t: usize) -> f64 {
        self.horizon.saturating_sub(t + 1) as f64 * self.v_max
    }
}
