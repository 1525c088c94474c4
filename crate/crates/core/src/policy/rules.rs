use serde::{Deserialize, Serialize};

use crate::demand::{
    aggregate_demand, nondeferrable_optimal, total_capacity, water_fill_total, DeferrableSpec, QuadraticUtility, Utility, Zone,
};
use crate::dp::{ThresholdSet, ThresholdTriple};
use crate::error::{Error, Result};
use crate::tariff::{PriceVector, TariffCalendar};

/// Charging rule under time-invariant prices without nondeferrable load:
/// use own supply first and buy only what the remaining intervals could no
/// longer deliver.
pub fn procrastination_action(spec: &DeferrableSpec, t: usize, y: f64, g: f64) -> f64 {
    let theta = spec.laxity(t);
    let m = spec.v_max.min(g.max(0.0));
    if y <= m {
        y.max(0.0)
    } else if y <= theta + m {
        m
    } else {
        (y - theta).min(spec.v_max)
    }
}

/// Two-threshold charging rule for the pure deferrable case.
pub fn deferrable_threshold_action(spec: &DeferrableSpec, th: &ThresholdTriple, y: f64, g: f64) -> f64 {
    let g = g.max(0.0);
    let m = spec.v_max.min(g);
    let v = if y <= th.theta_minus {
        0.0
    } else if y <= th.theta_minus + m {
        y - th.theta_minus
    } else if y <= th.theta_plus + g {
        m
    } else {
        (y - th.theta_plus).min(spec.v_max)
    };
    v.clamp(0.0, spec.v_max.min(y.max(0.0)))
}

/// Priority segment of the remaining demand relative to the thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrioritySegment {
    /// Nondeferrable, then export, then deferrable.
    I,
    /// Nondeferrable, then deferrable, then export.
    II,
    /// Nondeferrable and deferrable tied, then export.
    III,
    /// Deferrable first.
    IV,
}

impl PrioritySegment {
    pub fn classify(th: &ThresholdTriple, v_max: f64, y: f64) -> Self {
        if y <= th.theta_minus {
            PrioritySegment::I
        } else if y <= th.theta_plus {
            PrioritySegment::II
        } else if y <= th.theta_plus + v_max {
            PrioritySegment::III
        } else {
            PrioritySegment::IV
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZoneDecision {
    pub zone: Zone,
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub segment: PrioritySegment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointAction {
    pub d: Vec<f64>,
    pub v: f64,
    pub decision: ZoneDecision,
}

/// Three-zone joint rule from one threshold triple.
pub fn joint_action(th: &ThresholdTriple, devices: &[QuadraticUtility], pv: &PriceVector, v_max: f64, y: f64, g: f64) -> JointAction {
    let y = y.max(0.0);
    let g = g.max(0.0);
    let cap = v_max.min(y);
    let v_plus = (y - th.theta_plus).max(0.0).min(cap);
    let v_minus = (y - th.theta_minus).max(0.0).min(cap);
    let delta_plus = v_plus + aggregate_demand(devices, pv.buy);
    let delta_minus = v_minus + aggregate_demand(devices, pv.sell);
    let segment = PrioritySegment::classify(th, v_max, y);
    let at = |p: f64| -> Vec<f64> { devices.iter().map(|u| u.inverse_marginal(p)).collect() };
    let (zone, v, d) = if g < delta_plus {
        (Zone::Consumer, v_plus, at(pv.buy))
    } else if g > delta_minus {
        (Zone::Producer, v_minus, at(pv.sell))
    } else {
        let lo = (g - total_capacity(devices)).max(0.0);
        let hi = cap.min(g).max(lo);
        let v = net_zero_charge(th, devices, pv, y, g, lo, hi);
        let d = if devices.is_empty() {
            Vec::new()
        } else {
            water_fill_total(devices, (g - v).clamp(0.0, total_capacity(devices))).map(|r| r.0).unwrap_or_else(|_| at(pv.buy))
        };
        (Zone::NetZero, v, d)
    };
    JointAction { d, v, decision: ZoneDecision { zone, delta_plus, delta_minus, segment } }
}

/// Marginal value of one more kWh of remaining demand being served now, read
/// off the thresholds: the sell rate at `theta-`, the mid price at `theta0`,
/// the buy rate at `theta+`, linear in between and flat outside.
pub fn marginal_value(th: &ThresholdTriple, pv: &PriceVector, x: f64) -> f64 {
    let mut knots = vec![(th.theta_minus, pv.sell)];
    if let Some(z) = th.theta_zero {
        knots.push((z, pv.mid()));
    }
    knots.push((th.theta_plus, pv.buy));
    if x <= knots[0].0 {
        return knots[0].1;
    }
    for w in knots.windows(2) {
        let ((x0, p0), (x1, p1)) = (w[0], w[1]);
        if x <= x1 {
            return if x1 > x0 { p0 + (p1 - p0) * (x - x0) / (x1 - x0) } else { p1 };
        }
    }
    pv.buy
}

/// Shadow price of `s` kWh of supply left for the nondeferrable devices.
fn supply_price(devices: &[QuadraticUtility], pv: &PriceVector, s: f64) -> f64 {
    if devices.is_empty() {
        return pv.sell;
    }
    nondeferrable_optimal(devices, pv, s).map(|r| r.nu).unwrap_or(pv.buy)
}

/// Net-zero charge: the smallest `v` in `[lo, hi]` at which the supply left
/// for the devices is worth as much as the deferrable demand it would serve.
/// Where the devices' shadow price is locally flat this is
/// `min(v_max, [y - theta0]+)`.
fn net_zero_charge(th: &ThresholdTriple, devices: &[QuadraticUtility], pv: &PriceVector, y: f64, g: f64, lo: f64, hi: f64) -> f64 {
    let gap = |v: f64| supply_price(devices, pv, g - v) - marginal_value(th, pv, y - v);
    if hi <= lo || gap(lo) >= 0.0 {
        return lo;
    }
    if gap(hi) < 0.0 {
        return hi;
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if gap(m) >= 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    b
}

/// Nondeferrable consumption given that `v` of the supply `g` already went
/// to the deferrable load.
pub fn consumption_after_charging(devices: &[QuadraticUtility], pv: &PriceVector, g: f64, v: f64) -> Vec<f64> {
    nondeferrable_optimal(devices, pv, (g - v).max(0.0))
        .map(|r| r.d)
        .unwrap_or_else(|_| devices.iter().map(|u| u.inverse_marginal(pv.buy)).collect())
}

/// How the net-zero threshold is filled in when expanding anchors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaZeroRule {
    /// `theta0 = theta-`.
    #[default]
    Minus,
    /// Keep the anchor's relative position between `theta-` and `theta+`.
    AnchorFraction,
}

/// Expands one anchor triple per (pricing period, supply bin), anchored at
/// the period's last interval, to every interval: inside a period `theta+`
/// grows by `v_max` per step back in time and `theta-` stays put.
/// `anchors[p][b]` is the anchor of period `p`, bin `b`.
pub fn propagate_thresholds(
    anchors: &[Vec<ThresholdTriple>],
    cal: &TariffCalendar,
    spec: &DeferrableSpec,
    g_max: f64,
    rule: ThetaZeroRule,
) -> Result<ThresholdSet> {
    let periods = cal.periods();
    if anchors.len() != periods.len() {
        return Err(Error::param(format!("need {} period anchors, got {}", periods.len(), anchors.len())));
    }
    let n_bins = anchors.first().map_or(0, Vec::len);
    if n_bins == 0 || anchors.iter().any(|a| a.len() != n_bins) {
        return Err(Error::param("every period needs the same nonzero number of bin anchors"));
    }
    for (p, row) in anchors.iter().enumerate() {
        for (b, a) in row.iter().enumerate() {
            let zero_ok = a.theta_zero.is_none_or(|z| z >= a.theta_minus && z <= a.theta_plus);
            if !(a.theta_minus <= a.theta_plus) || !zero_ok || !a.theta_minus.is_finite() || !a.theta_plus.is_finite() {
                return Err(Error::param(format!("anchor for period {}, bin {b} is not ordered: {a:?}", p + 1)));
            }
        }
    }
    let mut triples = vec![ThresholdTriple::new(0.0, None, 0.0); spec.horizon * n_bins];
    for (range, row) in periods.iter().zip(anchors) {
        let last = range.end - 1;
        for t in range.clone() {
            let cap = spec.laxity(t);
            for (b, a) in row.iter().enumerate() {
                let plus = (a.theta_plus + (last - t) as f64 * spec.v_max).clamp(0.0, cap);
                let minus = a.theta_minus.clamp(0.0, cap).min(plus);
                let zero = match (rule, a.theta_zero) {
                    (ThetaZeroRule::AnchorFraction, Some(z)) => {
                        let w = a.theta_plus - a.theta_minus;
                        let frac = if w > 0.0 { (z - a.theta_minus) / w } else { 0.0 };
                        minus + frac * (plus - minus)
                    }
                    _ => minus,
                };
                triples[t * n_bins + b] = ThresholdTriple::new(minus, Some(zero), plus);
            }
        }
    }
    ThresholdSet::new(spec.horizon, n_bins, g_max, triples)
}
