//! One-stage optimization against a continuation value on the demand lattice.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::demand::{aggregate_demand, total_capacity, total_utility, water_fill_total, QuadraticUtility, Utility, Zone};
use crate::tariff::PriceVector;

static CLAMP_WARNINGS: AtomicU64 = AtomicU64::new(0);

/// Number of continuation lookups so far whose demand fell off the lattice
/// range and was clamped.
pub fn clamp_warnings() -> u64 {
    CLAMP_WARNINGS.load(Ordering::Relaxed)
}

/// Linear interpolation of a lattice function `w` with spacing `dy`.
pub fn interpolate(w: &[f64], dy: f64, u: f64) -> f64 {
    let top = (w.len() - 1) as f64 * dy;
    let tol = 1e-9 * dy.max(1.0);
    if u < -tol || u > top + tol || u.is_nan() {
        CLAMP_WARNINGS.fetch_add(1, Ordering::Relaxed);
    }
    if w.len() == 1 {
        return w[0];
    }
    let x = (u.clamp(0.0, top) / dy).max(0.0);
    let k = (x.floor() as usize).min(w.len() - 2);
    let frac = x - k as f64;
    if frac <= 0.0 {
        w[k]
    } else {
        w[k] + frac * (w[k + 1] - w[k])
    }
}

fn price_eps(p: f64) -> f64 {
    1e-9 * (1.0 + p.abs())
}

/// Outcome of a stage decision at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct StageDecision {
    pub v: f64,
    pub d: Vec<f64>,
    pub zone: Zone,
    /// Marginal value of supply at the decision.
    pub nu: f64,
    /// Stage surplus `U(d) - payment(z)`.
    pub reward: f64,
    /// Reward plus continuation.
    pub value: f64,
}

impl StageDecision {
    pub fn net(&self, g: f64) -> f64 {
        self.v + self.d.iter().sum::<f64>() - g
    }
}

/// Stage data shared by every state of one `(t, g bin)` cell: prices,
/// devices, the continuation `w` on the lattice and the thresholds it implies.
#[derive(Debug, Clone)]
pub struct StagePlan<'a> {
    pub pv: PriceVector,
    pub devices: &'a [QuadraticUtility],
    pub v_max: f64,
    pub dy: f64,
    /// Largest admissible threshold at this stage.
    pub cap: f64,
    pub w: &'a [f64],
    pub slopes: Vec<f64>,
    pub theta_minus: f64,
    pub theta_plus: f64,
    d_plus: Vec<f64>,
    d_minus: Vec<f64>,
    sum_plus: f64,
    sum_minus: f64,
    capacity: f64,
}

impl<'a> StagePlan<'a> {
    pub fn new(pv: PriceVector, devices: &'a [QuadraticUtility], v_max: f64, dy: f64, cap: f64, w: &'a [f64]) -> Self {
        let slopes: Vec<f64> = w.windows(2).map(|p| (p[1] - p[0]) / dy).collect();
        let d_plus: Vec<f64> = devices.iter().map(|u| u.inverse_marginal(pv.buy)).collect();
        let d_minus: Vec<f64> = devices.iter().map(|u| u.inverse_marginal(pv.sell)).collect();
        let mut plan = StagePlan {
            pv,
            devices,
            v_max,
            dy,
            cap,
            w,
            slopes,
            theta_minus: 0.0,
            theta_plus: 0.0,
            sum_plus: d_plus.iter().sum(),
            sum_minus: d_minus.iter().sum(),
            d_plus,
            d_minus,
            capacity: total_capacity(devices),
        };
        // Buying stops where the continuation slope gets steeper than the buy
        // rate; a flat tie keeps the larger threshold (delay purchases).
        plan.theta_plus = plan.crossing(|s| s < -pv.buy - price_eps(pv.buy));
        // Exporting starts where the slope is no steeper than the sell rate;
        // a tie keeps the smaller threshold (charge from own supply). With no
        // crossing on the lattice every state charges, so the lattice top is
        // as good as any larger value.
        let top = plan.slopes.len() as f64 * dy;
        plan.theta_minus = plan
            .slopes
            .iter()
            .position(|&s| s <= -pv.sell + price_eps(pv.sell))
            .map_or(top, |k| k as f64 * dy)
            .clamp(0.0, cap)
            .min(plan.theta_plus);
        plan
    }

    fn crossing(&self, hit: impl Fn(f64) -> bool) -> f64 {
        self.slopes
            .iter()
            .position(|&s| hit(s))
            .map_or(self.cap, |k| k as f64 * self.dy)
            .clamp(0.0, self.cap)
    }

    /// Threshold implied by a shadow price `nu` of supply.
    pub fn threshold_at_price(&self, nu: f64) -> f64 {
        self.crossing(|s| s <= -nu + price_eps(nu))
    }

    pub fn w_at(&self, u: f64) -> f64 {
        interpolate(self.w, self.dy, u)
    }

    pub fn v_plus(&self, y: f64) -> f64 {
        (y - self.theta_plus).max(0.0).min(self.v_max.min(y))
    }

    pub fn v_minus(&self, y: f64) -> f64 {
        (y - self.theta_minus).max(0.0).min(self.v_max.min(y))
    }

    pub fn delta_plus(&self, y: f64) -> f64 {
        self.v_plus(y) + self.sum_plus
    }

    pub fn delta_minus(&self, y: f64) -> f64 {
        self.v_minus(y) + self.sum_minus
    }

    fn boundary(&self, y: f64, g: f64, zone: Zone) -> StageDecision {
        let (v, d) = match zone {
            Zone::Consumer => (self.v_plus(y), self.d_plus.clone()),
            _ => (self.v_minus(y), self.d_minus.clone()),
        };
        let z = v + d.iter().sum::<f64>() - g;
        let reward = total_utility(self.devices, &d) - self.pv.payment(z);
        let nu = if zone == Zone::Consumer { self.pv.buy } else { self.pv.sell };
        StageDecision { v, d, zone, nu, reward, value: reward + self.w_at(y - v) }
    }

    /// Feasible deferrable range when the household consumes exactly `g`.
    pub fn net_zero_range(&self, y: f64, g: f64) -> Option<(f64, f64)> {
        let lo = (g - self.capacity).max(0.0);
        let hi = self.v_max.min(y).min(g);
        (lo <= hi + 1e-12).then(|| (lo, hi.max(lo)))
    }

    /// Nondeferrable allocation of `s` kWh and its utility.
    fn allocate(&self, s: f64) -> (Vec<f64>, f64, f64) {
        if self.devices.is_empty() {
            return (Vec::new(), 0.0, f64::NAN);
        }
        let s = s.clamp(0.0, self.capacity);
        let (d, level) = water_fill_total(self.devices, s).expect("total within capacity");
        let u = total_utility(self.devices, &d);
        (d, u, level)
    }

    /// Best net-zero action: the household consumes exactly `g`.
    pub fn net_zero(&self, y: f64, g: f64) -> Option<StageDecision> {
        let (lo, hi) = self.net_zero_range(y, g)?;
        let mut cands = vec![lo, hi];
        let inside = |v: f64| v > lo && v < hi;
        for k in 0..self.w.len() {
            let v = y - k as f64 * self.dy;
            if inside(v) {
                cands.push(v);
            }
        }
        if !self.devices.is_empty() {
            for (k, &s) in self.slopes.iter().enumerate() {
                let v = g - aggregate_demand(self.devices, -s);
                let u = y - v;
                if inside(v) && u >= k as f64 * self.dy && u <= (k + 1) as f64 * self.dy {
                    cands.push(v);
                }
            }
        }
        cands.sort_by(f64::total_cmp);
        cands.dedup();

        let mut best: Option<(f64, f64)> = None;
        for &v in &cands {
            let f = self.allocate(g - v).1 + self.w_at(y - v);
            match best {
                Some((_, bf)) if f <= bf + 1e-12 * (1.0 + bf.abs()) => {}
                _ => best = Some((v, f)),
            }
        }
        let (v, value) = best?;
        let (d, utility, level) = self.allocate(g - v);
        let nu = if self.devices.is_empty() { self.continuation_price(y - v) } else { level };
        Some(StageDecision {
            v,
            d,
            zone: Zone::NetZero,
            nu: nu.clamp(self.pv.sell, self.pv.buy),
            reward: utility,
            value,
        })
    }

    /// Midpoint of the one-sided continuation slopes at `u`, as a price.
    fn continuation_price(&self, u: f64) -> f64 {
        if self.slopes.is_empty() {
            return self.pv.buy;
        }
        let x = (u / self.dy).max(0.0);
        let k = x.round();
        let n = self.slopes.len();
        let (left, right) = if (x - k).abs() <= 1e-9 {
            let k = k as usize;
            let r = self.slopes[k.min(n - 1)];
            let l = if k == 0 { r } else { self.slopes[(k - 1).min(n - 1)] };
            (l, r)
        } else {
            let s = self.slopes[(x.floor() as usize).min(n - 1)];
            (s, s)
        };
        -(left + right) / 2.0
    }

    /// Exact stage optimum for a piecewise-linear concave continuation.
    pub fn optimize(&self, y: f64, g: f64) -> StageDecision {
        if g < self.delta_plus(y) {
            return self.boundary(y, g, Zone::Consumer);
        }
        if g > self.delta_minus(y) {
            return self.boundary(y, g, Zone::Producer);
        }
        match self.net_zero(y, g) {
            Some(nz) => nz,
            None => {
                let a = self.boundary(y, g, Zone::Consumer);
                let b = self.boundary(y, g, Zone::Producer);
                if b.value > a.value { b } else { a }
            }
        }
    }

    /// Exhaustive search over lattice charging and an `nd`-point grid per device.
    pub fn enumerate(&self, y: f64, g: f64, nd: usize) -> StageDecision {
        let k_max = ((self.v_max.min(y) / self.dy) + 1e-9).floor() as usize;
        let snap = |v: f64| {
            if (v - self.v_max).abs() <= 1e-9 * self.dy {
                self.v_max
            } else if (v - y).abs() <= 1e-9 * self.dy {
                y
            } else {
                v
            }
        };
        let d_axes: Vec<Vec<f64>> = self
            .devices
            .iter()
            .map(|u| (0..nd).map(|j| u.d_max * j as f64 / (nd - 1).max(1) as f64).collect())
            .collect();
        let combos: usize = d_axes.iter().map(|a| a.len()).product();

        let mut best: Option<(StageDecision, f64)> = None;
        let mut d = vec![0.0; self.devices.len()];
        for kv in 0..=k_max {
            let v = snap(kv as f64 * self.dy).min(self.v_max.min(y));
            let cont = self.w_at(y - v);
            for c in 0..combos {
                let mut rest = c;
                for (i, axis) in d_axes.iter().enumerate() {
                    d[i] = axis[rest % axis.len()];
                    rest /= axis.len();
                }
                let z = v + d.iter().sum::<f64>() - g;
                let reward = total_utility(self.devices, &d) - self.pv.payment(z);
                let value = reward + cont;
                let better = match &best {
                    None => true,
                    Some((b, bz)) => {
                        let tol = 1e-9 * (1.0 + b.value.abs());
                        if value > b.value + tol {
                            true
                        } else if value >= b.value - tol {
                            (z.abs(), v) < (bz.abs(), b.v)
                        } else {
                            false
                        }
                    }
                };
                if better {
                    let zone = if z > 1e-9 {
                        Zone::Consumer
                    } else if z < -1e-9 {
                        Zone::Producer
                    } else {
                        Zone::NetZero
                    };
                    let nu = match zone {
                        Zone::Consumer => self.pv.buy,
                        Zone::Producer => self.pv.sell,
                        Zone::NetZero => 0.5 * (self.pv.buy + self.pv.sell),
                    };
                    best = Some((StageDecision { v, d: d.clone(), zone, nu, reward, value }, z));
                }
            }
        }
        best.expect("at least one action").0
    }
}
