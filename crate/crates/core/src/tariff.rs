//! Net-energy-metering tariffs.
//!
//! A tariff assigns every interval a buy (import) rate and a sell (export)
//! rate. Payment is piecewise linear in net consumption, and the calendar as a
//! whole must not admit risk-free arbitrage: every buy rate is at least every
//! sell rate.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Import and export rates for one interval, in $/kWh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceVector {
    pub buy: f64,
    pub sell: f64,
}

impl PriceVector {
    pub fn new(buy: f64, sell: f64) -> Result<Self> {
        let pv = PriceVector { buy, sell };
        if !pv.is_valid() {
            return Err(Error::param(format!(
                "price vector requires buy >= sell >= 0, got buy={buy}, sell={sell}"
            )));
        }
        Ok(pv)
    }

    pub fn is_valid(&self) -> bool {
        self.buy.is_finite() && self.sell.is_finite() && self.buy >= self.sell && self.sell >= 0.0
    }

    /// Halfway between the two rates; the price the net-zero threshold refers to.
    pub fn mid(&self) -> f64 {
        0.5 * (self.buy + self.sell)
    }

    /// Payment for net consumption `z` kWh. Negative means the household is paid.
    ///
    /// `z == 0` takes the buy branch; both branches are zero there.
    pub fn payment(&self, z: f64) -> f64 {
        if z >= 0.0 {
            self.buy * z
        } else {
            self.sell * z
        }
    }
}

/// Free-function form of [`PriceVector::payment`].
pub fn payment(pv: &PriceVector, z: f64) -> f64 {
    pv.payment(z)
}

/// One problem with a tariff calendar.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    NonFinite { interval: usize },
    NegativeSell { interval: usize, sell: f64 },
    BuyBelowSell { interval: usize, buy: f64, sell: f64 },
    /// `sell` at `interval` exceeds the smallest buy rate of the calendar.
    Arbitrage { interval: usize, sell: f64, min_buy: f64 },
    PeriodIdLength { expected: usize, found: usize },
    /// Consecutive intervals share a period id but not a price.
    PeriodIdMismatch { interval: usize },
    /// A period id reappears after a different period started.
    PeriodIdNotContiguous { interval: usize, id: usize },
    Empty,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite { interval } => write!(f, "interval {interval}: non-finite rate"),
            Violation::NegativeSell { interval, sell } => {
                write!(f, "interval {interval}: negative sell rate {sell}")
            }
            Violation::BuyBelowSell { interval, buy, sell } => {
                write!(f, "interval {interval}: buy {buy} < sell {sell}")
            }
            Violation::Arbitrage { interval, sell, min_buy } => write!(
                f,
                "interval {interval}: sell {sell} exceeds minimum buy rate {min_buy}"
            ),
            Violation::PeriodIdLength { expected, found } => {
                write!(f, "period ids: expected {expected} entries, found {found}")
            }
            Violation::PeriodIdMismatch { interval } => write!(
                f,
                "interval {interval}: shares a period id with the previous interval but has different prices"
            ),
            Violation::PeriodIdNotContiguous { interval, id } => {
                write!(f, "interval {interval}: period id {id} is not contiguous")
            }
            Violation::Empty => write!(f, "calendar has no intervals"),
        }
    }
}

/// Outcome of [`validate_calendar`]. Intervals are reported 1-based.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn accepted(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Checks both no-arbitrage clauses, plus period-id consistency when ids are given.
pub fn validate_calendar(prices: &[PriceVector], period_ids: Option<&[usize]>) -> ValidationReport {
    let mut violations = Vec::new();
    if prices.is_empty() {
        violations.push(Violation::Empty);
        return ValidationReport { violations };
    }

    let mut finite = true;
    for (i, pv) in prices.iter().enumerate() {
        let interval = i + 1;
        if !pv.buy.is_finite() || !pv.sell.is_finite() {
            violations.push(Violation::NonFinite { interval });
            finite = false;
            continue;
        }
        if pv.sell < 0.0 {
            violations.push(Violation::NegativeSell { interval, sell: pv.sell });
        }
        if pv.buy < pv.sell {
            violations.push(Violation::BuyBelowSell { interval, buy: pv.buy, sell: pv.sell });
        }
    }

    if finite {
        let min_buy = prices.iter().map(|p| p.buy).fold(f64::INFINITY, f64::min);
        for (i, pv) in prices.iter().enumerate() {
            // An interval whose own buy is below its sell is already reported.
            if pv.sell > min_buy && pv.buy >= pv.sell {
                violations.push(Violation::Arbitrage { interval: i + 1, sell: pv.sell, min_buy });
            }
        }
    }

    if let Some(ids) = period_ids {
        if ids.len() != prices.len() {
            violations.push(Violation::PeriodIdLength { expected: prices.len(), found: ids.len() });
        } else {
            let mut closed = std::collections::BTreeSet::new();
            for i in 1..ids.len() {
                if ids[i] == ids[i - 1] {
                    if prices[i] != prices[i - 1] {
                        violations.push(Violation::PeriodIdMismatch { interval: i + 1 });
                    }
                } else {
                    closed.insert(ids[i - 1]);
                    if closed.contains(&ids[i]) {
                        violations.push(Violation::PeriodIdNotContiguous { interval: i + 1, id: ids[i] });
                    }
                }
            }
        }
    }

    ValidationReport { violations }
}

/// Period ids from maximal runs of identical price vectors.
pub fn derive_period_ids(prices: &[PriceVector]) -> Vec<usize> {
    let mut ids = Vec::with_capacity(prices.len());
    let mut id = 0;
    for (i, pv) in prices.iter().enumerate() {
        if i > 0 && *pv != prices[i - 1] {
            id += 1;
        }
        ids.push(id);
    }
    ids
}

/// A tariff segment as written in run configs: the rates apply from
/// `start_interval` (1-based) until the next segment starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TariffSegment {
    pub start_interval: usize,
    pub buy: f64,
    pub sell: f64,
}

/// Validated per-interval price calendar.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TariffCalendar {
    prices: Vec<PriceVector>,
    period_ids: Vec<usize>,
}

impl TariffCalendar {
    pub fn new(prices: Vec<PriceVector>) -> Result<Self> {
        let ids = derive_period_ids(&prices);
        Self::with_period_ids(prices, ids)
    }

    pub fn with_period_ids(prices: Vec<PriceVector>, period_ids: Vec<usize>) -> Result<Self> {
        let report = validate_calendar(&prices, Some(&period_ids));
        if !report.accepted() {
            return Err(Error::Tariff(report));
        }
        Ok(TariffCalendar { prices, period_ids })
    }

    pub fn flat(horizon: usize, buy: f64, sell: f64) -> Result<Self> {
        Self::new(vec![PriceVector { buy, sell }; horizon])
    }

    /// Expands config segments over `horizon` intervals.
    pub fn from_segments(horizon: usize, segments: &[TariffSegment]) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::param("tariff needs at least one segment"));
        }
        let mut sorted = segments.to_vec();
        sorted.sort_by_key(|s| s.start_interval);
        if sorted[0].start_interval != 1 {
            return Err(Error::param("first tariff segment must start at interval 1"));
        }
        for w in sorted.windows(2) {
            if w[0].start_interval == w[1].start_interval {
                return Err(Error::param(format!(
                    "two tariff segments start at interval {}",
                    w[0].start_interval
                )));
            }
        }
        let mut prices = Vec::with_capacity(horizon);
        let mut seg = 0;
        for t in 1..=horizon {
            while seg + 1 < sorted.len() && sorted[seg + 1].start_interval <= t {
                seg += 1;
            }
            prices.push(PriceVector { buy: sorted[seg].buy, sell: sorted[seg].sell });
        }
        Self::new(prices)
    }

    pub fn horizon(&self) -> usize {
        self.prices.len()
    }

    /// Price at 0-based interval `t`.
    pub fn at(&self, t: usize) -> &PriceVector {
        &self.prices[t]
    }

    pub fn prices(&self) -> &[PriceVector] {
        &self.prices
    }

    pub fn period_ids(&self) -> &[usize] {
        &self.period_ids
    }

    pub fn max_buy(&self) -> f64 {
        self.prices.iter().map(|p| p.buy).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_buy(&self) -> f64 {
        self.prices.iter().map(|p| p.buy).fold(f64::INFINITY, f64::min)
    }

    pub fn is_flat(&self) -> bool {
        self.prices.windows(2).all(|w| w[0] == w[1])
    }

    /// On-peak means the buy rate is above the cheapest buy rate of the calendar.
    pub fn is_on_peak(&self, t: usize) -> bool {
        self.prices[t].buy > self.min_buy()
    }

    /// Contiguous pricing periods as 0-based half-open interval ranges, in time order.
    pub fn periods(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for t in 1..=self.period_ids.len() {
            if t == self.period_ids.len() || self.period_ids[t] != self.period_ids[start] {
                out.push(start..t);
                start = t;
            }
        }
        out
    }
}
