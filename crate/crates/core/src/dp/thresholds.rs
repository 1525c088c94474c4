use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::demand::DeferrableSpec;
use crate::error::{Error, Result};

/// Procrastination thresholds of one `(t, g bin)` cell. `theta_zero` is only
/// defined where the net-zero zone occurs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTriple {
    pub theta_minus: f64,
    pub theta_zero: Option<f64>,
    pub theta_plus: f64,
}

impl ThresholdTriple {
    pub fn new(theta_minus: f64, theta_zero: Option<f64>, theta_plus: f64) -> Self {
        ThresholdTriple { theta_minus, theta_zero, theta_plus }
    }

    /// Net-zero threshold, defaulting to `theta_minus` where undefined.
    pub fn zero_or_minus(&self) -> f64 {
        self.theta_zero.unwrap_or(self.theta_minus)
    }
}

/// Thresholds for every interval and supply bin. Bins are equal-width over
/// `[0, g_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub horizon: usize,
    pub n_bins: usize,
    pub g_max: f64,
    /// Indexed `t * n_bins + bin`.
    pub triples: Vec<ThresholdTriple>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingViolation {
    pub t: usize,
    pub g_bin: usize,
    pub triple: ThresholdTriple,
    pub bound: f64,
}

impl ThresholdSet {
    pub fn new(horizon: usize, n_bins: usize, g_max: f64, triples: Vec<ThresholdTriple>) -> Result<Self> {
        if n_bins == 0 || triples.len() != horizon * n_bins {
            return Err(Error::param(format!(
                "threshold set needs {} triples, got {}",
                horizon * n_bins,
                triples.len()
            )));
        }
        if !(g_max > 0.0) {
            return Err(Error::param("threshold set needs g_max > 0"));
        }
        Ok(ThresholdSet { horizon, n_bins, g_max, triples })
    }

    pub fn bin_of(&self, g: f64) -> usize {
        if !(g > 0.0) {
            return 0;
        }
        ((g / (self.g_max / self.n_bins as f64)).floor() as usize).min(self.n_bins - 1)
    }

    pub fn get(&self, t: usize, bin: usize) -> &ThresholdTriple {
        &self.triples[t * self.n_bins + bin]
    }

    /// Triple for interval `t` at supply level `g`.
    pub fn at(&self, t: usize, g: f64) -> &ThresholdTriple {
        self.get(t, self.bin_of(g))
    }

    /// Cells breaking `0 <= theta- <= theta0 <= theta+ <= (T - t) v_max`
    /// (with `t` 0-based, i.e. `T - t` intervals left including this one).
    pub fn ordering_violations(&self, spec: &DeferrableSpec, tol: f64) -> Vec<OrderingViolation> {
        let mut out = Vec::new();
        for t in 0..self.horizon {
            let bound = spec.capacity_from(t);
            for b in 0..self.n_bins {
                let tr = *self.get(t, b);
                let z = tr.zero_or_minus();
                let ok = tr.theta_minus >= -tol
                    && tr.theta_minus <= z + tol
                    && z <= tr.theta_plus + tol
                    && tr.theta_plus <= bound + tol;
                if !ok {
                    out.push(OrderingViolation { t, g_bin: b, triple: tr, bound });
                }
            }
        }
        out
    }

    /// CSV with columns `t,g_bin,theta_minus,theta_zero,theta_plus`; `t` is
    /// 1-based and an undefined `theta_zero` is an empty field.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["t", "g_bin", "theta_minus", "theta_zero", "theta_plus"])?;
        for t in 0..self.horizon {
            for b in 0..self.n_bins {
                let tr = self.get(t, b);
                w.write_record([
                    (t + 1).to_string(),
                    b.to_string(),
                    tr.theta_minus.to_string(),
                    tr.theta_zero.map(|x| x.to_string()).unwrap_or_default(),
                    tr.theta_plus.to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Reads the CSV written by [`ThresholdSet::to_csv`]; lines starting
    /// with `#` are skipped.
    pub fn from_csv<R: Read>(reader: R, g_max: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .unwrap_or("")
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::param(format!("bad threshold field `{}`", rec.get(i).unwrap_or(""))))
            };
            let t = num(0)? as usize;
            let b = num(1)? as usize;
            let zero = match rec.get(3).map(str::trim) {
                Some("") | None => None,
                Some(_) => Some(num(3)?),
            };
            rows.push((t, b, ThresholdTriple::new(num(2)?, zero, num(4)?)));
        }
        let horizon = rows.iter().map(|r| r.0).max().unwrap_or(0);
        let n_bins = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        if horizon == 0 || rows.iter().any(|r| r.0 == 0) {
            return Err(Error::param("threshold CSV must list 1-based intervals"));
        }
        let mut triples = vec![None; horizon * n_bins];
        for (t, b, tr) in rows {
            triples[(t - 1) * n_bins + b] = Some(tr);
        }
        let triples = triples
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::param("threshold CSV does not cover every (t, g_bin) pair"))?;
        ThresholdSet::new(horizon, n_bins, g_max, triples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let triples = vec![
            ThresholdTriple::new(0.0, None, 2.0),
            ThresholdTriple::new(0.5, Some(0.75), 1.0),
            ThresholdTriple::new(0.0, Some(0.0), 0.0),
            ThresholdTriple::new(0.1, None, 0.2),
        ];
        let set = ThresholdSet::new(2, 2, 3.0, triples).unwrap();
        let text = format!("# config_hash=abc seed=1\n{}", set.to_csv().unwrap());
        assert_eq!(ThresholdSet::from_csv(text.as_bytes(), 3.0).unwrap(), set);
    }

    #[test]
    fn bins_cover_the_range() {
        let set = ThresholdSet::new(1, 4, 2.0, vec![ThresholdTriple::new(0.0, None, 0.0); 4]).unwrap();
        assert_eq!(set.bin_of(0.0), 0);
        assert_eq!(set.bin_of(0.49), 0);
        assert_eq!(set.bin_of(0.5), 1);
        assert_eq!(set.bin_of(2.0), 3);
        assert_eq!(set.bin_of(5.0), 3);
    }
}
