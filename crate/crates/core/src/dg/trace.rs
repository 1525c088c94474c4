use std::io::Read;
use std::path::Path;

use chrono::DateTime;
use serde::Serialize;

use crate::error::{Error, Result};

/// A validated supply trace with evenly spaced timestamps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
    pub spacing_secs: i64,
}

impl Trace {
    /// Number of intervals per day, when the spacing divides a day.
    pub fn intervals_per_day(&self) -> Option<usize> {
        (self.spacing_secs > 0 && 86_400 % self.spacing_secs == 0).then(|| (86_400 / self.spacing_secs) as usize)
    }

    /// Splits the trace into whole days of `period` readings.
    pub fn days(&self, period: usize) -> Vec<Vec<f64>> {
        self.values.chunks_exact(period).map(|c| c.to_vec()).collect()
    }
}

fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(n) = s.parse::<i64>() {
        return Some(n);
    }
    DateTime::parse_from_rfc3339(s).ok().map(|d| d.timestamp())
}

/// Reads a `timestamp,dg_kwh` CSV. Timestamps are epoch seconds or RFC 3339.
pub fn read_trace<R: Read>(reader: R) -> Result<Trace> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "dg_kwh" {
        return Err(Error::InvalidTrace(format!("expected header `timestamp,dg_kwh`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let ts = parse_timestamp(&rec[0]).ok_or_else(|| Error::InvalidTrace(format!("line {row}: bad timestamp `{}`", &rec[0])))?;
        let v: f64 = rec[1].trim().parse().map_err(|_| Error::InvalidTrace(format!("line {row}: bad reading `{}`", &rec[1])))?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidTrace(format!("line {row}: reading {v} must be finite and nonnegative")));
        }
        timestamps.push(ts);
        values.push(v);
    }
    if timestamps.len() < 2 {
        return Err(Error::InvalidTrace("trace needs at least two rows".into()));
    }
    let spacing = timestamps[1] - timestamps[0];
    if spacing <= 0 {
        return Err(Error::InvalidTrace("timestamps must increase".into()));
    }
    if let Some(k) = timestamps.windows(2).position(|w| w[1] - w[0] != spacing) {
        let w = &timestamps[k..k + 2];
        let msg = if w[1] <= w[0] { "timestamps must increase" } else { "interval spacing is not constant" };
        return Err(Error::InvalidTrace(format!("line {}: {msg}", k + 3)));
    }
    Ok(Trace { timestamps, values, spacing_secs: spacing })
}

pub fn read_trace_csv(path: &Path) -> Result<Trace> {
    read_trace(std::fs::File::open(path)?)
}
