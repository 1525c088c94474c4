use serde::Serialize;

use super::solve::Solution;
use crate::error::{Error, Result};

/// Grid metadata written alongside the CSV matrices.
#[derive(Debug, Clone, Serialize)]
pub struct TableHeader {
    pub mode: &'static str,
    pub horizon: usize,
    pub dy: f64,
    pub y_points: Vec<f64>,
    pub bin_centers: Vec<f64>,
    pub g_max: f64,
    pub devices: usize,
}

pub fn table_header(sol: &Solution) -> TableHeader {
    TableHeader {
        mode: sol.mode.as_str(),
        horizon: sol.grid.horizon,
        dy: sol.grid.dy,
        y_points: sol.grid.y_points.clone(),
        bin_centers: sol.grid.dg.bin_centers.clone(),
        g_max: sol.grid.dg.g_max,
        devices: sol.policy.k,
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Values as `t,g_bin,y,value`, `t` 1-based with `horizon + 1` the terminal layer.
pub fn values_csv(sol: &Solution) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "g_bin", "y", "value"])?;
    let v = &sol.values;
    for t in 0..v.layers {
        for ig in 0..v.ng {
            for (iy, y) in sol.grid.y_points.iter().enumerate() {
                w.write_record([(t + 1).to_string(), ig.to_string(), y.to_string(), v.get(t, iy, ig).to_string()])?;
            }
        }
    }
    finish(w)
}

/// Actions as `t,g_bin,y,v,d1..dK,zone`.
pub fn policy_csv(sol: &Solution) -> Result<String> {
    let p = &sol.policy;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head: Vec<String> = ["t", "g_bin", "y", "v"].iter().map(|s| s.to_string()).collect();
    head.extend((1..=p.k).map(|i| format!("d{i}")));
    head.push("zone".into());
    w.write_record(&head)?;
    for t in 0..p.horizon {
        for ig in 0..p.ng {
            for (iy, y) in sol.grid.y_points.iter().enumerate() {
                let mut rec = vec![(t + 1).to_string(), ig.to_string(), y.to_string(), p.v_at(t, iy, ig).to_string()];
                rec.extend(p.d_at(t, iy, ig).iter().map(|d| d.to_string()));
                rec.push(p.zone_at(t, iy, ig).as_str().to_string());
                w.write_record(&rec)?;
            }
        }
    }
    finish(w)
}
