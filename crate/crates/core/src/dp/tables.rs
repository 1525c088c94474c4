use serde::{Deserialize, Serialize};

use crate::demand::Zone;

/// Values over `(t, g bin, y index)`. Layout is g-major within a stage so a
/// fixed-`(t, g)` slice over the demand lattice is contiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub layers: usize,
    pub ny: usize,
    pub ng: usize,
    pub values: Vec<f64>,
}

impl ValueTable {
    pub fn zeros(layers: usize, ny: usize, ng: usize) -> Self {
        ValueTable { layers, ny, ng, values: vec![0.0; layers * ny * ng] }
    }

    fn offset(&self, t: usize, ig: usize) -> usize {
        (t * self.ng + ig) * self.ny
    }

    pub fn get(&self, t: usize, iy: usize, ig: usize) -> f64 {
        self.values[self.offset(t, ig) + iy]
    }

    pub fn slice(&self, t: usize, ig: usize) -> &[f64] {
        let o = self.offset(t, ig);
        &self.values[o..o + self.ny]
    }

    pub fn slice_mut(&mut self, t: usize, ig: usize) -> &mut [f64] {
        let o = self.offset(t, ig);
        &mut self.values[o..o + self.ny]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Stored actions over `(t, g bin, y index)`, same layout as [`ValueTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub horizon: usize,
    pub ny: usize,
    pub ng: usize,
    /// Number of nondeferrable devices per action.
    pub k: usize,
    pub v: Vec<f64>,
    pub d: Vec<f64>,
    pub zone: Vec<Zone>,
}

impl PolicyTable {
    pub fn new(horizon: usize, ny: usize, ng: usize, k: usize) -> Self {
        let n = horizon * ny * ng;
        PolicyTable { horizon, ny, ng, k, v: vec![0.0; n], d: vec![0.0; n * k], zone: vec![Zone::NetZero; n] }
    }

    pub fn index(&self, t: usize, iy: usize, ig: usize) -> usize {
        (t * self.ng + ig) * self.ny + iy
    }

    pub fn v_at(&self, t: usize, iy: usize, ig: usize) -> f64 {
        self.v[self.index(t, iy, ig)]
    }

    pub fn d_at(&self, t: usize, iy: usize, ig: usize) -> &[f64] {
        let i = self.index(t, iy, ig) * self.k;
        &self.d[i..i + self.k]
    }

    pub fn zone_at(&self, t: usize, iy: usize, ig: usize) -> Zone {
        self.zone[self.index(t, iy, ig)]
    }
}
