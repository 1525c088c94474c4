use serde::{Deserialize, Serialize};

use super::{CensoredGaussian, DGModel};
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 32;

/// Finite-state approximation of a supply model for the DP solver.
///
/// `transitions[t][i][j]` is the probability of moving from bin `i` at
/// interval `t` to bin `j` at interval `t + 1`, so there are `horizon - 1`
/// matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DGDiscretization {
    pub bin_centers: Vec<f64>,
    pub width: f64,
    pub g_max: f64,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub initial_dist: Vec<f64>,
}

impl DGDiscretization {
    pub fn n_bins(&self) -> usize {
        self.bin_centers.len()
    }

    pub fn horizon(&self) -> usize {
        self.transitions.len() + 1
    }

    pub fn bin_of(&self, g: f64) -> usize {
        let n = self.bin_centers.len();
        if !(g > 0.0) {
            return 0;
        }
        ((g / self.width).floor() as usize).min(n - 1)
    }

    /// Transition row out of `bin` at interval `t`.
    pub fn row(&self, t: usize, bin: usize) -> &[f64] {
        &self.transitions[t][bin]
    }
}

/// Probability mass of the censored law on each of `n` equal bins. The
/// atoms at 0 and `g_max` land in the first and last bins.
fn bin_masses(law: &CensoredGaussian, n: usize, width: f64) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let mut prev = 0.0;
    for (j, slot) in out.iter_mut().enumerate() {
        let upper = if j + 1 == n { 1.0 } else { law.cdf((j + 1) as f64 * width) };
        *slot = (upper - prev).max(0.0);
        prev = upper.max(prev);
    }
    normalize(&mut out);
    out
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    } else {
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
    }
}

pub fn discretize(model: &DGModel, n_bins: usize, horizon: usize) -> Result<DGDiscretization> {
    if n_bins < 2 {
        return Err(Error::InvalidGrid(format!("need at least 2 DG bins, got {n_bins}")));
    }
    if horizon == 0 {
        return Err(Error::InvalidGrid("horizon must be positive".into()));
    }
    model.validate()?;
    model.check_horizon(horizon)?;
    let g_max = model.g_max();
    let width = g_max / n_bins as f64;
    let bin_centers: Vec<f64> = (0..n_bins).map(|i| (i as f64 + 0.5) * width).collect();

    let (initial_dist, transitions) = match model {
        DGModel::Empirical { traces, .. } => empirical_counts(traces, n_bins, width, horizon),
        _ => {
            let initial = bin_masses(&model.initial_law().expect("parametric"), n_bins, width);
            let transitions = (0..horizon - 1)
                .map(|t| {
                    bin_centers
                        .iter()
                        .map(|&g| bin_masses(&model.conditional_law(t, g).expect("parametric"), n_bins, width))
                        .collect()
                })
                .collect();
            (initial, transitions)
        }
    };
    Ok(DGDiscretization { bin_centers, width, g_max, transitions, initial_dist })
}

/// Empirical transition frequencies. Source bins that never occur at a
/// stage borrow the stage's marginal destination law.
fn empirical_counts(traces: &[Vec<f64>], n: usize, width: f64, horizon: usize) -> (Vec<f64>, Vec<Vec<Vec<f64>>>) {
    let bin = |g: f64| if g > 0.0 { ((g / width).floor() as usize).min(n - 1) } else { 0 };
    let mut initial = vec![0.0; n];
    for tr in traces {
        initial[bin(tr[0])] += 1.0;
    }
    normalize(&mut initial);
    let transitions = (0..horizon - 1)
        .map(|t| {
            let mut counts = vec![vec![0.0; n]; n];
            let mut marginal = vec![0.0; n];
            for tr in traces {
                let (i, j) = (bin(tr[t]), bin(tr[t + 1]));
                counts[i][j] += 1.0;
                marginal[j] += 1.0;
            }
            normalize(&mut marginal);
            for row in counts.iter_mut() {
                if row.iter().sum::<f64>() > 0.0 {
                    normalize(row);
                } else {
                    row.clone_from(&marginal);
                }
            }
            counts
        })
        .collect();
    (initial, transitions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dg::episode_rng;
    use rand::{Rng, SeedableRng};

    fn assert_stochastic(d: &DGDiscretization) {
        for m in &d.transitions {
            for row in m {
                assert!(row.iter().all(|&p| p >= 0.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        assert!((d.initial_dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(d.bin_centers.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn independent_rows_are_identical() {
        let m = DGModel::independent(vec![0.4, 0.9, 1.3], vec![0.3, 0.5, 0.2], 2.0).unwrap();
        let d = discretize(&m, 16, 6).unwrap();
        assert_stochastic(&d);
        for mat in &d.transitions {
            for row in mat {
                assert_eq!(row, &mat[0]);
            }
        }
    }

    #[test]
    fn zero_noise_ar1_is_a_unit_mass() {
        let m = DGModel::ar1(0.2, 0.5, 0.0, 2.0).unwrap();
        let d = discretize(&m, 10, 3).unwrap();
        for (i, row) in d.transitions[0].iter().enumerate() {
            let target = d.bin_of(0.2 + 0.5 * d.bin_centers[i]);
            assert_eq!(row[target], 1.0);
        }
    }

    #[test]
    fn random_models_give_stochastic_rows() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let g_max = rng.random_range(0.5..5.0);
            let m = if rng.random_bool(0.5) {
                DGModel::ar1(
                    rng.random_range(-1.0..2.0),
                    rng.random_range(-0.95..0.95),
                    rng.random_range(0.0..1.5),
                    g_max,
                )
                .unwrap()
            } else {
                let len = rng.random_range(1..5);
                let mean = (0..len).map(|_| rng.random_range(-1.0..6.0)).collect();
                let std = (0..len).map(|_| rng.random_range(0.0..2.0)).collect();
                DGModel::independent(mean, std, g_max).unwrap()
            };
            let d = discretize(&m, rng.random_range(2..40), 4).unwrap();
            assert_stochastic(&d);
        }
    }

    #[test]
    fn sampled_pairs_match_transition_rows() {
        let m = DGModel::ar1(0.3, 0.6, 0.25, 1.5).unwrap();
        let d = discretize(&m, 12, 2).unwrap();
        let mut rng = episode_rng(23, 0);
        let n_pairs = 100_000;
        let mut counts = vec![vec![0.0; 12]; 12];
        for _ in 0..n_pairs {
            let i = rng.random_range(0..12);
            // Source sampled at the bin center, as the discretization assumes.
            let g1 = m.sample_next(d.bin_centers[i], 0, &mut rng);
            counts[i][d.bin_of(g1)] += 1.0;
        }
        for (i, row) in counts.iter().enumerate() {
            let total: f64 = row.iter().sum();
            let tv: f64 = row.iter().zip(&d.transitions[0][i]).map(|(c, p)| (c / total - p).abs()).sum::<f64>() / 2.0;
            assert!(tv <= 0.05, "bin {i}: tv {tv}");
        }
    }

    #[test]
    fn empirical_counts_are_stochastic() {
        let traces = vec![vec![0.0, 0.5, 1.0], vec![0.2, 0.9, 0.1]];
        let m = DGModel::empirical(traces, 1.0).unwrap();
        let d = discretize(&m, 4, 3).unwrap();
        assert_stochastic(&d);
        assert!(discretize(&m, 4, 4).is_err());
        assert!(discretize(&m, 1, 3).is_err());
    }
}
