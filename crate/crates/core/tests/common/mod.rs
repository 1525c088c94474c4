#![allow(dead_code)]

use deferral::demand::{DeferrableSpec, DeviceSet, PenaltyFunction, QuadraticUtility};
use deferral::dg::{discretize, DGModel};
use deferral::dp::Grid;
use deferral::problem::Problem;
use deferral::tariff::{PriceVector, TariffCalendar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct Instance {
    pub problem: Problem,
    pub model: DGModel,
    pub grid: Grid,
}

impl Instance {
    /// Lipschitz bound of the stage reward in the charging action.
    pub fn lipschitz(&self) -> f64 {
        let q = &self.problem.penalty;
        self.problem.tariff.max_buy() + q.c1 + 2.0 * q.c2 * self.grid.y_max()
    }
}

pub struct InstanceOptions {
    pub max_horizon: usize,
    pub max_bins: usize,
    pub max_devices: usize,
    pub flat: bool,
    pub independent_only: bool,
    /// Extend the lattice to `horizon * v_max` so every threshold is observable.
    pub full_grid: bool,
}

/// Random small instance whose lattice has at most 41 points.
pub fn random_instance(r: &mut ChaCha8Rng, opt: &InstanceOptions) -> Instance {
    let horizon = r.random_range(1..=opt.max_horizon);
    let dy = [0.1, 0.2, 0.25, 0.5][r.random_range(0..4)];
    let v_steps = r.random_range(1..=4usize);
    let v_max = dy * v_steps as f64;
    let max_steps = (horizon * v_steps).min(40);
    let y_steps = r.random_range(0..=max_steps);
    let y1 = dy * y_steps as f64;
    let spec = DeferrableSpec::new(y1, horizon, v_max).unwrap();

    let prices: Vec<PriceVector> = if opt.flat {
        let buy = r.random_range(0.15..0.6);
        let sell = buy * r.random_range(0.1..0.9);
        vec![PriceVector::new(buy, sell).unwrap(); horizon]
    } else {
        // Two or three pricing periods; every sell rate stays below every buy rate.
        let n_periods = r.random_range(1..=3usize.min(horizon));
        let mut cuts: Vec<usize> = (0..n_periods - 1).map(|_| r.random_range(1..horizon)).collect();
        cuts.sort();
        let buys: Vec<f64> = (0..n_periods).map(|_| r.random_range(0.2..0.6)).collect();
        let min_buy = buys.iter().cloned().fold(f64::INFINITY, f64::min);
        let sells: Vec<f64> = (0..n_periods).map(|_| min_buy * r.random_range(0.1..0.95)).collect();
        (0..horizon)
            .map(|t| {
                let p = cuts.iter().filter(|&&c| c <= t).count();
                PriceVector::new(buys[p], sells[p]).unwrap()
            })
            .collect()
    };
    let tariff = TariffCalendar::new(prices).unwrap();
    let c1 = tariff.max_buy() + r.random_range(0.05..0.5);
    let penalty = PenaltyFunction::new(c1, r.random_range(0.01..0.3), &tariff).unwrap();
    let k = r.random_range(0..=opt.max_devices);
    let devices = DeviceSet::new(
        (0..k)
            .map(|_| QuadraticUtility::new(r.random_range(0.3..1.2), r.random_range(0.5..2.0), r.random_range(0.3..1.5)).unwrap())
            .collect(),
    )
    .unwrap();
    let problem = Problem::new(spec, devices, penalty, tariff).unwrap();

    let g_max = r.random_range(0.5..2.5);
    let model = if opt.independent_only || r.random_bool(0.5) {
        let mean = (0..horizon).map(|_| r.random_range(-0.2..1.0) * g_max).collect();
        let std = (0..horizon).map(|_| r.random_range(0.0..0.6) * g_max).collect();
        DGModel::independent(mean, std, g_max).unwrap()
    } else {
        DGModel::ar1(r.random_range(0.0..0.5) * g_max, r.random_range(-0.5..0.9), r.random_range(0.0..0.4) * g_max, g_max).unwrap()
    };
    let n_bins = r.random_range(2..=opt.max_bins);
    let dg = discretize(&model, n_bins, horizon).unwrap();
    let y_max = opt.full_grid.then(|| (horizon * v_steps) as f64 * dy);
    let grid = Grid::new(&problem, dy, y_max, dg).unwrap();
    Instance { problem, model, grid }
}

/// Desk-scale time-of-use scenario: 16 quarter-hour intervals, a 7.2 kW
/// charger, off-peak then on-peak rates, declining solar supply.
/// Flat-rate counterpart of [`tou_scenario`] with no nondeferrable devices.
pub fn flat_scenario(n_bins: usize) -> Instance {
    let horizon = 16;
    let v_max = 7.2 * 0.25;
    let spec = DeferrableSpec::new(10.8, horizon, v_max).unwrap();
    let tariff = TariffCalendar::flat(horizon, 0.43, 0.17).unwrap();
    let penalty = PenaltyFunction::new(0.8, 0.05, &tariff).unwrap();
    let problem = Problem::new(spec, DeviceSet::new(Vec::new()).unwrap(), penalty, tariff).unwrap();
    let mean: Vec<f64> = (0..horizon).map(|t| 1.6 - 0.09 * t as f64).collect();
    let model = DGModel::independent(mean, vec![0.5; horizon], 2.0).unwrap();
    let dg = discretize(&model, n_bins, horizon).unwrap();
    let grid = Grid::new(&problem, 0.45, None, dg).unwrap();
    Instance { problem, model, grid }
}

pub fn tou_scenario(n_bins: usize, devices: usize) -> Instance {
    use deferral::tariff::TariffSegment;
    let horizon = 16;
    let v_max = 7.2 * 0.25;
    let dy = 0.45;
    let spec = DeferrableSpec::new(10.8, horizon, v_max).unwrap();
    let segs = [
        TariffSegment { start_interval: 1, buy: 0.43, sell: 0.17 },
        TariffSegment { start_interval: 9, buy: 0.57, sell: 0.17 },
    ];
    let tariff = TariffCalendar::from_segments(horizon, &segs).unwrap();
    let penalty = PenaltyFunction::new(0.8, 0.05, &tariff).unwrap();
    let devs = (0..devices).map(|_| QuadraticUtility::new(0.9, 1.0, 1.0).unwrap()).collect();
    let problem = Problem::new(spec, DeviceSet::new(devs).unwrap(), penalty, tariff).unwrap();
    let mean: Vec<f64> = (0..horizon).map(|t| 1.6 - 0.09 * t as f64).collect();
    let std = vec![0.5; horizon];
    let model = DGModel::independent(mean, std, 2.0).unwrap();
    let dg = discretize(&model, n_bins, horizon).unwrap();
    let grid = Grid::new(&problem, dy, None, dg).unwrap();
    Instance { problem, model, grid }
}

/// Instance from explicit parts; `penalty` is `(c1, c2)`.
pub fn instance(
    spec: DeferrableSpec,
    tariff: TariffCalendar,
    penalty: (f64, f64),
    devices: Vec<QuadraticUtility>,
    model: DGModel,
    n_bins: usize,
    dy: f64,
) -> Instance {
    let penalty = PenaltyFunction::new(penalty.0, penalty.1, &tariff).unwrap();
    let problem = Problem::new(spec, DeviceSet::new(devices).unwrap(), penalty, tariff).unwrap();
    let dg = discretize(&model, n_bins, problem.horizon()).unwrap();
    let grid = Grid::new(&problem, dy, None, dg).unwrap();
    Instance { problem, model, grid }
}
