mod common;

use common::*;
use deferral::demand::{nondeferrable_optimal, total_utility, DeferrableSpec, QuadraticUtility};
use deferral::dg::{DGDiscretization, DGModel};
use deferral::dp::*;
use deferral::tariff::TariffCalendar;

fn flat_k0(y1: f64, horizon: usize, v_max: f64, dy: f64, model: DGModel, bins: usize) -> Instance {
    let spec = DeferrableSpec::new(y1, horizon, v_max).unwrap();
    let tariff = TariffCalendar::flat(horizon, 0.4, 0.1).unwrap();
    instance(spec, tariff, (0.6, 0.1), Vec::new(), model, bins, dy)
}

#[test]
fn two_bin_continuation_by_hand() {
    let inst = flat_k0(1.0, 2, 0.5, 0.5, DGModel::deterministic(vec![0.5, 0.5], 1.0).unwrap(), 2);
    let dg = DGDiscretization {
        bin_centers: vec![0.25, 0.75],
        width: 0.5,
        g_max: 1.0,
        transitions: vec![vec![vec![0.25, 0.75], vec![0.25, 0.75]]],
        initial_dist: vec![0.5, 0.5],
    };
    let grid = Grid::new(&inst.problem, 0.5, None, dg).unwrap();
    let mut values = ValueTable::zeros(3, grid.ny(), grid.ng());
    values.slice_mut(1, 0).fill(-1.0);
    values.slice_mut(1, 1).fill(-3.0);
    for y in [0.0, 0.5, 0.75] {
        assert!((expected_continuation(&values, &grid, 0, y, 0) + 2.5).abs() < 1e-12);
    }
}

#[test]
fn last_stage_continuation_is_minus_penalty() {
    let inst = flat_k0(1.0, 3, 0.5, 0.25, DGModel::independent(vec![0.3; 3], vec![0.2; 3], 1.0).unwrap(), 4);
    let sol = solve_structured(&inst.problem, &inst.grid).unwrap();
    for ig in 0..inst.grid.ng() {
        for (iy, &y) in inst.grid.y_points.iter().enumerate() {
            let w = sol.continuation_slice(2, ig)[iy];
            assert!((w + inst.problem.penalty.value(y)).abs() < 1e-12);
            assert!((expected_continuation(&sol.values, &inst.grid, 2, y, ig) - w).abs() < 1e-12);
        }
    }
}

#[test]
fn independent_supply_gives_bin_free_continuation() {
    let model = DGModel::independent(vec![0.4, 0.6, 0.2, 0.5], vec![0.3; 4], 1.2).unwrap();
    let spec = DeferrableSpec::new(1.5, 4, 0.5).unwrap();
    let tariff = TariffCalendar::flat(4, 0.4, 0.1).unwrap();
    let dev = vec![QuadraticUtility::new(0.8, 1.0, 0.6).unwrap()];
    let inst = instance(spec, tariff, (0.6, 0.1), dev, model, 6, 0.25);
    let sol = solve_structured(&inst.problem, &inst.grid).unwrap();
    for t in 0..4 {
        let first = sol.continuation_slice(t, 0).to_vec();
        for ig in 1..inst.grid.ng() {
            for (a, b) in first.iter().zip(sol.continuation_slice(t, ig)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn one_stage_with_surplus_supply_charges_everything() {
    let inst = flat_k0(0.5, 1, 1.0, 0.25, DGModel::deterministic(vec![1.0], 2.0).unwrap(), 4);
    let sol = solve_bruteforce(&inst.problem, &inst.grid, DEFAULT_ND, DEFAULT_BUDGET).unwrap();
    let iy = inst.grid.index_of(0.5).unwrap();
    for ig in 0..inst.grid.ng() {
        assert!((sol.policy.v_at(0, iy, ig) - 0.5).abs() < 1e-12);
    }
}

#[test]
fn one_stage_without_supply_still_completes() {
    // q'(y) >= c1 = 0.6 > 0.4 = buy rate, so buying beats the penalty.
    let inst = flat_k0(0.75, 1, 1.0, 0.25, DGModel::deterministic(vec![0.0], 1.0).unwrap(), 4);
    let sol = solve_bruteforce(&inst.problem, &inst.grid, DEFAULT_ND, DEFAULT_BUDGET).unwrap();
    let plan = sol.plan(&inst.problem, 0, 0);
    assert!((plan.optimize(0.75, 0.0).v - 0.75).abs() < 1e-12);
    let iy = inst.grid.index_of(0.75).unwrap();
    assert!((sol.policy.v_at(0, iy, 0) - 0.75).abs() < 1e-12);
}

#[test]
fn no_deferrable_demand_leaves_only_device_surplus() {
    let horizon = 3;
    let model = DGModel::independent(vec![0.5; horizon], vec![0.3; horizon], 1.0).unwrap();
    let spec = DeferrableSpec::new(0.0, horizon, 0.5).unwrap();
    let tariff = TariffCalendar::flat(horizon, 0.4, 0.1).unwrap();
    let dev = vec![QuadraticUtility::new(0.9, 1.0, 0.8).unwrap()];
    let inst = instance(spec, tariff, (5.0, 2.0), dev.clone(), model, 5, 0.25);
    let sol = solve_structured(&inst.problem, &inst.grid).unwrap();
    assert!(sol.policy.v.iter().all(|&v| v == 0.0));

    let pv = *inst.problem.tariff.at(0);
    let stage = |g: f64| {
        let nd = nondeferrable_optimal(&dev, &pv, g).unwrap();
        total_utility(&dev, &nd.d) - pv.payment(nd.d.iter().sum::<f64>() - g)
    };
    let centers = &inst.grid.dg.bin_centers;
    let row = inst.grid.dg.row(0, 0);
    let later: f64 = row.iter().zip(centers).map(|(p, &g)| p * stage(g)).sum();
    for (ig, &g) in centers.iter().enumerate() {
        let expect = stage(g) + (horizon - 1) as f64 * later;
        assert!((sol.values.get(0, 0, ig) - expect).abs() < 1e-9, "bin {ig}");
    }
}

#[test]
fn flat_pure_deferrable_thresholds() {
    let model = DGModel::independent(vec![0.4, 0.7, 0.2, 0.5, 0.6], vec![0.3; 5], 1.5).unwrap();
    let inst = flat_k0(2.0, 5, 0.5, 0.25, model, 6);
    let inst = Instance { grid: Grid::new(&inst.problem, 0.25, Some(2.5), inst.grid.dg.clone()).unwrap(), ..inst };
    let sol = solve_structured(&inst.problem, &inst.grid).unwrap();
    for t in 0..5 {
        for ig in 0..inst.grid.ng() {
            let th = sol.thresholds.get(t, ig);
            assert!((th.theta_plus - (4 - t) as f64 * 0.5).abs() <= inst.grid.dy, "t={t} {th:?}");
            assert_eq!(th.theta_minus, 0.0);
        }
    }
    for ig in 0..inst.grid.ng() {
        assert_eq!(sol.thresholds.get(4, ig).theta_plus, 0.0);
    }
}

#[test]
fn random_bruteforce_tables_satisfy_lemma_2_and_monotonicity() {
    let mut r = rng(41);
    let opt = InstanceOptions { max_horizon: 5, max_bins: 5, max_devices: 1, flat: false, independent_only: false, full_grid: false };
    for _ in 0..8 {
        let inst = random_instance(&mut r, &opt);
        let sol = solve_bruteforce(&inst.problem, &inst.grid, 21, DEFAULT_BUDGET).unwrap();
        assert!(check_lemma2(&sol.policy, &inst.grid, &inst.problem.spec).violations.is_empty());
        assert!(check_concavity(&sol.values, 1e-6).passed());
        assert!(check_monotone(&sol.values, 1e-9).is_empty());
    }
}

#[test]
fn oversized_bruteforce_is_refused() {
    let model = DGModel::independent(vec![0.5; 6], vec![0.3; 6], 1.0).unwrap();
    let spec = DeferrableSpec::new(3.0, 6, 0.5).unwrap();
    let tariff = TariffCalendar::flat(6, 0.4, 0.1).unwrap();
    let dev = vec![QuadraticUtility::new(0.9, 1.0, 0.8).unwrap(); 2];
    let inst = instance(spec, tariff, (0.6, 0.1), dev, model, 8, 0.25);
    let err = solve_bruteforce(&inst.problem, &inst.grid, 51, 1000).unwrap_err();
    assert!(matches!(err, deferral::error::Error::BudgetExceeded { .. }));
}
