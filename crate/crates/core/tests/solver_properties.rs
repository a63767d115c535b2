mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use warmcloud::boundary::BoundarySpec;
use warmcloud::grid::{Grid, GridConfig};
use warmcloud::params::PhysParams;
use warmcloud::solver::{Model, Processes, Scheme, StepControl};
use warmcloud::state::{Field, MoistState};
use warmcloud::velocity::{AnalyticFlowSpec, VelocityProvider};
use warmcloud::field::ScalarField;

fn noisy_state(grid: &Grid<f64>, seed: u64) -> MoistState<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = MoistState::zeros(grid.dims());
    s.fields = [
        ScalarField::from_fn(grid, |_, _, _| rng.gen_range(250.0..300.0)),
        ScalarField::from_fn(grid, |_, _, _| rng.gen_range(0.0..0.01)),
        ScalarField::from_fn(grid, |_, _, _| rng.gen_range(0.0..2e-3)),
        ScalarField::from_fn(grid, |_, _, _| rng.gen_range(0.0..2e-3)),
    ];
    s
}

fn transport_model(n: usize, amplitude: f64) -> Model<f64> {
    let params = PhysParams::default();
    let grid = Grid::new(&GridConfig::cube(n), &params).unwrap();
    let vel = VelocityProvider::analytic(AnalyticFlowSpec::new(amplitude), &grid).unwrap();
    let mut model = Model::new(grid, params, BoundarySpec::neumann(), vel);
    model.processes = Processes::transport_only();
    model
}

fn water(s: &MoistState<f64>) -> f64 {
    [Field::Vapor, Field::Cloud, Field::Rain]
        .iter()
        .map(|&f| s.field(f).interior().sum::<f64>())
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Explicit Euler at the reported step creates no new extrema under transport.
    #[test]
    fn stable_step_is_monotone(seed in any::<u64>(), amplitude in 0.1..3.0f64) {
        let model = transport_model(6, amplitude);
        let state = noisy_state(&model.grid, seed);
        let ctrl = StepControl::default();
        let vel = model.velocity.at(0.0).into_owned();
        let dt = model.stable_dt(&state, &vel, &ctrl).unwrap();
        let next = model.step(&state, dt, &ctrl).unwrap().state;
        for f in Field::ALL {
            let (lo, hi) = state.field(f).minmax().unwrap();
            let (nlo, nhi) = next.field(f).minmax().unwrap();
            let slack = 1e-12 * hi.abs().max(1.0);
            prop_assert!(nlo >= lo - slack && nhi <= hi + slack, "{f:?}: [{lo}, {hi}] -> [{nlo}, {nhi}]");
        }
    }

    // With insulating walls and no rain-out, phase changes only move water around.
    #[test]
    fn closed_box_conserves_total_water(seed in any::<u64>()) {
        let mut model = transport_model(6, 1.0);
        model.processes = Processes { sedimentation: false, ..Processes::default() };
        let mut state = noisy_state(&model.grid, seed);
        let ctrl = StepControl::default();
        let before = water(&state);
        for _ in 0..5 {
            let vel = model.velocity.at(state.t).into_owned();
            let dt = model.stable_dt(&state, &vel, &ctrl).unwrap();
            state = model.step(&state, dt, &ctrl).unwrap().state;
        }
        prop_assert!(((water(&state) - before) / before).abs() < 1e-13);
    }

    #[test]
    fn scenarios_stay_nonnegative(seed in 0u64..1000) {
        let sc = common::random_scenario(seed, 6, 0.05);
        let out = common::run_scenario(&sc);
        prop_assert!(out.min_value >= -1e-12, "min {}", out.min_value);
        prop_assert!(out.max_qv <= out.qv_star + 1e-10);
        prop_assert_eq!(out.violation_count, 0);
    }
}

/// Difference between one step of `dt` and two of `dt / 2`.
fn half_step_gap(model: &Model<f64>, state: &MoistState<f64>, dt: f64, ctrl: &StepControl<f64>) -> f64 {
    let full = model.step(state, dt, ctrl).unwrap().state;
    let half = model.step(state, 0.5 * dt, ctrl).unwrap().state;
    let two = model.step(&half, 0.5 * dt, ctrl).unwrap().state;
    full.qv()
        .interior()
        .zip(two.qv().interior())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[test]
fn half_step_comparison_matches_scheme_order() {
    let model = transport_model(12, 1.0);
    let pi = std::f64::consts::PI;
    let state = MoistState::from_fns(
        &model.grid,
        |_, _, _| 280.0,
        |x, y, p| 5e-3 * (1.0 + 0.5 * (pi * x).cos() * (pi * y).cos() * (pi * (p - 2e4) / 8e4).cos()),
        |_, _, _| 0.0,
        |_, _, _| 0.0,
    );
    // The one-step gap is a local error: O(dt^2) for Euler, O(dt^3) for Heun.
    for (scheme, expected) in [(Scheme::ExplicitEuler, 2.0), (Scheme::Rk2, 3.0)] {
        let ctrl = StepControl { scheme, ..StepControl::default() };
        let dt = 2e-3;
        let (a, b) = (half_step_gap(&model, &state, dt, &ctrl), half_step_gap(&model, &state, 0.5 * dt, &ctrl));
        let order = (a / b).log2();
        assert!((order - expected).abs() < 0.15, "{scheme:?}: {order}");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let sc = common::random_scenario(77, 10, 0.1);
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| common::run_scenario(&sc))
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.diagnostics, b.diagnostics);
    assert!(a.diagnostics.lines().count() >= 3);
}
