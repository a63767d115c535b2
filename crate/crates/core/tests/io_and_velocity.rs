use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use warmcloud::binfmt::{load_velocity_provider, read_checkpoint, save_velocity_series, write_checkpoint};
use warmcloud::field::ScalarField;
use warmcloud::grid::{Grid, GridConfig};
use warmcloud::mms::log_slope;
use warmcloud::params::PhysParams;
use warmcloud::state::MoistState;
use warmcloud::velocity::{analytic_velocity, validate_velocity, AnalyticFlowSpec, ValidationTolerance};

fn grid(n: usize) -> Grid<f64> {
    Grid::new(&GridConfig::cube(n), &PhysParams::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn checkpoint_round_trip_is_bitwise(seed in any::<u64>(), n in 2usize..6, t in 0.0..10.0f64) {
        let g = grid(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = MoistState::zeros(g.dims());
        state.t = t;
        for f in &mut state.fields {
            *f = ScalarField::from_fn(&g, |_, _, _| rng.gen::<f64>() * 10f64.powi(rng.gen_range(-300..300)));
        }
        let vel = analytic_velocity(&AnalyticFlowSpec::new(rng.gen_range(0.1..2.0)), &g, t).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &state, &vel).unwrap();
        let (s2, v2) = read_checkpoint::<f64>(buf.as_slice(), "mem".as_ref()).unwrap();
        prop_assert_eq!(s2.t.to_bits(), t.to_bits());
        for (a, b) in state.fields.iter().zip(&s2.fields) {
            prop_assert!(a.interior().zip(b.interior()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        prop_assert_eq!(v2.u, vel.u);
        prop_assert_eq!(v2.omega, vel.omega);
    }
}

#[test]
fn divergence_residual_is_second_order() {
    let mut spec = AnalyticFlowSpec::new(1.0);
    spec.mode_y = 2;
    let (mut hs, mut div) = (Vec::new(), Vec::new());
    for n in [16, 32, 64] {
        let g = grid(n);
        let vel = analytic_velocity(&spec, &g, 0.0).unwrap();
        let rep = validate_velocity(&vel, &g, ValidationTolerance::for_grid(&g));
        assert!(rep.passed(), "{rep}");
        hs.push(1.0 / n as f64);
        div.push(rep.max_divergence);
    }
    let order = log_slope(&hs, &div);
    assert!(order > 1.8, "{order}");
}

#[test]
fn saved_series_loads_as_provider() {
    let g = grid(6);
    let spec = AnalyticFlowSpec::new(0.5);
    let frames: Vec<_> = [0.0, 0.5, 1.0].iter().map(|&t| analytic_velocity(&spec, &g, t).unwrap()).collect();
    let dir = std::env::temp_dir().join(format!("warmcloud-series-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("flow.bin");
    save_velocity_series(&path, &frames).unwrap();
    let provider = load_velocity_provider(&path, &g, ValidationTolerance::for_grid(&g)).unwrap();
    assert_eq!(provider.at(0.25).u, frames[0].u);
    assert!(load_velocity_provider(&path, &grid(5), ValidationTolerance::for_grid(&grid(5))).is_err());
    std::fs::remove_dir_all(&dir).unwrap();
}
