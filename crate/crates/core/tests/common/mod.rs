#![allow(dead_code)]

use std::io::Write;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use warmcloud::boundary::{BoundarySpec, FieldBoundary};
use warmcloud::diagnostics::Monitor;
use warmcloud::grid::{BackgroundProfile, Grid, GridConfig};
use warmcloud::params::PhysParams;
use warmcloud::solver::{run, Model, StepControl};
use warmcloud::state::MoistState;
use warmcloud::velocity::{AnalyticFlowSpec, VelocityProvider, VerticalShape};

/// `Write` sink that can be read back after the writer has been moved away.
#[derive(Clone, Default)]
pub struct SharedBuf(pub Arc<Mutex<Vec<u8>>>);

impl Write for SharedBuf {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

impl SharedBuf {
    pub fn text(&self) -> String {
        String::from_utf8(self.0.lock().unwrap().clone()).unwrap()
    }
}

pub struct Scenario {
    pub seed: u64,
    pub model: Model<f64>,
    pub initial: MoistState<f64>,
    pub ctrl: StepControl<f64>,
    pub output_interval: f64,
}

/// Smooth field `mean + sum of a few random low modes`, bounded by `mean +- spread`.
fn smooth(rng: &mut ChaCha8Rng, grid: &Grid<f64>, mean: f64, spread: f64) -> impl Fn(f64, f64, f64) -> f64 {
    let (lx, ly, p1, dp) = (grid.lx(), grid.ly(), grid.p_top(), grid.p_bottom() - grid.p_top());
    let modes: Vec<(f64, f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(-1.0..1.0) / 3.0,
                rng.gen_range(0..3) as f64,
                rng.gen_range(0..3) as f64,
                rng.gen_range(0..3) as f64,
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    move |x, y, p| {
        let pi = std::f64::consts::PI;
        let s: f64 = modes
            .iter()
            .map(|&(a, mx, my, mp, ph)| a * (pi * mx * x / lx + ph).cos() * (pi * my * y / ly).cos() * (pi * mp * (p - p1) / dp).cos())
            .sum();
        mean + spread * s
    }
}

/// Randomised admissible scenario on an `n^3` grid: smooth nonnegative initial
/// data, time-independent nonnegative Robin data, analytic flow.
pub fn random_scenario(seed: u64, n: usize, t_end: f64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = PhysParams::<f64>::default();
    params.c_ev = rng.gen_range(1e-4..1e-3);
    params.c_cd = rng.gen_range(100.0..1000.0);
    params.c_cn = rng.gen_range(0.5..2.0);
    params.c_ac = rng.gen_range(0.5..2.0);
    params.c_cr = rng.gen_range(1.0..10.0);
    params.v_rain = rng.gen_range(2e4..8e4);
    for d in &mut params.diffusion {
        d.mu = rng.gen_range(5e-3..2e-2);
        d.nu = rng.gen_range(1e5..5e5);
    }
    let mut cfg = GridConfig::cube(n);
    cfg.background = BackgroundProfile::Linear {
        bottom: rng.gen_range(285.0..295.0),
        top: rng.gen_range(215.0..230.0),
    };
    let grid = Grid::new(&cfg, &params).unwrap();

    let mut flow = AnalyticFlowSpec::new(rng.gen_range(0.2..1.0));
    flow.mode_x = rng.gen_range(1..3);
    flow.mode_y = rng.gen_range(1..3);
    flow.shape = VerticalShape::Sine { mode: rng.gen_range(1..3) };
    let velocity = VelocityProvider::analytic(flow, &grid).unwrap();

    let ranges = [(260.0, 300.0), (0.0, 0.01), (0.0, 1e-3), (0.0, 1e-3)];
    let lx = grid.lx();
    let boundary = BoundarySpec {
        fields: std::array::from_fn(|n| {
            let (lo, hi) = ranges[n];
            let alpha0 = rng.gen_range(0.0..5e-4);
            let alpha_l = rng.gen_range(0.0..5.0);
            let base: f64 = rng.gen_range(lo..hi);
            let wiggle = rng.gen_range(0.0..1.0) * (base - lo).min(hi - base);
            let lateral: f64 = rng.gen_range(lo..hi);
            FieldBoundary {
                alpha_bottom: Arc::new(move |_, _, _| alpha0),
                data_bottom: Arc::new(move |x, _, _| base + wiggle * (std::f64::consts::PI * x / lx).cos()),
                alpha_lateral: Arc::new(move |_, _| alpha_l),
                data_lateral: Arc::new(move |_, _| lateral),
            }
        }),
    };

    let t0 = smooth(&mut rng, &grid, 280.0, 20.0);
    let qv_mean = rng.gen_range(2e-3..5e-3);
    let qv0 = smooth(&mut rng, &grid, qv_mean, qv_mean);
    let qc0 = smooth(&mut rng, &grid, 5e-4, 5e-4);
    let qr0 = smooth(&mut rng, &grid, 5e-4, 5e-4);
    let initial = MoistState::from_fns(&grid, t0, qv0, qc0, qr0);

    let model = Model::new(grid, params, boundary, velocity);
    let ctrl = StepControl {
        t_end,
        dt_max: 0.05,
        ..StepControl::default()
    };
    Scenario {
        seed,
        model,
        initial,
        ctrl,
        output_interval: 0.1,
    }
}

pub struct Outcome {
    pub diagnostics: String,
    pub violations: String,
    pub violation_count: usize,
    pub min_value: f64,
    pub max_qv: f64,
    pub qv_star: f64,
    /// `max{||q_v0||, sup q_v data, max attained q_vs}`.
    pub tight_qv_bound: f64,
    pub level_m: f64,
    pub max_temp: f64,
    pub j: Vec<f64>,
    pub steps: usize,
    pub outputs: usize,
}

pub fn run_scenario(sc: &Scenario) -> Outcome {
    let diag = SharedBuf::default();
    let viol = SharedBuf::default();
    let mut monitor = Monitor::new(&sc.model, &sc.initial, sc.ctrl.t_end, (1, 8), None)
        .unwrap()
        .with_writers(Box::new(diag.clone()), Box::new(viol.clone()))
        .unwrap();
    let result = run(&sc.model, sc.initial.clone(), &sc.ctrl, sc.output_interval, &mut monitor).unwrap();
    monitor.flush().unwrap();
    let m = &sc.model;
    let q0 = sc.initial.qv().interior().fold(0.0f64, |a, v| a.max(v));
    let qb = m.boundary.data_sup(warmcloud::Field::Vapor, &m.grid, sc.ctrl.t_end);
    Outcome {
        diagnostics: diag.text(),
        violations: viol.text(),
        violation_count: monitor.violation_count,
        min_value: monitor.min_value,
        max_qv: monitor.max_qv,
        qv_star: monitor.qv_star,
        tight_qv_bound: monitor.attained_qv_bound(q0.max(qb)),
        level_m: monitor.level_sets.m,
        max_temp: monitor.max_temp,
        j: monitor.level_sets.energies(),
        steps: result.steps,
        outputs: result.outputs,
    }
}
