//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails.

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use warmcloud::boundary::BoundarySpec;
use warmcloud::grid::{Grid, GridConfig};
use warmcloud::microphysics::{phase_change_tendencies, source_rates};
use warmcloud::mms::{log_slope, mms_convergence, MmsCase};
use warmcloud::params::PhysParams;
use warmcloud::solver::{Model, Processes, StepControl};
use warmcloud::state::MoistState;
use warmcloud::thermo::{critical_temperature, latent_heat, moist_coeffs, saturation_vapor_pressure};
use warmcloud::velocity::{analytic_velocity, validate_velocity, AnalyticFlowSpec, ValidationTolerance, VelocityProvider};
use warmcloud::Field;

use common::{random_scenario, run_scenario, Outcome};

const SCENARIOS: u64 = 20;

struct Tally {
    failed: Vec<&'static str>,
}

impl Tally {
    fn report(&mut self, name: &'static str, ok: bool, detail: String) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(name);
        }
    }
}

fn banner(title: &str) {
    println!("\n== {title} ==");
}

/// Adaptive Simpson quadrature with Richardson correction.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

fn thermo_oracle(t: &mut Tally) {
    banner("1. saturation curve vs quadrature");
    let start = Instant::now();
    let p = PhysParams::<f64>::default();
    let t_crit = critical_temperature(&p).unwrap();
    let (lo, hi) = (p.t_low + p.t_ramp, t_crit - p.t_ramp);
    let slope = |temp: f64| latent_heat(temp, &p) / (p.r_v * temp * temp);
    let mut worst = 0.0f64;
    for n in 0..200 {
        let temp = lo + (hi - lo) * n as f64 / 199.0;
        let ln_ratio = adaptive_simpson(&slope, p.t0, temp, 1e-13);
        let oracle = p.es0 * ln_ratio.exp();
        let es = saturation_vapor_pressure(temp, &p);
        worst = worst.max(((es - oracle) / oracle).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    t.report(
        "thermo_oracle",
        worst <= 1e-8 && secs < 1.0,
        format!("max rel err {worst:.2e} over 200 T in [{lo:.1}, {hi:.1}] K (tol 1e-8), {secs:.3} s"),
    );
}

fn random_q(rng: &mut ChaCha8Rng, allow_negative: bool) -> f64 {
    match rng.gen_range(0..6) {
        0 => 0.0,
        1 if allow_negative => -10f64.powf(rng.gen_range(-14.0..-1.0)),
        2 => 10f64.powf(rng.gen_range(-14.0..1.0)),
        _ => rng.gen_range(0.0..0.05),
    }
}

fn microphysics_neutrality(t: &mut Tally) {
    banner("2. microphysics neutrality");
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut params = PhysParams::<f64>::default();
    let t_crit = critical_temperature(&params).unwrap();
    let (mut bad_sum, mut bad_ev, mut bad_heat, mut bad_hot) = (0usize, 0usize, 0usize, 0usize);
    let mut worst = 0.0f64;
    let mut admissible = 0usize;
    for n in 0..1_000_000u32 {
        if n % 1000 == 0 {
            params.c_ev = rng.gen_range(1e-5..1.0);
            params.c_cd = rng.gen_range(0.1..1e3);
            params.c_cn = rng.gen_range(0.1..10.0);
            params.c_ac = rng.gen_range(0.1..10.0);
            params.c_cr = rng.gen_range(0.1..10.0);
        }
        let p = rng.gen_range(1e3..1.2e5);
        let temp = if rng.gen_bool(0.2) { t_crit + rng.gen_range(0.0..t_crit) } else { rng.gen_range(-20.0..t_crit) };
        let (qv, qc, qr) = (random_q(&mut rng, true), random_q(&mut rng, true), random_q(&mut rng, true));
        let r = source_rates(p, temp, qv, qc, qr, &params).unwrap();
        let d = phase_change_tendencies(p, temp, qv, qc, qr, &params).unwrap();
        let sum = d.d_qv + d.d_qc + d.d_qr;
        let scale = r.s_ev.abs() + r.s_cd.abs() + r.s_ac.abs() + r.s_cr.abs();
        if scale > 0.0 {
            worst = worst.max(sum.abs() / scale);
        }
        if sum.abs() > 4.0 * f64::EPSILON * scale {
            bad_sum += 1;
        }
        if !(r.s_ev >= 0.0) {
            bad_ev += 1;
        }
        // The sign statements concern admissible states; negative vapour makes
        // (q_vs - q_v)+ positive even where q_vs vanishes.
        if qv >= 0.0 && qc >= 0.0 && qr >= 0.0 && temp >= 0.0 {
            admissible += 1;
            let l_tilde = moist_coeffs(qv, qc, qr, temp, &params).l_tilde;
            if !(l_tilde * r.s_ev >= 0.0) {
                bad_heat += 1;
            }
            if temp >= t_crit && r.s_ev != 0.0 {
                bad_hot += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    t.report(
        "microphysics_neutrality",
        bad_sum + bad_ev + bad_heat + bad_hot == 0 && secs < 10.0,
        format!(
            "1e6 inputs: neutrality fails {bad_sum} (max |sum|/scale {worst:.1e}), S_ev<0 {bad_ev}; \
             on {admissible} admissible inputs L~+ S_ev<0 {bad_heat}, S_ev!=0 above T_crit {bad_hot}; {secs:.2} s"
        ),
    );
}

fn coefficient_bounds(t: &mut Tally) {
    banner("3. coefficient bounds");
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = PhysParams::<f64>::default();
    let kappa1 = params.kappa1();
    let mut bad = [0usize; 3];
    let mut kmax = 0.0f64;
    for _ in 0..1_000_000u32 {
        let (qv, qc, qr) = (random_q(&mut rng, false), random_q(&mut rng, false), random_q(&mut rng, false));
        let temp = rng.gen_range(0.0..1500.0);
        let c = moist_coeffs(qv, qc, qr, temp, &params);
        kmax = kmax.max(c.kappa_tilde);
        if !(c.kappa_tilde > 0.0 && c.kappa_tilde <= kappa1) {
            bad[0] += 1;
        }
        let rain_heat = params.c_l * qr * c.inv_c;
        if !((0.0..=1.0).contains(&rain_heat)) {
            bad[1] += 1;
        }
        if !(c.inv_c <= 1.0 / params.c_pd) {
            bad[2] += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    t.report(
        "coefficient_bounds",
        bad.iter().sum::<usize>() == 0,
        format!(
            "1e6 states: kappa~ out of (0, {kappa1:.6}] {} (max seen {kmax:.6}), rain heat out of [0,1] {}, \
             1/C~ > 1/c_pd {}; {secs:.2} s",
            bad[0], bad[1], bad[2]
        ),
    );
}

fn mms(t: &mut Tally) {
    banner("4. manufactured-solution convergence");
    let start = Instant::now();
    let levels = [16, 32, 64];
    let mut ok = true;
    let mut lines = Vec::new();
    for (case, target) in [(MmsCase::<f64>::diffusion(), 2.0), (MmsCase::<f64>::advection(), 1.0)] {
        let obs = mms_convergence(&case, &levels).unwrap();
        for l in &obs.levels {
            println!(
                "  {} n={:>3} dt={:.3e} steps={:>5} rms err T {:.3e} qv {:.3e} qc {:.3e} qr {:.3e}",
                obs.case, l.n, l.dt, l.steps, l.errors[0], l.errors[1], l.errors[2], l.errors[3]
            );
        }
        let within = |o: f64| (o - target).abs() <= 0.2;
        let case_ok = obs.orders.iter().all(|&o| within(o)) && within(obs.combined_order);
        ok &= case_ok;
        lines.push(format!(
            "{} orders T {:.2} qv {:.2} qc {:.2} qr {:.2} combined {:.2} (target {target} +- 0.2)",
            obs.case, obs.orders[0], obs.orders[1], obs.orders[2], obs.orders[3], obs.combined_order
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    t.report(
        "mms_convergence",
        ok && secs < 300.0,
        format!("{}; grids {levels:?}; {secs:.1} s", lines.join("; ")),
    );
}

fn conservation(t: &mut Tally) {
    banner("5. transport conservation");
    let start = Instant::now();
    let params = PhysParams::<f64> {
        diffusion: [warmcloud::params::Diffusivity { mu: 1e-2, nu: 3e5 }; 4],
        ..Default::default()
    };
    let grid = Grid::new(&GridConfig::cube(32), &params).unwrap();
    let velocity = VelocityProvider::analytic(AnalyticFlowSpec::new(1.0), &grid).unwrap();
    let mut model = Model::new(grid, params, BoundarySpec::neumann(), velocity);
    model.processes = Processes::transport_only();
    let pi = std::f64::consts::PI;
    let (p1, span) = (2e4, 8e4);
    let mut state = MoistState::from_fns(
        &model.grid,
        |_, _, _| 280.0,
        |x, y, p| 5e-3 * (1.0 + 0.8 * (pi * x).cos() * (pi * y).sin() * (pi * (p - p1) / span).cos()),
        |x, _, p| 1e-3 * (1.0 + (2.0 * pi * x).sin() * (pi * (p - p1) / span).sin()),
        |_, y, p| 2e-3 * (-((y - 0.5).powi(2) + ((p - 6e4) / span).powi(2)) * 20.0).exp(),
    );
    let ctrl = StepControl::<f64>::default();
    let vel = model.velocity.at(0.0).into_owned();
    let dt = model.stable_dt(&state, &vel, &ctrl).unwrap();
    let dv = model.grid.cell_volume();
    let totals = |s: &MoistState<f64>| -> [f64; 3] {
        [Field::Vapor, Field::Cloud, Field::Rain].map(|f| s.field(f).interior().map(|v| v * dv).sum())
    };
    let before = totals(&state);
    for _ in 0..1000 {
        state = model.step(&state, dt, &ctrl).unwrap().state;
    }
    let after = totals(&state);
    let drift: Vec<f64> = before.iter().zip(&after).map(|(b, a)| ((a - b) / b).abs()).collect();
    let worst = drift.iter().cloned().fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    t.report(
        "transport_conservation",
        worst <= 1e-12,
        format!(
            "1000 steps dt={dt:.3e} on 32^3: relative drift qv {:.1e} qc {:.1e} qr {:.1e} (tol 1e-12); {secs:.1} s",
            drift[0], drift[1], drift[2]
        ),
    );
}

fn run_suite(threads: usize) -> Vec<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        (0..SCENARIOS)
            .map(|seed| {
                let sc = random_scenario(1000 + seed, 32, 1.0);
                run_scenario(&sc)
            })
            .collect()
    })
}

fn maximum_principles(t: &mut Tally, suite: &[Outcome], secs: f64) {
    banner("6. maximum principles");
    let mut ok = true;
    let mut tight_ok = true;
    let mut worst_min = f64::INFINITY;
    let mut worst_margin = f64::NEG_INFINITY;
    for (n, o) in suite.iter().enumerate() {
        let nonneg = o.min_value >= -1e-12;
        let vapor = o.max_qv <= o.qv_star + 1e-10;
        let tight = o.max_qv <= o.tight_qv_bound + 1e-10;
        ok &= nonneg && vapor;
        tight_ok &= tight;
        worst_min = worst_min.min(o.min_value);
        worst_margin = worst_margin.max(o.max_qv - o.tight_qv_bound);
        println!(
            "  scenario {n:>2}: steps {:>4} outputs {:>2} min {:+.3e} max qv {:.4e} q_v* {:.4e} attained bound {:.4e}{}",
            o.steps,
            o.outputs,
            o.min_value,
            o.max_qv,
            o.qv_star,
            o.tight_qv_bound,
            if nonneg && vapor { "" } else { "  <-- violation" }
        );
    }
    println!("  attained-bound check (max qv <= max(q_v0, q_v data, max q_vs) + 1e-10): {}", if tight_ok { "holds" } else { "violated" });
    t.report(
        "maximum_principles",
        ok && secs < 600.0,
        format!(
            "{SCENARIOS} scenarios on 32^3 to t=1: min value {worst_min:+.2e} (tol -1e-12), max qv - attained bound {worst_margin:+.2e}; {secs:.1} s"
        ),
    );
}

fn level_sets(t: &mut Tally, suite: &[Outcome]) {
    banner("7. level-set energies");
    let mut ok = true;
    let mut all_zero = true;
    for (n, o) in suite.iter().enumerate() {
        let monotone = o.j.windows(2).all(|w| w[1] <= w[0]);
        let decay = o.j[7] <= 1e-6 * o.j[0];
        let bounded = o.max_temp <= o.level_m;
        ok &= monotone && decay && bounded;
        all_zero &= o.j.iter().all(|&j| j == 0.0);
        if !(monotone && decay && bounded) || n == 0 {
            println!(
                "  scenario {n:>2}: M {:.1} max T {:.2} J_1 {:.3e} J_8 {:.3e} monotone {monotone}",
                o.level_m, o.max_temp, o.j[0], o.j[7]
            );
        }
    }
    let note = if all_zero { "; every J_k is 0 because max T stays below lambda_1 = M/2" } else { "" };
    t.report(
        "level_set_energies",
        ok,
        format!("J_k nonincreasing, J_8 <= 1e-6 J_1 and max T <= M in all {SCENARIOS} scenarios: {ok}{note}"),
    );
}

fn velocity_constraints(t: &mut Tally) {
    banner("8. velocity constraints");
    let params = PhysParams::<f64>::default();
    let (mut hs, mut divs, mut normals) = (Vec::new(), Vec::new(), Vec::new());
    let mut passed = true;
    // Equal wavenumbers per cell in every direction make the centred-difference
    // errors cancel exactly, so refine an anisotropic member of the family.
    let mut spec = AnalyticFlowSpec::new(1.0);
    spec.mode_y = 2;
    for n in [16, 32, 64] {
        let grid = Grid::new(&GridConfig::cube(n), &params).unwrap();
        let vel = analytic_velocity(&spec, &grid, 0.0).unwrap();
        let rep = validate_velocity(&vel, &grid, ValidationTolerance::for_grid(&grid));
        println!("  n={n:>3}: {rep}");
        passed &= rep.passed();
        hs.push(1.0 / n as f64);
        divs.push(rep.max_divergence);
        normals.push(rep.max_normal);
    }
    let pair = |v: &[f64]| -> Vec<f64> { (0..2).map(|m| log_slope(&hs[m..m + 2], &v[m..m + 2])).collect() };
    let (od, on) = (pair(&divs), pair(&normals));
    let min_order = od.iter().chain(&on).cloned().fold(f64::INFINITY, f64::min);
    t.report(
        "velocity_constraints",
        passed && min_order >= 1.8,
        format!(
            "validation passed {passed}; divergence orders {:.2}, {:.2}; no-penetration orders {:.2}, {:.2} (need >= 1.8)",
            od[0], od[1], on[0], on[1]
        ),
    );
}

fn determinism(t: &mut Tally, serial: &[Outcome], threads: usize, secs: f64) {
    banner("9. determinism");
    let parallel = run_suite(threads);
    let same = serial.iter().zip(&parallel).filter(|(a, b)| a.diagnostics == b.diagnostics && a.violations == b.violations).count();
    t.report(
        "determinism",
        same == serial.len() && serial.len() == parallel.len(),
        format!("{same}/{} diagnostics CSVs bit-identical between 1 and {threads} workers; {secs:.1} s serial", serial.len()),
    );
}

fn main() {
    let start = Instant::now();
    let mut t = Tally { failed: Vec::new() };
    thermo_oracle(&mut t);
    microphysics_neutrality(&mut t);
    coefficient_bounds(&mut t);
    mms(&mut t);
    conservation(&mut t);
    velocity_constraints(&mut t);

    let suite_start = Instant::now();
    let suite = run_suite(1);
    let suite_secs = suite_start.elapsed().as_secs_f64();
    maximum_principles(&mut t, &suite, suite_secs);
    level_sets(&mut t, &suite);
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).max(4);
    determinism(&mut t, &suite, threads, suite_secs);

    println!("\n{} criteria failed; total {:.1} s", t.failed.len(), start.elapsed().as_secs_f64());
    if !t.failed.is_empty() {
        println!("failed: {}", t.failed.join(", "));
        std::process::exit(1);
    }
}
