//! `warmcloud` command-line front end.
//!
//! Exit codes: 0 success, 1 invariant violation or numerical failure, 2 usage,
//! configuration or input error.

mod config;
mod expr;
mod output;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use warmcloud::binfmt::{load_checkpoint, load_velocity_series};
use warmcloud::boundary::BoundarySpec;
use warmcloud::diagnostics::{check_bounds, qv_star, record_norms, BoundTolerances, Monitor, VIOLATION_HEADER};
use warmcloud::diagnostics::violation_row;
use warmcloud::grid::{Grid, GridConfig};
use warmcloud::mms::mms_convergence;
use warmcloud::params::PhysParams;
use warmcloud::solver::run;
use warmcloud::state::{Field, MoistState};
use warmcloud::thermo::{critical_temperature, saturation_mixing_ratio_sup};
use warmcloud::velocity::{analytic_velocity, validate_velocity, ValidationReport};

use config::{parse_config, RunConfig, VelocityKind};
use output::{write_final_checkpoint, RunObserver, SnapshotPlan};

#[derive(Parser, Debug)]
#[command(name = "warmcloud", version, about = "Warm-rain moisture and temperature solver in pressure coordinates")]
struct Cli {
    /// Configuration file (TOML); a positional path after the subcommand takes precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print a machine-readable summary on standard output.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a simulation.
    Run { config: Option<PathBuf> },
    /// Check the configured velocity for incompressibility and no-penetration.
    ValidateVelocity { config: Option<PathBuf> },
    /// Manufactured-solution convergence study.
    Mms { config: Option<PathBuf> },
    /// Bound check of a checkpoint file.
    Check { snapshot: PathBuf },
    /// Print the resolved constants.
    PrintParams { config: Option<PathBuf> },
}

enum Failure {
    /// Exit code 1.
    Violation(String),
    /// Exit code 2.
    Usage(String),
}

type Outcome = Result<(), Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Run { config } => cmd_run(&cli, config.as_deref()),
        Command::ValidateVelocity { config } => cmd_validate_velocity(&cli, config.as_deref()),
        Command::Mms { config } => cmd_mms(&cli, config.as_deref()),
        Command::Check { snapshot } => cmd_check(&cli, snapshot),
        Command::PrintParams { config } => cmd_print_params(&cli, config.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(cli: &Cli, positional: Option<&Path>) -> Result<RunConfig, Failure> {
    match positional.or(cli.config.as_deref()) {
        Some(path) => {
            log::info!("reading {}", path.display());
            parse_config(path).map_err(usage)
        }
        None => {
            log::info!("no configuration given, using defaults");
            Ok(RunConfig::default())
        }
    }
}

fn print_json(value: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&value).expect("json"));
}

fn field_summary(state: &MoistState<f64>, grid: &Grid<f64>) -> serde_json::Value {
    let rec = record_norms(state, grid);
    let mut map = serde_json::Map::new();
    for f in Field::ALL {
        let n = &rec.fields[f.index()];
        map.insert(f.name().into(), json!({"min": n.min, "max": n.max, "l2": n.l2}));
    }
    serde_json::Value::Object(map)
}

fn cmd_run(cli: &Cli, positional: Option<&Path>) -> Outcome {
    let mut cfg = load(cli, positional)?;
    if let Some(out) = &cli.out {
        cfg.output.directory = out.clone();
    }
    let setup = cfg.build().map_err(usage)?;
    let dir = cfg.output.directory.clone();
    std::fs::create_dir_all(&dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()).map_err(|e| usage(format!("{}: {e}", dir.display())))?;

    let model = &setup.model;
    let d = &cfg.diagnostics;
    let mut monitor = Monitor::new(model, &setup.initial, setup.ctrl.t_end, (d.k_min, d.k_max), d.level_set_m).map_err(usage)?;
    monitor.tolerances = BoundTolerances {
        nonnegative: d.nonnegative_tol,
        vapor_max: d.vapor_tol,
    };
    let open = |name: &str| -> Result<Box<dyn std::io::Write + Send>, Failure> {
        let path = dir.join(name);
        File::create(&path)
            .map(|f| Box::new(BufWriter::new(f)) as Box<dyn std::io::Write + Send>)
            .map_err(|e| usage(format!("{}: {e}", path.display())))
    };
    let monitor = monitor
        .with_writers(open("diagnostics.csv")?, open("violations.csv")?)
        .map_err(usage)?;
    let mut observer = RunObserver {
        monitor,
        plan: SnapshotPlan {
            directory: dir.clone(),
            vtk: cfg.output.vtk,
            csv_levels: cfg.output.csv_levels.clone(),
        },
        outputs: 0,
        files: Vec::new(),
    };
    log::info!(
        "running {}x{}x{} to t={} with {}",
        model.grid.nx(),
        model.grid.ny(),
        model.grid.np(),
        setup.ctrl.t_end,
        setup.ctrl.scheme.name()
    );
    let started = std::time::Instant::now();
    let result = run(model, setup.initial.clone(), &setup.ctrl, cfg.output.interval, &mut observer);
    observer.monitor.flush().map_err(usage)?;
    let result = result.map_err(|e| Failure::Violation(format!("run failed: {e}")))?;
    let checkpoint = if cfg.output.checkpoint {
        Some(write_final_checkpoint(&dir, &result.final_state, model).map_err(usage)?)
    } else {
        None
    };
    let mon = &observer.monitor;
    let secs = started.elapsed().as_secs_f64();
    if cli.json {
        print_json(json!({
            "status": if mon.violation_count == 0 { "ok" } else { "violations" },
            "t_end": result.final_state.t,
            "steps": result.steps,
            "outputs": result.outputs,
            "min_dt": result.min_dt,
            "max_dt": result.max_dt,
            "clamped_cells": result.clamped_cells,
            "violations": mon.violation_count,
            "min_value": mon.min_value,
            "max_vapor": mon.max_qv,
            "vapor_bound": mon.qv_star,
            "max_temperature": mon.max_temp,
            "level_set_base": mon.level_sets.m,
            "level_set_energies": mon.level_sets.energies(),
            "fields": field_summary(&result.final_state, &model.grid),
            "output_directory": dir,
            "checkpoint": checkpoint,
            "seconds": secs,
        }));
    } else {
        println!(
            "t={:.6} steps={} outputs={} dt=[{:.3e}, {:.3e}] violations={} min={:.3e} max qv={:.4e} (bound {:.4e}) in {:.1}s",
            result.final_state.t,
            result.steps,
            result.outputs,
            result.min_dt,
            result.max_dt,
            mon.violation_count,
            mon.min_value,
            mon.max_qv,
            mon.qv_star,
            secs
        );
        println!("output written to {}", dir.display());
    }
    if result.clamped_cells > 0 {
        log::warn!("negative values clamped in {} cell updates", result.clamped_cells);
    }
    if mon.violation_count > 0 {
        return Err(Failure::Violation(format!(
            "{} invariant violations, see {}",
            mon.violation_count,
            dir.join("violations.csv").display()
        )));
    }
    Ok(())
}

fn cmd_validate_velocity(cli: &Cli, positional: Option<&Path>) -> Outcome {
    let cfg = load(cli, positional)?;
    let params = cfg.physics.to_params();
    let grid = Grid::new(&cfg.grid_config().map_err(usage)?, &params).map_err(usage)?;
    let tol = cfg.tolerance(&grid);
    let reports: Vec<ValidationReport<f64>> = match cfg.velocity.kind {
        VelocityKind::Analytic => {
            let spec = cfg.analytic_spec();
            let t_end = cfg.stepping.t_end;
            let times: Vec<f64> = if spec.modulation.is_some() {
                (0..=4).map(|m| t_end * m as f64 / 4.0).collect()
            } else {
                vec![0.0]
            };
            let mut out = Vec::new();
            for t in times {
                let vel = analytic_velocity(&spec, &grid, t).map_err(usage)?;
                out.push(validate_velocity(&vel, &grid, tol));
            }
            out
        }
        VelocityKind::Rest => vec![validate_velocity(&warmcloud::velocity::VelocityField::zeros(grid.dims()), &grid, tol)],
        VelocityKind::File => {
            let path = cfg.velocity.file.as_ref().expect("validated");
            let frames = load_velocity_series::<f64>(path).map_err(usage)?;
            if frames[0].dims() != grid.dims() {
                return Err(usage(format!("{}: frame dimensions differ from the grid block", path.display())));
            }
            frames.iter().map(|v| validate_velocity(v, &grid, tol)).collect()
        }
    };
    let passed = reports.iter().all(|r| r.passed());
    if cli.json {
        let rows: Vec<_> = reports
            .iter()
            .map(|r| {
                json!({
                    "t": r.t,
                    "max_divergence": r.max_divergence,
                    "max_normal": r.max_normal,
                    "divergence_tolerance": r.tolerance.divergence,
                    "normal_tolerance": r.tolerance.normal,
                    "passed": r.passed(),
                })
            })
            .collect();
        print_json(json!({"passed": passed, "reports": rows}));
    } else {
        for r in &reports {
            println!("{r}");
        }
    }
    if passed {
        Ok(())
    } else {
        Err(Failure::Violation("velocity validation failed".into()))
    }
}

fn cmd_mms(cli: &Cli, positional: Option<&Path>) -> Outcome {
    let cfg = load(cli, positional)?;
    let mut all_ok = true;
    let mut results = Vec::new();
    for &name in &cfg.mms.cases {
        let case = name.case();
        log::info!("manufactured case {} on {:?}", case.name, cfg.mms.levels);
        let obs = mms_convergence(&case, &cfg.mms.levels).map_err(|e| Failure::Violation(e.to_string()))?;
        let nominal = name.nominal_order();
        let ok = obs.orders.iter().all(|o| (o - nominal).abs() <= cfg.mms.tolerance);
        all_ok &= ok;
        if !cli.json {
            println!("case {} (expected order {nominal})", obs.case);
            println!("{:>5} {:>10} {:>6} {:>11} {:>11} {:>11} {:>11}", "n", "dt", "steps", "T", "qv", "qc", "qr");
            for l in &obs.levels {
                println!(
                    "{:>5} {:>10.3e} {:>6} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e}",
                    l.n, l.dt, l.steps, l.errors[0], l.errors[1], l.errors[2], l.errors[3]
                );
            }
            println!(
                "order {:>24.2} {:>11.2} {:>11.2} {:>11.2}  {}",
                obs.orders[0],
                obs.orders[1],
                obs.orders[2],
                obs.orders[3],
                if ok { "ok" } else { "OUT OF RANGE" }
            );
        }
        results.push(json!({
            "case": obs.case,
            "expected": nominal,
            "orders": obs.orders,
            "combined_order": obs.combined_order,
            "monotone": obs.monotone,
            "levels": obs.levels.iter().map(|l| json!({"n": l.n, "dt": l.dt, "steps": l.steps, "errors": l.errors})).collect::<Vec<_>>(),
            "passed": ok,
        }));
    }
    if cli.json {
        print_json(json!({"passed": all_ok, "cases": results}));
    }
    if all_ok {
        Ok(())
    } else {
        Err(Failure::Violation(format!("observed orders outside +-{}", cfg.mms.tolerance)))
    }
}

fn cmd_check(cli: &Cli, snapshot: &Path) -> Outcome {
    let (state, _) = load_checkpoint::<f64>(snapshot).map_err(usage)?;
    let dims = state.dims();
    let (grid, params, bound) = match cli.config.as_deref() {
        Some(path) => {
            let cfg = parse_config(path).map_err(usage)?;
            let setup = cfg.build().map_err(usage)?;
            if setup.model.grid.dims() != dims {
                return Err(usage("snapshot dimensions differ from the configured grid"));
            }
            let m = setup.model;
            let bound = qv_star(&setup.initial, &m.boundary, &m.grid, &m.params, setup.ctrl.t_end);
            (m.grid, m.params, bound)
        }
        None => {
            let params = PhysParams::default();
            let cfg = GridConfig {
                nx: dims.nx,
                ny: dims.ny,
                np: dims.np,
                ..GridConfig::cube(1)
            };
            let grid = Grid::new(&cfg, &params).map_err(usage)?;
            let bound = qv_star(&state, &BoundarySpec::neumann(), &grid, &params, state.t);
            (grid, params, bound)
        }
    };
    let report = check_bounds(&state, &grid, &params, bound, BoundTolerances::default());
    if cli.json {
        let rows: Vec<_> = report
            .violations
            .iter()
            .map(|v| json!({"t": v.t, "quantity": v.quantity, "i": v.i, "j": v.j, "k": v.k, "value": v.value, "bound": v.bound}))
            .collect();
        print_json(json!({
            "passed": report.is_empty(),
            "t": state.t,
            "vapor_bound": bound,
            "violations": rows,
            "fields": field_summary(&state, &grid),
        }));
    } else {
        println!("{VIOLATION_HEADER}");
        for v in &report.violations {
            println!("{}", violation_row(v));
        }
    }
    if report.is_empty() {
        Ok(())
    } else {
        Err(Failure::Violation(format!("{} bound violations in {}", report.len(), snapshot.display())))
    }
}

fn cmd_print_params(cli: &Cli, positional: Option<&Path>) -> Outcome {
    let cfg = load(cli, positional)?;
    let setup = cfg.build().map_err(usage)?;
    let p = &setup.model.params;
    let t_crit = critical_temperature(p).map_err(usage)?;
    let qvs_sup = saturation_mixing_ratio_sup(setup.model.grid.p_top(), p);
    let qv_bound = qv_star(&setup.initial, &setup.model.boundary, &setup.model.grid, p, setup.ctrl.t_end);
    let rows: Vec<(&str, f64)> = vec![
        ("r_d", p.r_d),
        ("r_v", p.r_v),
        ("c_pd", p.c_pd),
        ("c_pv", p.c_pv),
        ("c_l", p.c_l),
        ("l0", p.l0),
        ("t0", p.t0),
        ("es0", p.es0),
        ("g", p.g),
        ("v_rain", p.v_rain),
        ("c_ev", p.c_ev),
        ("c_cd", p.c_cd),
        ("c_cn", p.c_cn),
        ("c_ac", p.c_ac),
        ("c_cr", p.c_cr),
        ("q_ac_star", p.q_ac_star),
        ("t_low", p.t_low),
        ("t_ramp", p.t_ramp),
        ("q_vs_max", p.q_vs_max),
        ("p_ref", p.p_ref),
        ("beta", p.beta),
        ("t_crit", t_crit),
        ("epsilon", p.epsilon()),
        ("kappa_dry", p.kappa_dry()),
        ("kappa1", p.kappa1()),
        ("qvs_sup", qvs_sup),
        ("qv_star", qv_bound),
    ];
    if cli.json {
        let mut map = serde_json::Map::new();
        for (k, v) in &rows {
            map.insert((*k).into(), json!(v));
        }
        print_json(serde_json::Value::Object(map));
    } else {
        for (k, v) in &rows {
            println!("{k:<10} = {v}");
        }
    }
    Ok(())
}
