//! Snapshot writers: legacy VTK, per-level CSV slices and binary checkpoints.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use warmcloud::binfmt::save_checkpoint;
use warmcloud::diagnostics::Monitor;
use warmcloud::grid::Grid;
use warmcloud::params::PhysParams;
use warmcloud::solver::{Model, Observer};
use warmcloud::state::{Field, MoistState};
use warmcloud::thermo::{density, potential_temperature};
use warmcloud::{Error, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Potential temperature and density at every interior cell, x fastest.
fn derived(state: &MoistState<f64>, grid: &Grid<f64>, params: &PhysParams<f64>) -> (Vec<f64>, Vec<f64>) {
    let d = grid.dims();
    let mut theta = Vec::with_capacity(d.cells());
    let mut rho = Vec::with_capacity(d.cells());
    for k in 0..d.np {
        let p = grid.p_centers()[k];
        for j in 0..d.ny {
            for i in 0..d.nx {
                let t = state.temp().get(i, j, k);
                theta.push(potential_temperature(t, p, params).unwrap_or(f64::NAN));
                let q = |f: Field| state.field(f).get(i, j, k);
                rho.push(density(p, t, q(Field::Vapor), q(Field::Cloud), q(Field::Rain), params).unwrap_or(f64::NAN));
            }
        }
    }
    (theta, rho)
}

/// Legacy ASCII VTK structured points with the four prognostic fields plus
/// potential temperature and density. The vertical axis is `p_bottom - p`, so
/// it points upwards.
pub fn write_vtk(path: &Path, state: &MoistState<f64>, grid: &Grid<f64>, params: &PhysParams<f64>) -> Result<()> {
    let mut w = create(path)?;
    let d = grid.dims();
    let (theta, rho) = derived(state, grid, params);
    let mut body = String::new();
    use std::fmt::Write as _;
    let _ = writeln!(body, "# vtk DataFile Version 3.0");
    let _ = writeln!(body, "warmcloud t={:e}", state.t);
    let _ = writeln!(body, "ASCII\nDATASET STRUCTURED_POINTS");
    let _ = writeln!(body, "DIMENSIONS {} {} {}", d.nx, d.ny, d.np);
    let _ = writeln!(body, "ORIGIN {:e} {:e} {:e}", 0.5 * grid.dx(), 0.5 * grid.dy(), 0.5 * grid.dp());
    let _ = writeln!(body, "SPACING {:e} {:e} {:e}", grid.dx(), grid.dy(), grid.dp());
    let _ = writeln!(body, "POINT_DATA {}", d.cells());
    w.write_all(body.as_bytes()).map_err(io(path))?;
    let arrays: [(&str, Vec<f64>); 6] = [
        ("temperature", state.temp().interior_vec()),
        ("vapor", state.qv().interior_vec()),
        ("cloud", state.qc().interior_vec()),
        ("rain", state.qr().interior_vec()),
        ("theta", theta),
        ("density", rho),
    ];
    for (name, values) in arrays {
        writeln!(w, "SCALARS {name} double 1\nLOOKUP_TABLE default").map_err(io(path))?;
        for row in values.chunks(d.nx) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(" ")).map_err(io(path))?;
        }
    }
    w.flush().map_err(io(path))
}

/// One pressure level as CSV: `i,j,x,y,p,temperature,vapor,cloud,rain`.
pub fn write_level_csv(path: &Path, state: &MoistState<f64>, grid: &Grid<f64>, k: usize) -> Result<()> {
    if k >= grid.np() {
        return Err(Error::InvalidState(format!("level {k} outside the grid")));
    }
    let mut w = create(path)?;
    writeln!(w, "i,j,x,y,p,temperature,vapor,cloud,rain").map_err(io(path))?;
    let p = grid.p_centers()[k];
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let v = state.fields.each_ref().map(|f| f.get(i, j, k));
            writeln!(
                w,
                "{i},{j},{:e},{:e},{p:e},{:e},{:e},{:e},{:e}",
                grid.x_center(i),
                grid.y_center(j),
                v[0],
                v[1],
                v[2],
                v[3]
            )
            .map_err(io(path))?;
        }
    }
    w.flush().map_err(io(path))
}

/// Which snapshot files a run writes at each output time.
#[derive(Debug, Clone)]
pub struct SnapshotPlan {
    pub directory: PathBuf,
    pub vtk: bool,
    pub csv_levels: Vec<usize>,
}

/// Runs the diagnostics monitor and writes snapshots at every output time.
pub struct RunObserver {
    pub monitor: Monitor<f64>,
    pub plan: SnapshotPlan,
    pub outputs: usize,
    pub files: Vec<PathBuf>,
}

impl Observer<f64> for RunObserver {
    fn on_output(&mut self, state: &MoistState<f64>, model: &Model<f64>) -> Result<()> {
        self.monitor.on_output(state, model)?;
        let n = self.outputs;
        self.outputs += 1;
        if self.plan.vtk {
            let path = self.plan.directory.join(format!("snapshot_{n:04}.vtk"));
            write_vtk(&path, state, &model.grid, &model.params)?;
            self.files.push(path);
        }
        for &k in &self.plan.csv_levels {
            let path = self.plan.directory.join(format!("level{k:03}_{n:04}.csv"));
            write_level_csv(&path, state, &model.grid, k)?;
            self.files.push(path);
        }
        log::debug!("output {n} at t={:.6}", state.t);
        Ok(())
    }

    fn on_step(&mut self, state: &MoistState<f64>, model: &Model<f64>, dt: f64) -> Result<()> {
        self.monitor.on_step(state, model, dt)
    }
}

pub fn write_final_checkpoint(dir: &Path, state: &MoistState<f64>, model: &Model<f64>) -> Result<PathBuf> {
    let path = dir.join("final.chk");
    let vel = model.velocity.at(state.t);
    save_checkpoint(&path, state, &vel)?;
    Ok(path)
}
