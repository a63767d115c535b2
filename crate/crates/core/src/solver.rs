//! Time integration of the truncated moist system.
//!
//! The right-hand side of every prognostic equation is assembled from the
//! operators of [`crate::operators`] and the phase changes of
//! [`crate::microphysics`]. Explicit Euler with [`Model::stable_dt`] is a convex
//! combination of old values, neighbours, boundary data and saturation targets,
//! which is what keeps the discrete solution inside its physical bounds.

use std::sync::Arc;

use rayon::prelude::*;

use crate::boundary::BoundarySpec;
use crate::error::{Error, Result};
use crate::field::Tendency;
use crate::grid::Grid;
use crate::microphysics::{phase_change_unchecked, sink_rates};
use crate::operators::{
    advect_with, apply_boundary_ghosts, horizontal_laplacian, robin_ghost, sedimentation, temperature_extras,
    weighted_vertical_diffusion, AdvectionScheme,
};
use crate::params::PhysParams;
use crate::real::Real;
use crate::state::{Field, MoistState};
use crate::thermo::moist_coeffs;
use crate::velocity::{VelocityField, VelocityProvider};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    ExplicitEuler,
    /// Two-stage strong-stability-preserving Runge-Kutta (Heun).
    Rk2,
    /// Backward-Euler half steps of the vertical diffusion around an explicit
    /// Euler step of everything else.
    Strang,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::ExplicitEuler => "euler",
            Scheme::Rk2 => "rk2",
            Scheme::Strang => "strang",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "euler" => Some(Scheme::ExplicitEuler),
            "rk2" => Some(Scheme::Rk2),
            "strang" => Some(Scheme::Strang),
            _ => None,
        }
    }
}

/// Step size control. The four safety factors weight the advective, diffusive,
/// sedimentation and source rates in the combined limit of [`Model::stable_dt`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepControl<S> {
    pub cfl_adv: S,
    pub cfl_diff: S,
    pub cfl_sed: S,
    pub cfl_src: S,
    pub dt_max: S,
    /// Steps below this size abort the run.
    pub dt_min: S,
    pub t_end: S,
    pub scheme: Scheme,
    pub advection: AdvectionScheme,
    /// Zero out negative values after every step and count the cells touched.
    pub clamp_negative: bool,
}

impl<S: Real> Default for StepControl<S> {
    fn default() -> Self {
        StepControl {
            cfl_adv: S::lit(0.9),
            cfl_diff: S::lit(0.9),
            cfl_sed: S::lit(0.9),
            cfl_src: S::lit(0.9),
            dt_max: S::lit(1.0e-2),
            dt_min: S::lit(1.0e-12),
            t_end: S::one(),
            scheme: Scheme::ExplicitEuler,
            advection: AdvectionScheme::Upwind,
            clamp_negative: false,
        }
    }
}

impl<S: Real> StepControl<S> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("cfl_adv", self.cfl_adv),
            ("cfl_diff", self.cfl_diff),
            ("cfl_sed", self.cfl_sed),
            ("cfl_src", self.cfl_src),
        ] {
            if !(v > S::zero() && v <= S::one()) {
                return Err(Error::param(name, format!("safety factor must lie in (0, 1], got {v}")));
            }
        }
        if !(self.dt_max > S::zero() && self.dt_max.is_finite()) {
            return Err(Error::param("dt_max", "must be positive and finite"));
        }
        if !(self.dt_min >= S::zero() && self.dt_min < self.dt_max) {
            return Err(Error::param("dt_min", "must be nonnegative and below dt_max"));
        }
        if !(self.t_end >= S::zero() && self.t_end.is_finite()) {
            return Err(Error::param("t_end", "must be nonnegative and finite"));
        }
        Ok(())
    }
}

/// Switches for the physical processes; all on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Processes {
    pub advection: bool,
    pub diffusion: bool,
    pub sources: bool,
    pub sedimentation: bool,
    /// Adiabatic compression and rain heat transport in the temperature equation.
    pub temperature_extras: bool,
}

impl Default for Processes {
    fn default() -> Self {
        Processes {
            advection: true,
            diffusion: true,
            sources: true,
            sedimentation: true,
            temperature_extras: true,
        }
    }
}

impl Processes {
    /// Advection and diffusion only.
    pub fn transport_only() -> Self {
        Processes {
            sources: false,
            sedimentation: false,
            temperature_extras: false,
            ..Self::default()
        }
    }
}

/// Extra source `(x, y, p, t) -> [T, q_v, q_c, q_r]` added to the right-hand side.
pub type Forcing<S> = Arc<dyn Fn(S, S, S, S) -> [S; 4] + Send + Sync>;

/// Everything that defines the continuous problem apart from the initial state.
#[derive(Clone)]
pub struct Model<S> {
    pub grid: Grid<S>,
    pub params: PhysParams<S>,
    pub boundary: BoundarySpec<S>,
    pub velocity: VelocityProvider<S>,
    pub processes: Processes,
    pub forcing: Option<Forcing<S>>,
}

impl<S: Real> std::fmt::Debug for Model<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("grid", &self.grid)
            .field("params", &self.params)
            .field("processes", &self.processes)
            .field("forced", &self.forcing.is_some())
            .finish_non_exhaustive()
    }
}

/// Result of one time step.
#[derive(Debug, Clone)]
pub struct StepOutcome<S> {
    pub state: MoistState<S>,
    /// Cells set to zero by the clamp, when enabled.
    pub clamped: usize,
}

impl<S: Real> Model<S> {
    pub fn new(grid: Grid<S>, params: PhysParams<S>, boundary: BoundarySpec<S>, velocity: VelocityProvider<S>) -> Self {
        Model {
            grid,
            params,
            boundary,
            velocity,
            processes: Processes::default(),
            forcing: None,
        }
    }

    /// Parameter, boundary and velocity consistency checks for a run up to `t_end`.
    pub fn validate(&self, t_end: S) -> Result<()> {
        self.params.validate()?;
        self.boundary.validate(&self.grid, t_end)?;
        if self.velocity.dims() != self.grid.dims() {
            return Err(Error::InvalidVelocity(format!(
                "velocity grid {:?} does not match model grid {:?}",
                self.velocity.dims(),
                self.grid.dims()
            )));
        }
        Ok(())
    }

    fn fill_ghosts(&self, state: &mut MoistState<S>, t: S) {
        for f in Field::ALL {
            apply_boundary_ghosts(state.field_mut(f), self.boundary.field(f), &self.grid, t);
        }
    }

    /// Tendencies of `[T, q_v, q_c, q_r]` at `state` and time `t`.
    pub fn rhs(&self, state: &MoistState<S>, t: S) -> Result<[Tendency<S>; 4]> {
        let mut s = state.clone();
        self.fill_ghosts(&mut s, t);
        let vel = self.velocity.at(t);
        self.rhs_filled(&s, &vel, t, true, AdvectionScheme::Upwind)
    }

    fn rhs_filled(
        &self,
        state: &MoistState<S>,
        vel: &VelocityField<S>,
        t: S,
        vertical_diffusion: bool,
        advection: AdvectionScheme,
    ) -> Result<[Tendency<S>; 4]> {
        let grid = &self.grid;
        let params = &self.params;
        let d = grid.dims();
        let pr = self.processes;
        let mut out: [Tendency<S>; 4] = std::array::from_fn(|_| Tendency::zeros(d));

        for f in Field::ALL {
            let field = state.field(f);
            let acc = &mut out[f.index()];
            if pr.advection {
                acc.add(&advect_with(field, vel, grid, advection));
            }
            if pr.diffusion {
                let k = params.diffusivity(f);
                acc.add(&horizontal_laplacian(field, grid, k.mu));
                if vertical_diffusion {
                    acc.add(&weighted_vertical_diffusion(field, grid, k.nu));
                }
            }
        }
        if pr.temperature_extras {
            out[0].add(&temperature_extras(state, vel, grid, params));
        }
        if pr.sedimentation {
            out[3].add(&sedimentation(state.qr(), grid, params.v_rain)?);
        }
        if pr.sources || self.forcing.is_some() {
            let extra = self.pointwise_sources(state, t, pr.sources);
            for (n, src) in extra.into_iter().enumerate() {
                for m in 0..4 {
                    out[m].0[n] += src[m];
                }
            }
        }
        Ok(out)
    }

    fn pointwise_sources(&self, state: &MoistState<S>, t: S, sources: bool) -> Vec<[S; 4]> {
        let grid = &self.grid;
        let d = grid.dims();
        let mut out = vec![[S::zero(); 4]; d.cells()];
        out.par_chunks_mut(d.nx * d.ny).enumerate().for_each(|(k, chunk)| {
            let p = grid.p_centers()[k];
            for j in 0..d.ny {
                for i in 0..d.nx {
                    let mut v = [S::zero(); 4];
                    if sources {
                        let pc = phase_change_unchecked(
                            p,
                            state.temp().get(i, j, k),
                            state.qv().get(i, j, k),
                            state.qc().get(i, j, k),
                            state.qr().get(i, j, k),
                            &self.params,
                        );
                        v = [pc.d_temp, pc.d_qv, pc.d_qc, pc.d_qr];
                    }
                    if let Some(force) = &self.forcing {
                        let fv = force(grid.x_center(i), grid.y_center(j), p, t);
                        for m in 0..4 {
                            v[m] += fv[m];
                        }
                    }
                    chunk[j * d.nx + i] = v;
                }
            }
        });
        out
    }

    /// Largest step for which an explicit Euler update of every field is a convex
    /// combination: per cell and field the outflow, diffusion, sedimentation and
    /// source sink rates are divided by their safety factors and summed, and
    /// `dt = 1 / max(sum)`, capped at `dt_max`.
    ///
    /// Side-wall and bottom faces count twice in the diffusive rate, which bounds
    /// the Robin relaxation coefficient for any `alpha`. Under [`Scheme::Strang`]
    /// the implicit vertical diffusion is left out.
    pub fn stable_dt(&self, state: &MoistState<S>, vel: &VelocityField<S>, ctrl: &StepControl<S>) -> Result<S> {
        let grid = &self.grid;
        let params = &self.params;
        let pr = self.processes;
        let d = grid.dims();
        let (dx, dy, dp) = (grid.dx(), grid.dy(), grid.dp());
        let two = S::lit(2.0);
        let vertical = ctrl.scheme != Scheme::Strang;
        let diff = params.diffusion;

        let plane_max: Vec<S> = (0..d.np)
            .into_par_iter()
            .map(|k| {
                let p = grid.p_centers()[k];
                let wb = if k == 0 { two } else { S::one() };
                let wt = if k + 1 == d.np { S::zero() } else { S::one() };
                let vert_coef = (wb * grid.w2_face(k) + wt * grid.w2_face(k + 1)) / (dp * dp);
                let mut worst = S::zero();
                for j in 0..d.ny {
                    let fy = if j == 0 || j + 1 == d.ny { S::lit(3.0) } else { two };
                    let fy = if d.ny == 1 { S::lit(4.0) } else { fy };
                    for i in 0..d.nx {
                        let fx = if i == 0 || i + 1 == d.nx { S::lit(3.0) } else { two };
                        let fx = if d.nx == 1 { S::lit(4.0) } else { fx };
                        let n = d.lin(i, j, k);
                        let adv = if pr.advection {
                            (vel.u_face[vel.ux_idx(i + 1, j, k)].pos() + (-vel.u_face[vel.ux_idx(i, j, k)]).pos()) / dx
                                + (vel.v_face[vel.vy_idx(i, j + 1, k)].pos() + (-vel.v_face[vel.vy_idx(i, j, k)]).pos())
                                    / dy
                                + (vel.omega_face[vel.wp_idx(i, j, k)].pos()
                                    + (-vel.omega_face[vel.wp_idx(i, j, k + 1)]).pos())
                                    / dp
                        } else {
                            S::zero()
                        };
                        let (t, qv, qc, qr) = (
                            state.temp().get(i, j, k),
                            state.qv().get(i, j, k),
                            state.qc().get(i, j, k),
                            state.qr().get(i, j, k),
                        );
                        let sinks = if pr.sources || pr.temperature_extras {
                            let mut s = if pr.sources {
                                sink_rates(p, t, qv, qc, qr, vel.omega[n], params)
                            } else {
                                [S::zero(); 4]
                            };
                            if !pr.sources {
                                let c = moist_coeffs(qv, qc, qr, t, params);
                                s[0] = c.kappa_tilde * (-vel.omega[n]).pos() / p;
                            } else if !pr.temperature_extras {
                                let c = moist_coeffs(qv, qc, qr, t, params);
                                s[0] = s[0] - c.kappa_tilde * (-vel.omega[n]).pos() / p;
                            }
                            s
                        } else {
                            [S::zero(); 4]
                        };
                        for f in 0..4 {
                            let mut rate = adv / ctrl.cfl_adv;
                            if pr.diffusion {
                                let mut dr = diff[f].mu * (fx / (dx * dx) + fy / (dy * dy));
                                if vertical {
                                    dr += diff[f].nu * vert_coef;
                                }
                                rate += dr / ctrl.cfl_diff;
                            }
                            let sed = match f {
                                0 if pr.temperature_extras => {
                                    let c = moist_coeffs(qv, qc, qr, t, params);
                                    params.c_l * qr.pos() * c.inv_c * params.v_rain / dp
                                }
                                3 if pr.sedimentation => params.v_rain * grid.rho_coef(k) / dp,
                                _ => S::zero(),
                            };
                            rate += sed / ctrl.cfl_sed + sinks[f].max(S::zero()) / ctrl.cfl_src;
                            if !(rate <= worst) {
                                worst = if rate.is_nan() { S::infinity() } else { rate.max(worst) };
                            }
                        }
                    }
                }
                worst
            })
            .collect();
        let worst = plane_max.into_iter().fold(S::zero(), |a, b| a.max(b));
        let dt = if worst > S::zero() { (S::one() / worst).min(ctrl.dt_max) } else { ctrl.dt_max };
        if !(dt >= ctrl.dt_min) {
            return Err(Error::TimeStepUnderflow {
                dt: dt.as_f64(),
                floor: ctrl.dt_min.as_f64(),
            });
        }
        Ok(dt)
    }

    /// Advances `state` by `dt` with the scheme of `ctrl`.
    pub fn step(&self, state: &MoistState<S>, dt: S, ctrl: &StepControl<S>) -> Result<StepOutcome<S>> {
        let t0 = state.t;
        let mut next = match ctrl.scheme {
            Scheme::ExplicitEuler => self.euler(state, dt, true, ctrl.advection)?,
            Scheme::Rk2 => {
                let s1 = self.euler(state, dt, true, ctrl.advection)?;
                let mut s2 = self.euler(&s1, dt, true, ctrl.advection)?;
                let half = S::lit(0.5);
                for f in Field::ALL {
                    s2.field_mut(f).combine(half, half, state.field(f));
                }
                s2.t = t0 + dt;
                s2
            }
            Scheme::Strang => {
                let half = dt * S::lit(0.5);
                let mut s = state.clone();
                if self.processes.diffusion {
                    self.implicit_vertical(&mut s, half, t0 + half);
                }
                let mut s = self.euler(&s, dt, false, ctrl.advection)?;
                if self.processes.diffusion {
                    self.implicit_vertical(&mut s, half, t0 + dt);
                }
                s
            }
        };
        next.t = t0 + dt;
        self.check_finite(&next)?;
        let mut clamped = 0;
        if ctrl.clamp_negative {
            for f in Field::ALL {
                for v in next.field_mut(f).raw_mut() {
                    if *v < S::zero() {
                        *v = S::zero();
                        clamped += 1;
                    }
                }
            }
        }
        Ok(StepOutcome { state: next, clamped })
    }

    fn euler(&self, state: &MoistState<S>, dt: S, vertical: bool, adv: AdvectionScheme) -> Result<MoistState<S>> {
        let mut s = state.clone();
        self.fill_ghosts(&mut s, state.t);
        let vel = self.velocity.at(state.t);
        let rates = self.rhs_filled(&s, &vel, state.t, vertical, adv)?;
        for f in Field::ALL {
            s.field_mut(f).add_scaled(dt, &rates[f.index()]);
        }
        s.t = state.t + dt;
        Ok(s)
    }

    /// Backward Euler for `nu d_p(w^2 d_p f)` over `tau`, one tridiagonal solve
    /// per column, with the bottom Robin condition taken at time `t`.
    fn implicit_vertical(&self, state: &mut MoistState<S>, tau: S, t: S) {
        let grid = &self.grid;
        let d = grid.dims();
        let np = d.np;
        let dp = grid.dp();
        for f in Field::ALL {
            let nu = self.params.diffusivity(f).nu;
            let c = tau * nu / (dp * dp);
            let bc = self.boundary.field(f);
            let field = state.field_mut(f);
            let cols: Vec<Vec<S>> = (0..d.nx * d.ny)
                .into_par_iter()
                .map(|col| {
                    let (i, j) = (col % d.nx, col / d.nx);
                    let alpha = (bc.alpha_bottom)(grid.x_center(i), grid.y_center(j), t);
                    let data = (bc.data_bottom)(grid.x_center(i), grid.y_center(j), t);
                    // ghost = a f_0 + b data
                    let a = robin_ghost(S::one(), alpha, S::zero(), dp);
                    let b = robin_ghost(S::zero(), alpha, S::one(), dp);
                    let mut lower = vec![S::zero(); np];
                    let mut diag = vec![S::zero(); np];
                    let mut upper = vec![S::zero(); np];
                    let mut rhs: Vec<S> = (0..np).map(|k| field.get(i, j, k)).collect();
                    for k in 0..np {
                        let wb = c * grid.w2_face(k);
                        let wt = if k + 1 < np { c * grid.w2_face(k + 1) } else { S::zero() };
                        diag[k] = S::one() + wb + wt;
                        if k > 0 {
                            lower[k] = -wb;
                        } else {
                            diag[k] -= wb * a;
                            rhs[k] += wb * b * data;
                        }
                        if k + 1 < np {
                            upper[k] = -wt;
                        }
                    }
                    thomas(&lower, &mut diag, &upper, &mut rhs);
                    rhs
                })
                .collect();
            for (col, values) in cols.into_iter().enumerate() {
                let (i, j) = (col % d.nx, col / d.nx);
                for (k, v) in values.into_iter().enumerate() {
                    field.set(i, j, k, v);
                }
            }
        }
    }

    fn check_finite(&self, state: &MoistState<S>) -> Result<()> {
        for f in Field::ALL {
            if let Some((i, j, k)) = state.field(f).first_non_finite() {
                let dump = Field::ALL
                    .iter()
                    .map(|g| format!("{}={}", g.name(), state.field(*g).get(i, j, k)))
                    .collect::<Vec<_>>()
                    .join(", ");
                return Err(Error::NonFinite {
                    field: f.name(),
                    i,
                    j,
                    k,
                    t: state.t.as_f64(),
                    dump: format!("{dump}, p={}", self.grid.p_centers()[k]),
                });
            }
        }
        Ok(())
    }
}

/// In-place Thomas algorithm; the solution is left in `rhs`.
fn thomas<S: Real>(lower: &[S], diag: &mut [S], upper: &[S], rhs: &mut [S]) {
    let n = diag.len();
    for k in 1..n {
        let m = lower[k] / diag[k - 1];
        diag[k] -= m * upper[k - 1];
        rhs[k] -= m * rhs[k - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for k in (0..n - 1).rev() {
        rhs[k] = (rhs[k] - upper[k] * rhs[k + 1]) / diag[k];
    }
}

/// Receives the state at output times and before every step.
pub trait Observer<S: Real> {
    /// Called at `t = 0`, at every multiple of the output interval and at `t_end`.
    fn on_output(&mut self, state: &MoistState<S>, model: &Model<S>) -> Result<()>;

    /// Called with the state at the start of a step of size `dt`.
    fn on_step(&mut self, _state: &MoistState<S>, _model: &Model<S>, _dt: S) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct NoObserver;

impl<S: Real> Observer<S> for NoObserver {
    fn on_output(&mut self, _: &MoistState<S>, _: &Model<S>) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunResult<S> {
    pub final_state: MoistState<S>,
    pub steps: usize,
    pub outputs: usize,
    pub min_dt: S,
    pub max_dt: S,
    pub clamped_cells: usize,
}

/// Integrates `initial` up to `ctrl.t_end`, visiting outputs every
/// `output_interval` of simulated time (`<= 0` means start and end only).
pub fn run<S: Real>(
    model: &Model<S>,
    initial: MoistState<S>,
    ctrl: &StepControl<S>,
    output_interval: S,
    observer: &mut dyn Observer<S>,
) -> Result<RunResult<S>> {
    ctrl.validate()?;
    model.validate(ctrl.t_end)?;
    if initial.dims() != model.grid.dims() {
        return Err(Error::InvalidState("initial state does not match the grid".into()));
    }
    initial.check_admissible()?;

    let t_start = initial.t;
    let t_end = ctrl.t_end;
    let mut state = initial;
    let mut result = RunResult {
        final_state: state.clone(),
        steps: 0,
        outputs: 0,
        min_dt: S::infinity(),
        max_dt: S::zero(),
        clamped_cells: 0,
    };
    observer.on_output(&state, model)?;
    result.outputs += 1;

    let mut n_out = 1usize;
    let next_output = |n: usize| {
        if output_interval > S::zero() {
            (t_start + output_interval * S::from_usize_lossy(n)).min(t_end)
        } else {
            t_end
        }
    };
    let mut target = next_output(n_out);
    while state.t < t_end {
        let vel = model.velocity.at(state.t);
        let dt_stable = model.stable_dt(&state, &vel, ctrl)?;
        drop(vel);
        let remaining = target - state.t;
        // absorb rounding in the accumulated time into the final step before an output
        let (dt, hit) = if dt_stable * (S::one() + S::lit(1e-9)) >= remaining {
            (remaining, true)
        } else {
            (dt_stable, false)
        };
        observer.on_step(&state, model, dt)?;
        let out = model.step(&state, dt, ctrl)?;
        state = out.state;
        if hit {
            state.t = target;
        }
        result.steps += 1;
        result.clamped_cells += out.clamped;
        result.min_dt = result.min_dt.min(dt);
        result.max_dt = result.max_dt.max(dt);
        if hit {
            observer.on_output(&state, model)?;
            result.outputs += 1;
            n_out += 1;
            target = next_output(n_out);
        }
    }
    result.final_state = state;
    Ok(result)
}
