//! Manufactured solutions for convergence studies.
//!
//! Each prognostic field is prescribed as
//! `f = mean + amplitude e^(-decay t) cos(kx x) cos(ky y) cos(kp (p - p_top))`.
//! The forcing is the residual of the continuous truncated system at that
//! target, evaluated pointwise, and the bottom Robin data are chosen so that the
//! target satisfies the boundary condition exactly.

use std::sync::Arc;

use crate::boundary::{BoundarySpec, FieldBoundary};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridConfig};
use crate::microphysics::phase_change_unchecked;
use crate::params::PhysParams;
use crate::real::Real;
use crate::solver::{Model, Processes, Scheme, StepControl};
use crate::state::{Field, MoistState};
use crate::thermo::moist_coeffs;
use crate::velocity::{AnalyticFlowSpec, VelocityProvider};

/// Vertical factor of a [`Manufactured`] target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// `mean + amplitude e^(-decay t) cos cos cos(kp (p - p_top))`.
    Cosine,
    /// `(mean + amplitude e^(-decay t) cos cos) (1 - cos(kp (p - p_top)))`: vanishes
    /// with zero slope at the top, as rain must when nothing falls in from above.
    Rising,
}

/// Closed-form target of one field. Wave numbers are in radians per unit length
/// (per pascal for `kp`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Manufactured<S> {
    pub mean: S,
    pub amplitude: S,
    pub decay: S,
    pub kx: S,
    pub ky: S,
    pub kp: S,
    pub profile: Profile,
}

/// Value and derivatives `[f, f_t, f_x, f_y, f_p, f_xx + f_yy, f_pp]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<S> {
    pub f: S,
    pub t: S,
    pub x: S,
    pub y: S,
    pub p: S,
    pub lap_h: S,
    pub pp: S,
}

impl<S: Real> Manufactured<S> {
    pub fn constant(v: S) -> Self {
        Manufactured {
            mean: v,
            amplitude: S::zero(),
            decay: S::zero(),
            kx: S::zero(),
            ky: S::zero(),
            kp: S::zero(),
            profile: Profile::Cosine,
        }
    }

    pub fn jet(&self, x: S, y: S, p: S, t: S, p_top: S) -> Jet<S> {
        let e = self.amplitude * (-self.decay * t).exp();
        let (sx, cx) = (self.kx * x).sin_cos();
        let (sy, cy) = (self.ky * y).sin_cos();
        let (sp, cp) = (self.kp * (p - p_top)).sin_cos();
        let kp = self.kp;
        // vertical factor of the wave and of the mean, with two derivatives
        let (v, dv, ddv, m, dm, ddm) = match self.profile {
            Profile::Cosine => (cp, -kp * sp, -kp * kp * cp, S::one(), S::zero(), S::zero()),
            Profile::Rising => {
                let v = S::one() - cp;
                (v, kp * sp, kp * kp * cp, v, kp * sp, kp * kp * cp)
            }
        };
        let h = e * cx * cy;
        let g = h * v;
        Jet {
            f: self.mean * m + g,
            t: -self.decay * g,
            x: -e * self.kx * sx * cy * v,
            y: -e * self.ky * cx * sy * v,
            p: self.mean * dm + h * dv,
            lap_h: -(self.kx * self.kx + self.ky * self.ky) * g,
            pp: self.mean * ddm + h * ddv,
        }
    }
}

/// A manufactured problem and the settings of its refinement study.
#[derive(Debug, Clone)]
pub struct MmsCase<S> {
    pub name: String,
    pub targets: [Manufactured<S>; 4],
    pub params: PhysParams<S>,
    pub flow: Option<AnalyticFlowSpec<S>>,
    pub processes: Processes,
    /// Robin coefficient on the bottom face; side walls are zero-flux.
    pub alpha_bottom: S,
    /// Domain and background; the cell counts are set per level.
    pub domain: GridConfig<S>,
    pub t_end: S,
    /// Step size on the finest level; coarser levels scale it by `(n_fine / n)^dt_power`.
    pub dt_fine: S,
    pub dt_power: i32,
    pub scheme: Scheme,
}

fn domain<S: Real>() -> GridConfig<S> {
    let mut c = GridConfig::cube(1);
    c.background = crate::grid::BackgroundProfile::Linear {
        bottom: S::lit(290.0),
        top: S::lit(220.0),
    };
    c
}

fn targets<S: Real>(kp: S) -> [Manufactured<S>; 4] {
    let pi = S::PI();
    let mk = |mean: f64, amp: f64, decay: f64, profile| Manufactured {
        mean: S::lit(mean),
        amplitude: S::lit(amp),
        decay: S::lit(decay),
        kx: pi,
        ky: pi,
        kp,
        profile,
    };
    [
        mk(280.0, 10.0, 1.0, Profile::Cosine),
        mk(8.0e-3, 2.0e-3, 0.5, Profile::Cosine),
        mk(1.0e-3, 5.0e-4, 2.0, Profile::Cosine),
        mk(1.0e-3, 5.0e-4, 1.0, Profile::Rising),
    ]
}

impl<S: Real> MmsCase<S> {
    /// No flow and no fall speed; horizontal and weighted vertical diffusion of
    /// comparable strength, microphysics on. Expected order 2.
    pub fn diffusion() -> Self {
        let mut params = PhysParams::default();
        params.v_rain = S::zero();
        for d in &mut params.diffusion {
            d.mu = S::lit(1.0e-2);
            d.nu = S::lit(1.0e6);
        }
        let dom = domain::<S>();
        let kp = S::lit(1.5) * S::PI() / (dom.p_bottom - dom.p_top);
        let mut processes = Processes::default();
        processes.advection = false;
        MmsCase {
            name: "diffusion".into(),
            targets: targets(kp),
            params,
            flow: None,
            processes,
            alpha_bottom: S::lit(1.0e-4),
            domain: dom,
            t_end: S::lit(0.1),
            dt_fine: S::lit(2.5e-3),
            dt_power: 2,
            scheme: Scheme::ExplicitEuler,
        }
    }

    /// Unit-amplitude analytic flow and rain fall with weak diffusion. Expected
    /// order 1.
    pub fn advection() -> Self {
        let mut params = PhysParams::default();
        params.v_rain = S::lit(5.0e4);
        for d in &mut params.diffusion {
            d.mu = S::lit(1.0e-4);
            d.nu = S::lit(1.0e3);
        }
        let dom = domain::<S>();
        let kp = S::lit(1.5) * S::PI() / (dom.p_bottom - dom.p_top);
        MmsCase {
            name: "advection".into(),
            targets: targets(kp),
            params,
            flow: Some(AnalyticFlowSpec::new(S::one())),
            processes: Processes::default(),
            alpha_bottom: S::lit(1.0e-4),
            domain: dom,
            t_end: S::lit(0.2),
            dt_fine: S::lit(2.5e-3),
            dt_power: 1,
            scheme: Scheme::ExplicitEuler,
        }
    }

    /// Constant targets with consistent boundary data: the discrete solution
    /// should stay exact up to rounding.
    pub fn constant() -> Self {
        let mut case = Self::advection();
        case.name = "constant".into();
        case.targets = [
            Manufactured::constant(S::lit(280.0)),
            Manufactured::constant(S::lit(8.0e-3)),
            Manufactured::constant(S::lit(1.0e-3)),
            Manufactured::constant(S::lit(1.0e-3)),
        ];
        case.params.v_rain = S::zero();
        case.t_end = S::lit(0.05);
        case
    }

    pub fn grid(&self, n: usize) -> Result<Grid<S>> {
        let mut c = self.domain.clone();
        c.nx = n;
        c.ny = n;
        c.np = n;
        Grid::new(&c, &self.params)
    }

    pub fn exact(&self, field: Field, x: S, y: S, p: S, t: S) -> S {
        self.targets[field.index()].jet(x, y, p, t, self.domain.p_top).f
    }

    pub fn exact_state(&self, grid: &Grid<S>, t: S) -> MoistState<S> {
        let mut s = MoistState::from_fns(
            grid,
            |x, y, p| self.exact(Field::Temperature, x, y, p, t),
            |x, y, p| self.exact(Field::Vapor, x, y, p, t),
            |x, y, p| self.exact(Field::Cloud, x, y, p, t),
            |x, y, p| self.exact(Field::Rain, x, y, p, t),
        );
        s.t = t;
        s
    }

    /// Bottom data `f + f_p / alpha` so that `d_p f = alpha (data - f)` holds
    /// for the target; zero-flux side walls.
    pub fn boundary(&self) -> BoundarySpec<S> {
        let (p_top, p_bottom) = (self.domain.p_top, self.domain.p_bottom);
        let alpha = self.alpha_bottom;
        BoundarySpec {
            fields: std::array::from_fn(|n| {
                let target = self.targets[n];
                let data = move |x: S, y: S, t: S| {
                    let j = target.jet(x, y, p_bottom, t, p_top);
                    if alpha > S::zero() {
                        j.f + j.p / alpha
                    } else {
                        j.f
                    }
                };
                FieldBoundary {
                    alpha_bottom: Arc::new(move |_, _, _| alpha),
                    data_bottom: Arc::new(data),
                    alpha_lateral: Arc::new(|_, _| S::zero()),
                    data_lateral: Arc::new(move |_, _| target.mean),
                }
            }),
        }
    }

    /// Residual of the truncated system at the target.
    pub fn forcing(&self, grid: &Grid<S>) -> crate::solver::Forcing<S> {
        let targets = self.targets;
        let params = self.params.clone();
        let flow = self.flow.clone();
        let pr = self.processes;
        let (p_top, p_bottom) = (grid.p_top(), grid.p_bottom());
        let (lx, ly) = (grid.lx(), grid.ly());
        let background = grid.background().clone();
        let (r_d, g) = (grid.r_d(), grid.gravity());
        Arc::new(move |x: S, y: S, p: S, t: S| {
            let jets: [Jet<S>; 4] = std::array::from_fn(|n| targets[n].jet(x, y, p, t, p_top));
            let (u, v, omega) = match &flow {
                Some(spec) if pr.advection || pr.temperature_extras => {
                    let a = spec.amplitude_at(t);
                    let kx = S::from_usize_lossy(spec.mode_x) * S::PI() / lx;
                    let ky = S::from_usize_lossy(spec.mode_y) * S::PI() / ly;
                    let (s, ds) = spec.shape.eval(p, p_top, p_bottom);
                    let (sx, cx) = (kx * x).sin_cos();
                    let (sy, cy) = (ky * y).sin_cos();
                    (a * sx * cy * ds, a * cx * sy * ds, -a * (kx + ky) * cx * cy * s)
                }
                _ => (S::zero(), S::zero(), S::zero()),
            };
            let tb = background.eval(p, p_top, p_bottom);
            let dtb = background.derivative(p, p_top, p_bottom);
            let w = g * p / (r_d * tb);
            let dw = g / (r_d * tb) - g * p * dtb / (r_d * tb * tb);
            let rho = p / (r_d * tb);
            let drho = S::one() / (r_d * tb) - p * dtb / (r_d * tb * tb);

            let mut out = [S::zero(); 4];
            for f in Field::ALL {
                let n = f.index();
                let j = jets[n];
                let mut r = j.t;
                if pr.advection {
                    r += u * j.x + v * j.y + omega * j.p;
                }
                if pr.diffusion {
                    let d = params.diffusivity(f);
                    r -= d.mu * j.lap_h + d.nu * (w * w * j.pp + S::lit(2.0) * w * dw * j.p);
                }
                out[n] = r;
            }
            let (temp, qv, qc, qr) = (jets[0].f, jets[1].f, jets[2].f, jets[3].f);
            if pr.temperature_extras {
                let c = moist_coeffs(qv, qc, qr, temp, &params);
                out[0] -= c.kappa_tilde * temp * omega / p;
                out[0] += params.c_l * qr.pos() * c.inv_c * params.v_rain * jets[0].p;
            }
            if pr.sedimentation {
                out[3] += params.v_rain * (drho * qr + rho * jets[3].p);
            }
            if pr.sources {
                let pc = phase_change_unchecked(p, temp, qv, qc, qr, &params);
                out[0] -= pc.d_temp;
                out[1] -= pc.d_qv;
                out[2] -= pc.d_qc;
                out[3] -= pc.d_qr;
            }
            out
        })
    }

    pub fn model(&self, grid: &Grid<S>) -> Result<Model<S>> {
        let velocity = match &self.flow {
            Some(spec) => VelocityProvider::analytic(spec.clone(), grid)?,
            None => VelocityProvider::Steady(crate::velocity::VelocityField::zeros(grid.dims())),
        };
        let mut m = Model::new(grid.clone(), self.params.clone(), self.boundary(), velocity);
        m.processes = self.processes;
        m.forcing = Some(self.forcing(grid));
        Ok(m)
    }
}

/// Errors on one refinement level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelError<S> {
    pub n: usize,
    pub h: S,
    pub dt: S,
    pub steps: usize,
    /// Root-mean-square error per field at `t_end`.
    pub errors: [S; 4],
    /// Sum of the field errors, each divided by its target amplitude (or mean when constant).
    pub combined: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservedOrders<S> {
    pub case: String,
    pub levels: Vec<LevelError<S>>,
    /// Least-squares slope of `log error` against `log h`, per field.
    pub orders: [S; 4],
    pub combined_order: S,
    /// False when some error failed to decrease under refinement.
    pub monotone: bool,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_slope<S: Real>(x: &[S], y: &[S]) -> S {
    let n = S::from_usize_lossy(x.len());
    let lx: Vec<S> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<S> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().copied().sum::<S>() / n;
    let my = ly.iter().copied().sum::<S>() / n;
    let sxy: S = lx.iter().zip(&ly).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let sxx: S = lx.iter().map(|&a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Runs the case on `n^3` grids for every `n` in `levels` and fits the observed order.
pub fn mms_convergence<S: Real>(case: &MmsCase<S>, levels: &[usize]) -> Result<ObservedOrders<S>> {
    if levels.len() < 3 {
        return Err(Error::param("levels", "a convergence study needs at least three grids"));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("levels", "grid sizes must increase"));
    }
    let n_fine = *levels.last().unwrap();
    let scale: [S; 4] = std::array::from_fn(|n| {
        let t = case.targets[n];
        if t.amplitude != S::zero() {
            t.amplitude.abs()
        } else {
            t.mean.abs().max(S::epsilon())
        }
    });
    let mut out = Vec::new();
    for &n in levels {
        let grid = case.grid(n)?;
        let model = case.model(&grid)?;
        model.validate(case.t_end)?;
        let ratio = S::from_usize_lossy(n_fine) / S::from_usize_lossy(n);
        let dt_nominal = case.dt_fine * ratio.powi(case.dt_power);
        let ctrl = StepControl {
            scheme: case.scheme,
            t_end: case.t_end,
            dt_max: dt_nominal,
            ..StepControl::default()
        };
        let mut state = case.exact_state(&grid, S::zero());
        let mut steps = 0;
        let mut dt_used = S::zero();
        while state.t < case.t_end {
            let vel = model.velocity.at(state.t);
            let stable = model.stable_dt(&state, &vel, &ctrl)?;
            drop(vel);
            let mut dt = stable.min(dt_nominal);
            let remaining = case.t_end - state.t;
            let last = dt >= remaining;
            if last {
                dt = remaining;
            }
            dt_used = dt_used.max(dt);
            state = model.step(&state, dt, &ctrl)?.state;
            if last {
                state.t = case.t_end;
            }
            steps += 1;
        }
        let exact = case.exact_state(&grid, case.t_end);
        let cells = S::from_usize_lossy(grid.dims().cells());
        let errors: [S; 4] = std::array::from_fn(|m| {
            let sq: S = state.fields[m]
                .interior()
                .zip(exact.fields[m].interior())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (sq / cells).sqrt()
        });
        let combined = (0..4).map(|m| errors[m] / scale[m]).sum();
        out.push(LevelError {
            n,
            h: grid.relative_spacing(),
            dt: dt_used,
            steps,
            errors,
            combined,
        });
    }
    let hs: Vec<S> = out.iter().map(|l| l.h).collect();
    let orders = std::array::from_fn(|m| {
        let e: Vec<S> = out.iter().map(|l| l.errors[m]).collect();
        log_slope(&hs, &e)
    });
    let comb: Vec<S> = out.iter().map(|l| l.combined).collect();
    let monotone = out
        .windows(2)
        .all(|w| (0..4).all(|m| w[1].errors[m] < w[0].errors[m]) && w[1].combined < w[0].combined);
    Ok(ObservedOrders {
        case: case.name.clone(),
        combined_order: log_slope(&hs, &comb),
        levels: out,
        orders,
        monotone,
    })
}
