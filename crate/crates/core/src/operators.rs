//! Discrete spatial operators and ghost-cell handling.
//!
//! Every operator reads a ghost-filled [`ScalarField`] and returns an interior
//! [`Tendency`]. Work is split over pressure levels with rayon; each output cell is
//! written by exactly one task, so results do not depend on the worker count.

use rayon::prelude::*;

use crate::boundary::FieldBoundary;
use crate::error::{Error, Result};
use crate::field::{ScalarField, Tendency};
use crate::grid::Grid;
use crate::params::PhysParams;
use crate::real::Real;
use crate::state::MoistState;
use crate::thermo::moist_coeffs;
use crate::velocity::VelocityField;

/// Face-centred Robin ghost value for `d_n f = alpha (data - f)`, `h` the spacing
/// normal to the face. Yields the mirror value when `alpha = 0`.
#[inline]
pub fn robin_ghost<S: Real>(inner: S, alpha: S, data: S, h: S) -> S {
    let ah = alpha * h;
    let half = S::lit(0.5);
    ((S::one() - half * ah) * inner + ah * data) / (S::one() + half * ah)
}

/// Fills the ghost layer of `f`: Robin on the bottom and side walls with data taken
/// at time `t`, homogeneous Neumann on the top face.
pub fn apply_boundary_ghosts<S: Real>(f: &mut ScalarField<S>, bc: &FieldBoundary<S>, grid: &Grid<S>, t: S) {
    let (nx, ny, np) = (grid.nx() as isize, grid.ny() as isize, grid.np() as isize);
    for j in 0..ny {
        let y = grid.y_center(j as usize);
        for i in 0..nx {
            let x = grid.x_center(i as usize);
            let alpha = (bc.alpha_bottom)(x, y, t);
            let data = (bc.data_bottom)(x, y, t);
            let g = robin_ghost(f.at(i, j, 0), alpha, data, grid.dp());
            f.set_at(i, j, -1, g);
            let top = f.at(i, j, np - 1);
            f.set_at(i, j, np, top);
        }
    }
    for k in 0..np {
        let p = grid.p_centers()[k as usize];
        let alpha = (bc.alpha_lateral)(p, t);
        let data = (bc.data_lateral)(p, t);
        for j in 0..ny {
            let g = robin_ghost(f.at(0, j, k), alpha, data, grid.dx());
            f.set_at(-1, j, k, g);
            let g = robin_ghost(f.at(nx - 1, j, k), alpha, data, grid.dx());
            f.set_at(nx, j, k, g);
        }
        for i in 0..nx {
            let g = robin_ghost(f.at(i, 0, k), alpha, data, grid.dy());
            f.set_at(i, -1, k, g);
            let g = robin_ghost(f.at(i, ny - 1, k), alpha, data, grid.dy());
            f.set_at(i, ny, k, g);
        }
    }
}

/// Evaluates `cell(i, j, k)` for every interior cell, one pressure level per task.
pub(crate) fn per_cell<S: Real>(grid: &Grid<S>, cell: impl Fn(usize, usize, usize) -> S + Sync) -> Tendency<S> {
    let d = grid.dims();
    let plane = d.nx * d.ny;
    let mut out = vec![S::zero(); d.cells()];
    out.par_chunks_mut(plane).enumerate().for_each(|(k, chunk)| {
        for j in 0..d.ny {
            for i in 0..d.nx {
                chunk[j * d.nx + i] = cell(i, j, k);
            }
        }
    });
    Tendency(out)
}

/// Advection flux limiter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdvectionScheme {
    /// First-order upwind; monotone under the CFL limit.
    #[default]
    Upwind,
    /// Minmod-limited linear reconstruction; second order in smooth regions, no
    /// maximum-principle guarantee.
    Minmod,
}

#[inline]
fn minmod<S: Real>(a: S, b: S) -> S {
    if a * b <= S::zero() {
        S::zero()
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Upwind face value: `up` is the upwind cell, `behind` its other neighbour and
/// `down` the cell across the face.
#[inline]
fn face_value<S: Real>(scheme: AdvectionScheme, behind: S, up: S, down: S) -> S {
    match scheme {
        AdvectionScheme::Upwind => up,
        AdvectionScheme::Minmod => up + S::lit(0.5) * minmod(up - behind, down - up),
    }
}

#[inline]
fn flux<S: Real>(scheme: AdvectionScheme, vel: S, a2: S, a1: S, b1: S, b2: S) -> S {
    // face between a1 (negative side) and b1 (positive side)
    if vel > S::zero() {
        vel * face_value(scheme, a2, a1, b1)
    } else if vel < S::zero() {
        vel * face_value(scheme, b2, b1, a1)
    } else {
        S::zero()
    }
}

/// `-div(v f)` in flux form with first-order upwind fluxes.
pub fn advect<S: Real>(f: &ScalarField<S>, vel: &VelocityField<S>, grid: &Grid<S>) -> Tendency<S> {
    advect_with(f, vel, grid, AdvectionScheme::Upwind)
}

pub fn advect_with<S: Real>(
    f: &ScalarField<S>,
    vel: &VelocityField<S>,
    grid: &Grid<S>,
    scheme: AdvectionScheme,
) -> Tendency<S> {
    let d = grid.dims();
    let (dx, dy, dp) = (grid.dx(), grid.dy(), grid.dp());
    if scheme == AdvectionScheme::Upwind {
        return upwind(f, vel, grid);
    }
    // clamp the far stencil point to the ghost layer; it only feeds the limiter
    let g = |i: isize, j: isize, k: isize| {
        f.at(
            i.clamp(-1, d.nx as isize),
            j.clamp(-1, d.ny as isize),
            k.clamp(-1, d.np as isize),
        )
    };
    per_cell(grid, |i, j, k| {
        let (ii, jj, kk) = (i as isize, j as isize, k as isize);
        // x faces i and i + 1
        let fx = |fi: usize| {
            let fi_s = fi as isize;
            flux(
                scheme,
                vel.u_face[vel.ux_idx(fi, j, k)],
                g(fi_s - 2, jj, kk),
                g(fi_s - 1, jj, kk),
                g(fi_s, jj, kk),
                g(fi_s + 1, jj, kk),
            )
        };
        let fy = |fj: usize| {
            let fj_s = fj as isize;
            flux(
                scheme,
                vel.v_face[vel.vy_idx(i, fj, k)],
                g(ii, fj_s - 2, kk),
                g(ii, fj_s - 1, kk),
                g(ii, fj_s, kk),
                g(ii, fj_s + 1, kk),
            )
        };
        // positive omega carries mass towards higher pressure, i.e. lower k
        let fp = |kf: usize| {
            let kf_s = kf as isize;
            flux(
                scheme,
                vel.omega_face[vel.wp_idx(i, j, kf)],
                g(ii, jj, kf_s + 1),
                g(ii, jj, kf_s),
                g(ii, jj, kf_s - 1),
                g(ii, jj, kf_s - 2),
            )
        };
        -((fx(i + 1) - fx(i)) / dx + (fy(j + 1) - fy(j)) / dy + (fp(k) - fp(k + 1)) / dp)
    })
}

fn upwind<S: Real>(f: &ScalarField<S>, vel: &VelocityField<S>, grid: &Grid<S>) -> Tendency<S> {
    let (dx, dy, dp) = (grid.dx(), grid.dy(), grid.dp());
    let (sy, sz) = f.strides();
    let raw = f.raw();
    let zero = S::zero();
    #[inline(always)]
    fn up<S: Real>(v: S, zero: S, minus: S, plus: S) -> S {
        if v > zero {
            v * minus
        } else {
            v * plus
        }
    }
    per_cell(grid, |i, j, k| {
        let c = f.idx(i as isize, j as isize, k as isize);
        let xi = vel.ux_idx(i, j, k);
        let yi = vel.vy_idx(i, j, k);
        let yi_next = vel.vy_idx(i, j + 1, k);
        let fx0 = up(vel.u_face[xi], zero, raw[c - 1], raw[c]);
        let fx1 = up(vel.u_face[xi + 1], zero, raw[c], raw[c + 1]);
        let fy0 = up(vel.v_face[yi], zero, raw[c - sy], raw[c]);
        let fy1 = up(vel.v_face[yi_next], zero, raw[c], raw[c + sy]);
        // omega > 0 carries mass towards lower k
        let fp0 = up(vel.omega_face[vel.wp_idx(i, j, k)], zero, raw[c], raw[c - sz]);
        let fp1 = up(vel.omega_face[vel.wp_idx(i, j, k + 1)], zero, raw[c + sz], raw[c]);
        -((fx1 - fx0) / dx + (fy1 - fy0) / dy + (fp0 - fp1) / dp)
    })
}

/// Five-point `mu (d_xx + d_yy) f` on each pressure level.
pub fn horizontal_laplacian<S: Real>(f: &ScalarField<S>, grid: &Grid<S>, mu: S) -> Tendency<S> {
    let cx = mu / (grid.dx() * grid.dx());
    let cy = mu / (grid.dy() * grid.dy());
    let two = S::lit(2.0);
    per_cell(grid, |i, j, k| {
        let (i, j, k) = (i as isize, j as isize, k as isize);
        let c = f.at(i, j, k);
        cx * (f.at(i + 1, j, k) - two * c + f.at(i - 1, j, k)) + cy * (f.at(i, j + 1, k) - two * c + f.at(i, j - 1, k))
    })
}

/// `nu d_p(w^2 d_p f)` in flux form with face weights `w^2`.
pub fn weighted_vertical_diffusion<S: Real>(f: &ScalarField<S>, grid: &Grid<S>, nu: S) -> Tendency<S> {
    let c = nu / (grid.dp() * grid.dp());
    per_cell(grid, |i, j, k| {
        let (ii, jj, kk) = (i as isize, j as isize, k as isize);
        let centre = f.at(ii, jj, kk);
        let below = grid.w2_face(k) * (f.at(ii, jj, kk - 1) - centre);
        let above = grid.w2_face(k + 1) * (f.at(ii, jj, kk + 1) - centre);
        c * (below + above)
    })
}

/// `-V d_p(p q_r / (R_d Tbar))`, upwinded towards higher pressure. No rain enters
/// through the top; rain leaves freely through the bottom.
pub fn sedimentation<S: Real>(qr: &ScalarField<S>, grid: &Grid<S>, v_rain: S) -> Result<Tendency<S>> {
    if !(v_rain >= S::zero()) {
        return Err(Error::param("v_rain", format!("fall speed must be nonnegative, got {v_rain}")));
    }
    let np = grid.np();
    let c = v_rain / grid.dp();
    Ok(per_cell(grid, |i, j, k| {
        let here = grid.rho_coef(k) * qr.get(i, j, k);
        let inflow = if k + 1 < np { grid.rho_coef(k + 1) * qr.get(i, j, k + 1) } else { S::zero() };
        -c * (here - inflow)
    }))
}

/// Adiabatic term `kappa~ (T / p) omega` plus the rain heat transport
/// `-(c_l q_r+ / C~) V d_p T`, the latter upwinded towards higher pressure.
///
/// Expects the temperature ghosts to be filled.
pub fn temperature_extras<S: Real>(
    state: &MoistState<S>,
    vel: &VelocityField<S>,
    grid: &Grid<S>,
    params: &PhysParams<S>,
) -> Tendency<S> {
    let d = grid.dims();
    let (temp, qv, qc, qr) = (state.temp(), state.qv(), state.qc(), state.qr());
    let c = params.v_rain / grid.dp();
    per_cell(grid, |i, j, k| {
        let p = grid.p_centers()[k];
        let t = temp.get(i, j, k);
        let r = qr.get(i, j, k);
        let co = moist_coeffs(qv.get(i, j, k), qc.get(i, j, k), r, t, params);
        let adiabatic = co.kappa_tilde * t * vel.omega[d.lin(i, j, k)] / p;
        let above = temp.at(i as isize, j as isize, k as isize + 1);
        let rain = params.c_l * r.pos() * co.inv_c * c * (t - above);
        adiabatic - rain
    })
}
