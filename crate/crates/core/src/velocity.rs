//! Prescribed velocity fields and checks of incompressibility and no-penetration.
//!
//! A [`VelocityField`] carries cell-centre samples (used for diagnostics, the
//! adiabatic temperature term and file I/O) and face-averaged normal components
//! (used by the flux-form advection). For the analytic family the face values are
//! exact face averages, so the discrete divergence vanishes to rounding.

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Dims, Grid};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField<S> {
    dims: Dims,
    pub t: S,
    /// Cell-centre components, interior x-fastest order.
    pub u: Vec<S>,
    pub v: Vec<S>,
    pub omega: Vec<S>,
    /// Normal velocity on x-faces, `(nx + 1) * ny * np`.
    pub u_face: Vec<S>,
    /// Normal velocity on y-faces, `nx * (ny + 1) * np`.
    pub v_face: Vec<S>,
    /// Pressure velocity on horizontal faces, `nx * ny * (np + 1)`; face `0` is the bottom.
    pub omega_face: Vec<S>,
}

impl<S: Real> VelocityField<S> {
    pub fn zeros(dims: Dims) -> Self {
        let Dims { nx, ny, np } = dims;
        let z = |n| vec![S::zero(); n];
        VelocityField {
            dims,
            t: S::zero(),
            u: z(dims.cells()),
            v: z(dims.cells()),
            omega: z(dims.cells()),
            u_face: z((nx + 1) * ny * np),
            v_face: z(nx * (ny + 1) * np),
            omega_face: z(nx * ny * (np + 1)),
        }
    }

    /// Builds a field from centre samples. Interior face values are averages of the
    /// two adjacent centres; boundary faces carry zero normal flow.
    pub fn from_centers(dims: Dims, t: S, u: Vec<S>, v: Vec<S>, omega: Vec<S>) -> Result<Self> {
        let n = dims.cells();
        if u.len() != n || v.len() != n || omega.len() != n {
            return Err(Error::InvalidVelocity(format!(
                "expected {n} samples per component, got {}/{}/{}",
                u.len(),
                v.len(),
                omega.len()
            )));
        }
        let mut out = Self::zeros(dims);
        let Dims { nx, ny, np } = dims;
        let half = S::lit(0.5);
        for k in 0..np {
            for j in 0..ny {
                for i in 1..nx {
                    let f = out.ux_idx(i, j, k);
                    out.u_face[f] = half * (u[dims.lin(i - 1, j, k)] + u[dims.lin(i, j, k)]);
                }
            }
            for j in 1..ny {
                for i in 0..nx {
                    let f = out.vy_idx(i, j, k);
                    out.v_face[f] = half * (v[dims.lin(i, j - 1, k)] + v[dims.lin(i, j, k)]);
                }
            }
        }
        for kf in 1..np {
            for j in 0..ny {
                for i in 0..nx {
                    let f = out.wp_idx(i, j, kf);
                    out.omega_face[f] = half * (omega[dims.lin(i, j, kf - 1)] + omega[dims.lin(i, j, kf)]);
                }
            }
        }
        out.t = t;
        out.u = u;
        out.v = v;
        out.omega = omega;
        Ok(out)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn ux_idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims.ny + j) * (self.dims.nx + 1) + i
    }
    #[inline]
    pub fn vy_idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * (self.dims.ny + 1) + j) * self.dims.nx + i
    }
    #[inline]
    pub fn wp_idx(&self, i: usize, j: usize, kf: usize) -> usize {
        (kf * self.dims.ny + j) * self.dims.nx + i
    }

    /// Every component multiplied by `factor`.
    pub fn scaled(&self, factor: S) -> Self {
        let s = |v: &Vec<S>| v.iter().map(|&x| x * factor).collect();
        VelocityField {
            dims: self.dims,
            t: self.t,
            u: s(&self.u),
            v: s(&self.v),
            omega: s(&self.omega),
            u_face: s(&self.u_face),
            v_face: s(&self.v_face),
            omega_face: s(&self.omega_face),
        }
    }

    /// `(1 - theta) a + theta b`, componentwise.
    pub fn lerp(a: &Self, b: &Self, theta: S) -> Self {
        let one = S::one();
        let m = |x: &Vec<S>, y: &Vec<S>| x.iter().zip(y).map(|(&p, &q)| (one - theta) * p + theta * q).collect();
        VelocityField {
            dims: a.dims,
            t: (one - theta) * a.t + theta * b.t,
            u: m(&a.u, &b.u),
            v: m(&a.v, &b.v),
            omega: m(&a.omega, &b.omega),
            u_face: m(&a.u_face, &b.u_face),
            v_face: m(&a.v_face, &b.v_face),
            omega_face: m(&a.omega_face, &b.omega_face),
        }
    }

    /// Discrete divergence of the face velocities in cell `(i, j, k)`.
    pub fn face_divergence(&self, grid: &Grid<S>, i: usize, j: usize, k: usize) -> S {
        (self.u_face[self.ux_idx(i + 1, j, k)] - self.u_face[self.ux_idx(i, j, k)]) / grid.dx()
            + (self.v_face[self.vy_idx(i, j + 1, k)] - self.v_face[self.vy_idx(i, j, k)]) / grid.dy()
            + (self.omega_face[self.wp_idx(i, j, k)] - self.omega_face[self.wp_idx(i, j, k + 1)]) / grid.dp()
    }
}

/// Vertical structure `s(p)` of the analytic family; it must vanish at both pressure
/// boundaries so that `omega` satisfies no-penetration.
#[derive(Clone)]
pub enum VerticalShape<S> {
    /// `s(p) = (dP / (m pi)) sin(m pi (p - p_top) / dP)`, `dP = p_bottom - p_top`.
    Sine { mode: usize },
    /// User supplied `s` and `s'`.
    Custom {
        s: Arc<dyn Fn(S) -> S + Send + Sync>,
        ds: Arc<dyn Fn(S) -> S + Send + Sync>,
    },
}

impl<S> fmt::Debug for VerticalShape<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerticalShape::Sine { mode } => write!(f, "Sine {{ mode: {mode} }}"),
            VerticalShape::Custom { .. } => f.write_str("Custom { .. }"),
        }
    }
}

impl<S: Real> VerticalShape<S> {
    pub fn eval(&self, p: S, p_top: S, p_bottom: S) -> (S, S) {
        match self {
            VerticalShape::Sine { mode } => {
                let depth = p_bottom - p_top;
                let k = S::from_usize_lossy(*mode) * S::PI() / depth;
                let arg = k * (p - p_top);
                (arg.sin() / k, arg.cos())
            }
            VerticalShape::Custom { s, ds } => (s(p), ds(p)),
        }
    }
}

/// Separable divergence-free family
///
/// ```text
/// u     =  A sin(kx x) cos(ky y) s'(p)
/// v     =  A cos(kx x) sin(ky y) s'(p)
/// omega = -A (kx + ky) cos(kx x) cos(ky y) s(p)
/// ```
///
/// with `kx = mx pi / Lx`, `ky = my pi / Ly` and optional amplitude modulation
/// `A (1 + eps sin(2 pi t / period))`.
#[derive(Debug, Clone)]
pub struct AnalyticFlowSpec<S> {
    pub amplitude: S,
    pub mode_x: usize,
    pub mode_y: usize,
    pub shape: VerticalShape<S>,
    /// `(eps, period)`.
    pub modulation: Option<(S, S)>,
}

impl<S: Real> AnalyticFlowSpec<S> {
    pub fn new(amplitude: S) -> Self {
        AnalyticFlowSpec {
            amplitude,
            mode_x: 1,
            mode_y: 1,
            shape: VerticalShape::Sine { mode: 1 },
            modulation: None,
        }
    }

    pub fn amplitude_at(&self, t: S) -> S {
        match self.modulation {
            Some((eps, period)) => self.amplitude * (S::one() + eps * (S::TAU() * t / period).sin()),
            None => self.amplitude,
        }
    }

    fn validate(&self, grid: &Grid<S>) -> Result<()> {
        if self.mode_x == 0 || self.mode_y == 0 {
            return Err(Error::InvalidVelocity("horizontal mode counts must be at least 1".into()));
        }
        if let VerticalShape::Sine { mode: 0 } = self.shape {
            return Err(Error::InvalidVelocity("vertical mode count must be at least 1".into()));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidVelocity("amplitude must be finite".into()));
        }
        if let Some((eps, period)) = self.modulation {
            if !(eps.is_finite() && period.is_finite() && period > S::zero()) {
                return Err(Error::InvalidVelocity("modulation needs finite eps and positive period".into()));
            }
        }
        let (p1, p0) = (grid.p_top(), grid.p_bottom());
        let (s_top, _) = self.shape.eval(p1, p1, p0);
        let (s_bot, _) = self.shape.eval(p0, p1, p0);
        // scale of s from its interior samples
        let scale = (0..=16)
            .map(|m| self.shape.eval(p1 + (p0 - p1) * S::from_usize_lossy(m) / S::lit(16.0), p1, p0).0.abs())
            .fold(p0 - p1, |a: S, b| a.max(b));
        let tol = S::lit(1e3) * S::epsilon() * scale;
        if s_top.abs() > tol || s_bot.abs() > tol {
            return Err(Error::InvalidVelocity(format!(
                "vertical shape must vanish at both pressure boundaries, s(p_top)={s_top}, s(p_bottom)={s_bot}"
            )));
        }
        Ok(())
    }
}

/// Samples the analytic family at time `t`: centre values pointwise, face values as
/// exact face averages.
pub fn analytic_velocity<S: Real>(spec: &AnalyticFlowSpec<S>, grid: &Grid<S>, t: S) -> Result<VelocityField<S>> {
    spec.validate(grid)?;
    let dims = grid.dims();
    let Dims { nx, ny, np } = dims;
    let a = spec.amplitude_at(t);
    let kx = S::from_usize_lossy(spec.mode_x) * S::PI() / grid.lx();
    let ky = S::from_usize_lossy(spec.mode_y) * S::PI() / grid.ly();
    let (p1, p0) = (grid.p_top(), grid.p_bottom());
    let shape = |p: S| spec.shape.eval(p, p1, p0);

    // separable factors
    let sx: Vec<S> = (0..nx).map(|i| (kx * grid.x_center(i)).sin()).collect();
    let cx: Vec<S> = (0..nx).map(|i| (kx * grid.x_center(i)).cos()).collect();
    let sy: Vec<S> = (0..ny).map(|j| (ky * grid.y_center(j)).sin()).collect();
    let cy: Vec<S> = (0..ny).map(|j| (ky * grid.y_center(j)).cos()).collect();
    let sp: Vec<(S, S)> = (0..np).map(|k| shape(grid.p_centers()[k])).collect();
    let sx_face: Vec<S> = (0..=nx)
        .map(|i| if i == 0 || i == nx { S::zero() } else { (kx * grid.x_face(i)).sin() })
        .collect();
    let sy_face: Vec<S> = (0..=ny)
        .map(|j| if j == 0 || j == ny { S::zero() } else { (ky * grid.y_face(j)).sin() })
        .collect();
    // cell means of cos(kx x), cos(ky y) and s'(p)
    let cx_mean: Vec<S> = (0..nx)
        .map(|i| ((kx * grid.x_face(i + 1)).sin() - (kx * grid.x_face(i)).sin()) / (kx * grid.dx()))
        .collect();
    let cy_mean: Vec<S> = (0..ny)
        .map(|j| ((ky * grid.y_face(j + 1)).sin() - (ky * grid.y_face(j)).sin()) / (ky * grid.dy()))
        .collect();
    let s_face: Vec<S> = (0..=np)
        .map(|kf| if kf == 0 || kf == np { S::zero() } else { shape(grid.p_face(kf)).0 })
        .collect();
    // face kf = k sits at higher pressure than face k + 1
    let ds_mean: Vec<S> = (0..np).map(|k| (s_face[k] - s_face[k + 1]) / grid.dp()).collect();

    let mut vel = VelocityField::zeros(dims);
    vel.t = t;
    let kk = kx + ky;
    for k in 0..np {
        let (s, ds) = sp[k];
        for j in 0..ny {
            for i in 0..nx {
                let n = dims.lin(i, j, k);
                vel.u[n] = a * sx[i] * cy[j] * ds;
                vel.v[n] = a * cx[i] * sy[j] * ds;
                vel.omega[n] = -a * kk * cx[i] * cy[j] * s;
            }
            for i in 0..=nx {
                let f = vel.ux_idx(i, j, k);
                vel.u_face[f] = a * sx_face[i] * cy_mean[j] * ds_mean[k];
            }
        }
        for j in 0..=ny {
            for i in 0..nx {
                let f = vel.vy_idx(i, j, k);
                vel.v_face[f] = a * cx_mean[i] * sy_face[j] * ds_mean[k];
            }
        }
    }
    for kf in 0..=np {
        for j in 0..ny {
            for i in 0..nx {
                let f = vel.wp_idx(i, j, kf);
                vel.omega_face[f] = -a * kk * cx_mean[i] * cy_mean[j] * s_face[kf];
            }
        }
    }
    Ok(vel)
}

/// Relative tolerances for [`validate_velocity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationTolerance<S> {
    pub divergence: S,
    pub normal: S,
}

impl<S: Real> ValidationTolerance<S> {
    /// `10 h^2` for both checks, `h` the largest relative grid spacing.
    pub fn for_grid(grid: &Grid<S>) -> Self {
        let h = grid.relative_spacing();
        let tol = S::lit(10.0) * h * h;
        ValidationTolerance {
            divergence: tol,
            normal: tol,
        }
    }
}

/// Outcome of [`validate_velocity`]. Residuals are relative: the divergence to
/// `max|u|/Lx + max|v|/Ly + max|omega|/(p0-p1)`, each boundary normal component to
/// the maximum magnitude of that component.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport<S> {
    pub t: S,
    pub max_divergence: S,
    pub max_normal: S,
    pub tolerance: ValidationTolerance<S>,
    pub divergence_ok: bool,
    pub normal_ok: bool,
}

impl<S: Real> ValidationReport<S> {
    pub fn passed(&self) -> bool {
        self.divergence_ok && self.normal_ok
    }
}

impl<S: Real> fmt::Display for ValidationReport<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t={}: divergence {:.3e} (tol {:.3e}) {}, normal flow {:.3e} (tol {:.3e}) {}",
            self.t,
            self.max_divergence,
            self.tolerance.divergence,
            if self.divergence_ok { "ok" } else { "FAIL" },
            self.max_normal,
            self.tolerance.normal,
            if self.normal_ok { "ok" } else { "FAIL" },
        )
    }
}

fn max_abs<S: Real>(v: &[S]) -> S {
    v.iter().fold(S::zero(), |m, x| m.max(x.abs()))
}

/// Centred-difference divergence on cells with two interior neighbours in every
/// direction, and second-order extrapolation of the normal component to each
/// boundary face.
pub fn validate_velocity<S: Real>(
    vel: &VelocityField<S>,
    grid: &Grid<S>,
    tol: ValidationTolerance<S>,
) -> ValidationReport<S> {
    let d = grid.dims();
    let (umax, vmax, wmax) = (max_abs(&vel.u), max_abs(&vel.v), max_abs(&vel.omega));
    let scale = umax / grid.lx() + vmax / grid.ly() + wmax / (grid.p_bottom() - grid.p_top());
    let two = S::lit(2.0);
    let at = |c: &[S], i: usize, j: usize, k: usize| c[d.lin(i, j, k)];

    let mut div_max = S::zero();
    if scale > S::zero() {
        for k in 1..d.np - 1 {
            for j in 1..d.ny - 1 {
                for i in 1..d.nx - 1 {
                    let du = (at(&vel.u, i + 1, j, k) - at(&vel.u, i - 1, j, k)) / (two * grid.dx());
                    let dv = (at(&vel.v, i, j + 1, k) - at(&vel.v, i, j - 1, k)) / (two * grid.dy());
                    let dw = (at(&vel.omega, i, j, k - 1) - at(&vel.omega, i, j, k + 1)) / (two * grid.dp());
                    div_max = div_max.max((du + dv + dw).abs());
                }
            }
        }
        div_max = div_max / scale;
    }

    let extrap = |a: S, b: S| S::lit(1.5) * a - S::lit(0.5) * b;
    let mut normal = S::zero();
    if umax > S::zero() {
        let mut m = S::zero();
        for k in 0..d.np {
            for j in 0..d.ny {
                m = m.max(extrap(at(&vel.u, 0, j, k), at(&vel.u, 1, j, k)).abs());
                m = m.max(extrap(at(&vel.u, d.nx - 1, j, k), at(&vel.u, d.nx - 2, j, k)).abs());
            }
        }
        normal = normal.max(m / umax);
    }
    if vmax > S::zero() {
        let mut m = S::zero();
        for k in 0..d.np {
            for i in 0..d.nx {
                m = m.max(extrap(at(&vel.v, i, 0, k), at(&vel.v, i, 1, k)).abs());
                m = m.max(extrap(at(&vel.v, i, d.ny - 1, k), at(&vel.v, i, d.ny - 2, k)).abs());
            }
        }
        normal = normal.max(m / vmax);
    }
    if wmax > S::zero() {
        let mut m = S::zero();
        for j in 0..d.ny {
            for i in 0..d.nx {
                m = m.max(extrap(at(&vel.omega, i, j, 0), at(&vel.omega, i, j, 1)).abs());
                m = m.max(extrap(at(&vel.omega, i, j, d.np - 1), at(&vel.omega, i, j, d.np - 2)).abs());
            }
        }
        normal = normal.max(m / wmax);
    }

    ValidationReport {
        t: vel.t,
        max_divergence: div_max,
        max_normal: normal,
        tolerance: tol,
        divergence_ok: div_max <= tol.divergence,
        normal_ok: normal <= tol.normal,
    }
}

/// Source of the velocity at arbitrary times.
#[derive(Debug, Clone)]
pub enum VelocityProvider<S> {
    Steady(VelocityField<S>),
    /// Analytic family; `base` is sampled at the unmodulated amplitude.
    Analytic { spec: AnalyticFlowSpec<S>, base: VelocityField<S> },
    /// Frames linearly interpolated in time, held constant outside their range.
    Series { frames: Vec<VelocityField<S>> },
}

impl<S: Real> VelocityProvider<S> {
    pub fn analytic(spec: AnalyticFlowSpec<S>, grid: &Grid<S>) -> Result<Self> {
        let mut steady = spec.clone();
        steady.modulation = None;
        let base = analytic_velocity(&steady, grid, S::zero())?;
        Ok(VelocityProvider::Analytic { spec, base })
    }

    pub fn series(frames: Vec<VelocityField<S>>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidVelocity("velocity series has no frames".into()));
        }
        if frames.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::InvalidVelocity("frame times must be strictly increasing".into()));
        }
        Ok(VelocityProvider::Series { frames })
    }

    pub fn dims(&self) -> Dims {
        match self {
            VelocityProvider::Steady(v) => v.dims(),
            VelocityProvider::Analytic { base, .. } => base.dims(),
            VelocityProvider::Series { frames } => frames[0].dims(),
        }
    }

    pub fn at(&self, t: S) -> Cow<'_, VelocityField<S>> {
        match self {
            VelocityProvider::Steady(v) => Cow::Borrowed(v),
            VelocityProvider::Analytic { spec, base } => {
                if spec.modulation.is_none() {
                    return Cow::Borrowed(base);
                }
                let factor = spec.amplitude_at(t) / spec.amplitude;
                let mut v = if spec.amplitude == S::zero() { base.clone() } else { base.scaled(factor) };
                v.t = t;
                Cow::Owned(v)
            }
            VelocityProvider::Series { frames } => {
                if frames.len() == 1 || t <= frames[0].t {
                    return Cow::Borrowed(&frames[0]);
                }
                let last = frames.len() - 1;
                if t >= frames[last].t {
                    return Cow::Borrowed(&frames[last]);
                }
                let n = frames.partition_point(|f| f.t <= t);
                let (a, b) = (&frames[n - 1], &frames[n]);
                let theta = (t - a.t) / (b.t - a.t);
                let mut v = VelocityField::lerp(a, b, theta);
                v.t = t;
                Cow::Owned(v)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridConfig;
    use crate::params::PhysParams;

    fn grid(n: usize) -> Grid<f64> {
        let mut c = GridConfig::cube(n);
        c.lx = 2.0;
        c.ly = 1.5;
        Grid::new(&c, &PhysParams::default()).unwrap()
    }

    #[test]
    fn zero_amplitude_gives_zero_field() {
        let g = grid(6);
        let v = analytic_velocity(&AnalyticFlowSpec::new(0.0), &g, 0.0).unwrap();
        assert!(v.u.iter().chain(&v.omega).chain(&v.u_face).all(|&x| x == 0.0));
        let r = validate_velocity(&v, &g, ValidationTolerance::for_grid(&g));
        assert!(r.passed());
        assert_eq!(r.max_divergence, 0.0);
        assert_eq!(r.max_normal, 0.0);
    }

    #[test]
    fn face_divergence_vanishes_to_rounding() {
        let g = grid(10);
        let mut spec = AnalyticFlowSpec::new(1.3);
        spec.mode_x = 2;
        spec.shape = VerticalShape::Sine { mode: 2 };
        let v = analytic_velocity(&spec, &g, 0.0).unwrap();
        let scale = 1.3 * 3.0 * std::f64::consts::PI;
        for k in 0..10 {
            for j in 0..10 {
                for i in 0..10 {
                    assert!(v.face_divergence(&g, i, j, k).abs() < 1e-13 * scale);
                }
            }
        }
    }

    #[test]
    fn continuous_divergence_vanishes() {
        // derivatives of the closed form by central differences with tiny steps
        let g = grid(4);
        let spec = AnalyticFlowSpec::new(0.7);
        let (lx, ly, p1, p0) = (g.lx(), g.ly(), g.p_top(), g.p_bottom());
        let kx = std::f64::consts::PI / lx;
        let ky = std::f64::consts::PI / ly;
        let field = |x: f64, y: f64, p: f64| {
            let (s, ds) = spec.shape.eval(p, p1, p0);
            (
                0.7 * (kx * x).sin() * (ky * y).cos() * ds,
                0.7 * (kx * x).cos() * (ky * y).sin() * ds,
                -0.7 * (kx + ky) * (kx * x).cos() * (ky * y).cos() * s,
            )
        };
        for &(x, y, p) in &[(0.3, 0.2, 4.0e4), (1.1, 1.4, 8.8e4), (1.9, 0.7, 2.5e4)] {
            let (hx, hp) = (1e-5, 1e-1);
            let du = (field(x + hx, y, p).0 - field(x - hx, y, p).0) / (2.0 * hx);
            let dv = (field(x, y + hx, p).1 - field(x, y - hx, p).1) / (2.0 * hx);
            let dw = (field(x, y, p + hp).2 - field(x, y, p - hp).2) / (2.0 * hp);
            assert!((du + dv + dw).abs() < 1e-7, "{}", du + dv + dw);
        }
    }

    #[test]
    fn uniform_wind_fails_no_penetration() {
        let g = grid(6);
        let n = g.dims().cells();
        let v = VelocityField::from_centers(g.dims(), 0.0, vec![2.0; n], vec![0.0; n], vec![0.0; n]).unwrap();
        let r = validate_velocity(&v, &g, ValidationTolerance::for_grid(&g));
        assert!(r.divergence_ok);
        assert!(!r.normal_ok);
        assert!(!r.passed());
    }

    #[test]
    fn custom_shape_must_vanish() {
        let g = grid(4);
        let mut spec = AnalyticFlowSpec::new(1.0);
        spec.shape = VerticalShape::Custom {
            s: Arc::new(|p: f64| p - 2.0e4),
            ds: Arc::new(|_| 1.0),
        };
        assert!(analytic_velocity(&spec, &g, 0.0).is_err());
        spec.shape = VerticalShape::Custom {
            s: Arc::new(|p: f64| (p - 2.0e4) * (1.0e5 - p) / 8.0e4),
            ds: Arc::new(|p: f64| (1.2e5 - 2.0 * p) / 8.0e4),
        };
        let v = analytic_velocity(&spec, &g, 0.0).unwrap();
        assert!(v.face_divergence(&g, 1, 2, 3).abs() < 1e-12);
    }

    #[test]
    fn series_interpolates_linearly() {
        let g = grid(4);
        let a = analytic_velocity(&AnalyticFlowSpec::new(1.0), &g, 0.0).unwrap();
        let mut b = analytic_velocity(&AnalyticFlowSpec::new(3.0), &g, 0.0).unwrap();
        b.t = 1.0;
        let prov = VelocityProvider::series(vec![a.clone(), b.clone()]).unwrap();
        let mid = prov.at(0.5);
        for n in 0..a.u.len() {
            assert!((mid.u[n] - 0.5 * (a.u[n] + b.u[n])).abs() < 1e-15);
            assert!((mid.omega[n] - 0.5 * (a.omega[n] + b.omega[n])).abs() < 1e-9);
        }
        assert_eq!(*prov.at(-1.0), a);
        assert_eq!(*prov.at(5.0), b);
        let single = VelocityProvider::series(vec![a.clone()]).unwrap();
        assert_eq!(*single.at(0.0), a);
        assert_eq!(*single.at(123.0), a);
        assert!(VelocityProvider::series(vec![b, a]).is_err());
    }

    #[test]
    fn modulated_provider_scales_amplitude() {
        let g = grid(4);
        let mut spec = AnalyticFlowSpec::new(2.0);
        spec.modulation = Some((0.5, 4.0));
        let prov = VelocityProvider::analytic(spec.clone(), &g).unwrap();
        let direct = analytic_velocity(&spec, &g, 1.0).unwrap();
        let via = prov.at(1.0);
        for n in 0..direct.u.len() {
            assert!((via.u[n] - direct.u[n]).abs() < 1e-14);
        }
        for n in 0..direct.omega_face.len() {
            assert!((via.omega_face[n] - direct.omega_face[n]).abs() < 1e-9);
        }
    }
}
