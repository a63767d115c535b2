//! Uniform cell-centred grid on the cylinder `(0,Lx) x (0,Ly) x (p_top, p_bottom)`.
//!
//! Vertical index `k = 0` is the bottom layer (highest pressure); pressure decreases
//! with `k`. Cell centres sit at `p_k = p_bottom - (k + 1/2) dp`.

use crate::error::{Error, Result};
use crate::params::PhysParams;
use crate::real::Real;

/// Background temperature profile used by the vertical diffusion weight and the
/// rain sedimentation flux.
#[derive(Debug, Clone, PartialEq)]
pub enum BackgroundProfile<S> {
    Constant(S),
    /// Linear in pressure between the bottom and top values, extended linearly outside.
    Linear { bottom: S, top: S },
    /// One value per pressure level (bottom first); piecewise linear in between and
    /// constant beyond the outermost centres.
    Levels(Vec<S>),
}

/// Parameters for [`Grid::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig<S> {
    pub nx: usize,
    pub ny: usize,
    pub np: usize,
    pub lx: S,
    pub ly: S,
    /// Upper boundary pressure `p1` [Pa].
    pub p_top: S,
    /// Lower boundary pressure `p0` [Pa].
    pub p_bottom: S,
    pub background: BackgroundProfile<S>,
}

impl<S: Real> GridConfig<S> {
    /// Unit square horizontally, `2e4..1e5` Pa vertically, constant 250 K background.
    pub fn cube(n: usize) -> Self {
        GridConfig {
            nx: n,
            ny: n,
            np: n,
            lx: S::one(),
            ly: S::one(),
            p_top: S::lit(2.0e4),
            p_bottom: S::lit(1.0e5),
            background: BackgroundProfile::Constant(S::lit(250.0)),
        }
    }
}

/// Number of interior cells in each direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub np: usize,
}

impl Dims {
    pub fn cells(&self) -> usize {
        self.nx * self.ny * self.np
    }

    /// Interior linear index, x fastest then y then p.
    #[inline]
    pub fn lin(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }
}

#[derive(Debug, Clone)]
pub struct Grid<S> {
    dims: Dims,
    lx: S,
    ly: S,
    p_top: S,
    p_bottom: S,
    dx: S,
    dy: S,
    dp: S,
    background: BackgroundProfile<S>,
    p_centers: Vec<S>,
    tbar: Vec<S>,
    /// Weight `g p / (R_d Tbar)` at centres including one ghost level on each side.
    w_ext: Vec<S>,
    /// `w^2` at the `np + 1` horizontal faces, geometric interpolation of `w`.
    w2_face: Vec<S>,
    /// `p / (R_d Tbar)` at centres.
    rho_coef: Vec<S>,
    r_d: S,
    g: S,
}

impl<S: Real> BackgroundProfile<S> {
    fn check(&self, np: usize) -> Result<()> {
        if let BackgroundProfile::Levels(v) = self {
            if v.len() != np {
                return Err(Error::InvalidGrid(format!(
                    "background profile has {} levels, grid has {np}",
                    v.len()
                )));
            }
        }
        Ok(())
    }

    /// Background temperature at pressure `p` on a grid with the given bounds.
    pub fn eval(&self, p: S, p_top: S, p_bottom: S) -> S {
        match self {
            BackgroundProfile::Constant(t) => *t,
            BackgroundProfile::Linear { bottom, top } => {
                let s = (p_bottom - p) / (p_bottom - p_top);
                *bottom + (*top - *bottom) * s
            }
            BackgroundProfile::Levels(v) => {
                let n = v.len();
                let dp = (p_bottom - p_top) / S::from_usize_lossy(n);
                // fractional level index of p, centres at k + 1/2
                let s = (p_bottom - p) / dp - S::lit(0.5);
                if s <= S::zero() {
                    return v[0];
                }
                let last = S::from_usize_lossy(n - 1);
                if s >= last {
                    return v[n - 1];
                }
                let k = s.floor().to_usize().unwrap_or(0).min(n - 2);
                let frac = s - S::from_usize_lossy(k);
                v[k] + (v[k + 1] - v[k]) * frac
            }
        }
    }

    /// d Tbar / dp.
    pub fn derivative(&self, p: S, p_top: S, p_bottom: S) -> S {
        match self {
            BackgroundProfile::Constant(_) => S::zero(),
            BackgroundProfile::Linear { bottom, top } => (*bottom - *top) / (p_bottom - p_top),
            BackgroundProfile::Levels(v) => {
                let n = v.len();
                let dp = (p_bottom - p_top) / S::from_usize_lossy(n);
                let s = (p_bottom - p) / dp - S::lit(0.5);
                if s <= S::zero() || s >= S::from_usize_lossy(n - 1) {
                    return S::zero();
                }
                let k = s.floor().to_usize().unwrap_or(0).min(n - 2);
                -(v[k + 1] - v[k]) / dp
            }
        }
    }
}

impl<S: Real> Grid<S> {
    pub fn new(config: &GridConfig<S>, params: &PhysParams<S>) -> Result<Self> {
        let GridConfig {
            nx,
            ny,
            np,
            lx,
            ly,
            p_top,
            p_bottom,
            ref background,
        } = *config;
        if nx < 2 || ny < 2 || np < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 cells per direction, got {nx}x{ny}x{np}"
            )));
        }
        if !(lx.is_finite() && lx > S::zero() && ly.is_finite() && ly > S::zero()) {
            return Err(Error::InvalidGrid(format!(
                "horizontal extents must be positive, got Lx={lx} Ly={ly}"
            )));
        }
        if !(p_top.is_finite() && p_bottom.is_finite() && p_top > S::zero() && p_bottom > p_top) {
            return Err(Error::InvalidGrid(format!(
                "need p_bottom > p_top > 0, got p_bottom={p_bottom} p_top={p_top}"
            )));
        }
        if !(params.r_d > S::zero() && params.g > S::zero()) {
            return Err(Error::InvalidGrid("R_d and g must be positive".into()));
        }
        background.check(np)?;

        let dx = lx / S::from_usize_lossy(nx);
        let dy = ly / S::from_usize_lossy(ny);
        let dp = (p_bottom - p_top) / S::from_usize_lossy(np);
        let half = S::lit(0.5);
        let p_at = |k: isize| p_bottom - (S::from_isize(k).unwrap() + half) * dp;

        let tbar_at = |p: S| background.eval(p, p_top, p_bottom);
        let mut probe: Vec<S> = (-1..=np as isize).map(p_at).collect();
        probe.extend((0..=np).map(|kf| p_bottom - S::from_usize_lossy(kf) * dp));
        for &p in &probe {
            let t = tbar_at(p);
            if !(t.is_finite() && t > S::zero()) {
                return Err(Error::InvalidGrid(format!(
                    "background temperature must be positive and bounded, got {t} at p={p}"
                )));
            }
        }

        let p_centers: Vec<S> = (0..np as isize).map(p_at).collect();
        let tbar: Vec<S> = p_centers.iter().map(|&p| tbar_at(p)).collect();
        let w_ext: Vec<S> = (-1..=np as isize)
            .map(|k| {
                let p = p_at(k);
                params.g * p / (params.r_d * tbar_at(p))
            })
            .collect();
        let w2_face: Vec<S> = (0..=np).map(|kf| w_ext[kf] * w_ext[kf + 1]).collect();
        let rho_coef = p_centers
            .iter()
            .zip(&tbar)
            .map(|(&p, &t)| p / (params.r_d * t))
            .collect();

        Ok(Grid {
            dims: Dims { nx, ny, np },
            lx,
            ly,
            p_top,
            p_bottom,
            dx,
            dy,
            dp,
            background: background.clone(),
            p_centers,
            tbar,
            w_ext,
            w2_face,
            rho_coef,
            r_d: params.r_d,
            g: params.g,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }
    pub fn nx(&self) -> usize {
        self.dims.nx
    }
    pub fn ny(&self) -> usize {
        self.dims.ny
    }
    pub fn np(&self) -> usize {
        self.dims.np
    }
    pub fn lx(&self) -> S {
        self.lx
    }
    pub fn ly(&self) -> S {
        self.ly
    }
    pub fn p_top(&self) -> S {
        self.p_top
    }
    pub fn p_bottom(&self) -> S {
        self.p_bottom
    }
    pub fn dx(&self) -> S {
        self.dx
    }
    pub fn dy(&self) -> S {
        self.dy
    }
    pub fn dp(&self) -> S {
        self.dp
    }
    pub fn cell_volume(&self) -> S {
        self.dx * self.dy * self.dp
    }
    pub fn volume(&self) -> S {
        self.lx * self.ly * (self.p_bottom - self.p_top)
    }
    pub fn background(&self) -> &BackgroundProfile<S> {
        &self.background
    }
    pub fn r_d(&self) -> S {
        self.r_d
    }
    pub fn gravity(&self) -> S {
        self.g
    }

    pub fn x_center(&self, i: usize) -> S {
        (S::from_usize_lossy(i) + S::lit(0.5)) * self.dx
    }
    pub fn y_center(&self, j: usize) -> S {
        (S::from_usize_lossy(j) + S::lit(0.5)) * self.dy
    }
    pub fn x_face(&self, i: usize) -> S {
        S::from_usize_lossy(i) * self.dx
    }
    pub fn y_face(&self, j: usize) -> S {
        S::from_usize_lossy(j) * self.dy
    }
    /// Pressure at the centre of level `k`; `-1` and `np` address the ghost levels.
    pub fn p_center(&self, k: isize) -> S {
        self.p_bottom - (S::from_isize(k).unwrap() + S::lit(0.5)) * self.dp
    }
    /// Pressure of horizontal face `kf` (`0` is the bottom boundary, `np` the top).
    pub fn p_face(&self, kf: usize) -> S {
        self.p_bottom - S::from_usize_lossy(kf) * self.dp
    }
    pub fn p_centers(&self) -> &[S] {
        &self.p_centers
    }
    pub fn tbar(&self) -> &[S] {
        &self.tbar
    }
    pub fn tbar_at(&self, p: S) -> S {
        self.background.eval(p, self.p_top, self.p_bottom)
    }
    /// Diffusion weight at interior level `k`.
    pub fn w(&self, k: usize) -> S {
        self.w_ext[k + 1]
    }
    /// Diffusion weight at level `k` including ghost levels `-1` and `np`.
    pub fn w_ext(&self, k: isize) -> S {
        self.w_ext[(k + 1) as usize]
    }
    /// Squared weight at horizontal face `kf`, between levels `kf - 1` and `kf`.
    pub fn w2_face(&self, kf: usize) -> S {
        self.w2_face[kf]
    }
    /// `p / (R_d Tbar)` at level `k`.
    pub fn rho_coef(&self, k: usize) -> S {
        self.rho_coef[k]
    }

    /// Analytic bounds `w_min <= w <= w_max` from the extremes of pressure and
    /// background temperature over the closed column.
    pub fn weight_bounds(&self) -> (S, S) {
        let (tmin, tmax) = match &self.background {
            BackgroundProfile::Constant(t) => (*t, *t),
            BackgroundProfile::Linear { .. } => {
                // extended linearly over the ghost half-cells
                let t_lo = self.tbar_at(self.p_bottom + self.dp * S::lit(0.5));
                let t_hi = self.tbar_at(self.p_top - self.dp * S::lit(0.5));
                (t_lo.min(t_hi), t_lo.max(t_hi))
            }
            BackgroundProfile::Levels(v) => v.iter().fold((S::infinity(), S::neg_infinity()), |(a, b), &t| {
                (a.min(t), b.max(t))
            }),
        };
        let half = self.dp * S::lit(0.5);
        let w_min = self.g * (self.p_top - half) / (self.r_d * tmax);
        let w_max = self.g * (self.p_bottom + half) / (self.r_d * tmin);
        (w_min, w_max)
    }

    /// Largest relative spacing `max(dx/Lx, dy/Ly, dp/(p0-p1))`.
    pub fn relative_spacing(&self) -> S {
        (self.dx / self.lx)
            .max(self.dy / self.ly)
            .max(self.dp / (self.p_bottom - self.p_top))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(np: usize, bg: BackgroundProfile<f64>) -> GridConfig<f64> {
        GridConfig {
            nx: 3,
            ny: 2,
            np,
            lx: 1.0,
            ly: 2.0,
            p_top: 2.0e4,
            p_bottom: 1.0e5,
            background: bg,
        }
    }

    #[test]
    fn pressure_centres_are_uniform() {
        let p = PhysParams::default();
        let g = Grid::new(&cfg(4, BackgroundProfile::Constant(250.0)), &p).unwrap();
        assert_eq!(g.dp(), 2.0e4);
        assert_eq!(g.p_centers(), &[9.0e4, 7.0e4, 5.0e4, 3.0e4]);
        assert_eq!(g.p_center(-1), 1.1e5);
        assert_eq!(g.p_face(0), 1.0e5);
        assert_eq!(g.p_face(4), 2.0e4);
    }

    #[test]
    fn weight_is_increasing_in_pressure_for_constant_background() {
        let p = PhysParams::default();
        let g = Grid::new(&cfg(8, BackgroundProfile::Constant(250.0)), &p).unwrap();
        for k in 0..8 {
            let expect = 9.81 * g.p_centers()[k] / (287.0 * 250.0);
            assert!((g.w(k) - expect).abs() < 1e-12 * expect);
        }
        // k increases upward, so pressure and weight decrease with k
        for k in 1..8 {
            assert!(g.w(k) < g.w(k - 1));
        }
    }

    #[test]
    fn weight_bounds_enclose_all_levels() {
        let p = PhysParams::default();
        for bg in [
            BackgroundProfile::Constant(250.0),
            BackgroundProfile::Linear { bottom: 290.0, top: 210.0 },
            BackgroundProfile::Levels(vec![288.0, 270.0, 255.0, 240.0, 230.0, 221.0]),
        ] {
            let g = Grid::new(&cfg(6, bg), &p).unwrap();
            let (lo, hi) = g.weight_bounds();
            assert!(lo > 0.0);
            let (lo, hi) = (lo * (1.0 - 1e-12), hi * (1.0 + 1e-12));
            for k in -1..=6isize {
                let w = g.w_ext(k);
                assert!(lo <= w && w <= hi, "{lo} {w} {hi}");
            }
            for kf in 0..=6 {
                assert!(lo * lo <= g.w2_face(kf) && g.w2_face(kf) <= hi * hi);
            }
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let p = PhysParams::default();
        assert!(Grid::new(&cfg(4, BackgroundProfile::Levels(vec![250.0, 0.0, 250.0, 250.0])), &p).is_err());
        assert!(Grid::new(&cfg(4, BackgroundProfile::Constant(0.0)), &p).is_err());
        assert!(Grid::new(&cfg(4, BackgroundProfile::Levels(vec![250.0; 3])), &p).is_err());
        let mut c = cfg(4, BackgroundProfile::Constant(250.0));
        c.p_top = 1.0e5;
        assert!(Grid::new(&c, &p).is_err());
        let mut c = cfg(4, BackgroundProfile::Constant(250.0));
        c.lx = 0.0;
        assert!(Grid::new(&c, &p).is_err());
        let mut c = cfg(1, BackgroundProfile::Constant(250.0));
        c.np = 1;
        assert!(Grid::new(&c, &p).is_err());
    }

    #[test]
    fn levels_profile_interpolates_between_centres() {
        let bg = BackgroundProfile::<f64>::Levels(vec![280.0, 260.0, 240.0, 220.0]);
        // centres at 9e4, 7e4, 5e4, 3e4
        assert_eq!(bg.eval(9.0e4, 2.0e4, 1.0e5), 280.0);
        assert!((bg.eval(8.0e4, 2.0e4, 1.0e5) - 270.0).abs() < 1e-9);
        assert_eq!(bg.eval(1.0e5, 2.0e4, 1.0e5), 280.0);
        assert_eq!(bg.eval(2.0e4, 2.0e4, 1.0e5), 220.0);
        assert!((bg.derivative(6.0e4, 2.0e4, 1.0e5) - 1.0e-3).abs() < 1e-12);
    }
}
