//! Runtime monitors: discrete norms, bound checks and level-set energies of the
//! temperature.
//!
//! All sums are formed per pressure level in parallel and then added level by
//! level in order, so results are independent of the worker count.

use std::io::Write;

use rayon::prelude::*;

use crate::boundary::BoundarySpec;
use crate::error::Result;
use crate::field::ScalarField;
use crate::grid::Grid;
use crate::params::PhysParams;
use crate::real::Real;
use crate::solver::{Model, Observer};
use crate::state::{Field, MoistState};
use crate::thermo::{critical_temperature, moist_coeffs, qvs_unchecked, saturation_mixing_ratio_sup};

/// Norms of one field. Gradients use differences across interior faces.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldNorms<S> {
    pub l2: S,
    pub linf: S,
    pub min: S,
    pub max: S,
    /// `||grad_h f||`.
    pub grad_h: S,
    /// `||w d_p f||`.
    pub grad_p_w: S,
    /// `sqrt(l2^2 + grad_h^2 + grad_p_w^2)`.
    pub h1_w: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormRecord<S> {
    pub t: S,
    pub fields: [FieldNorms<S>; 4],
}

/// Sum of `term(i, j, k)` over interior cells, deterministic in the worker count.
fn ordered_sum<S: Real>(grid: &Grid<S>, term: impl Fn(usize, usize, usize) -> S + Sync) -> S {
    let d = grid.dims();
    let planes: Vec<S> = (0..d.np)
        .into_par_iter()
        .map(|k| {
            let mut s = S::zero();
            for j in 0..d.ny {
                for i in 0..d.nx {
                    s += term(i, j, k);
                }
            }
            s
        })
        .collect();
    planes.into_iter().fold(S::zero(), |a, b| a + b)
}

/// `sum f^2 dV`, `sum |grad_h f|^2 dV` and `sum w^2 (d_p f)^2 dV` of `g(f)`.
fn energies<S: Real>(f: &ScalarField<S>, grid: &Grid<S>, g: impl Fn(S) -> S + Sync) -> (S, S, S) {
    let d = grid.dims();
    let vol = grid.cell_volume();
    let (dx, dy, dp) = (grid.dx(), grid.dy(), grid.dp());
    let sq = |v: S| v * v;
    let l2 = ordered_sum(grid, |i, j, k| sq(g(f.get(i, j, k))));
    let gh = ordered_sum(grid, |i, j, k| {
        let c = g(f.get(i, j, k));
        let mut s = S::zero();
        if i + 1 < d.nx {
            s += sq((g(f.get(i + 1, j, k)) - c) / dx);
        }
        if j + 1 < d.ny {
            s += sq((g(f.get(i, j + 1, k)) - c) / dy);
        }
        s
    });
    let gp = ordered_sum(grid, |i, j, k| {
        if k + 1 < d.np {
            grid.w2_face(k + 1) * sq((g(f.get(i, j, k + 1)) - g(f.get(i, j, k))) / dp)
        } else {
            S::zero()
        }
    });
    (l2 * vol, gh * vol, gp * vol)
}

pub fn field_norms<S: Real>(f: &ScalarField<S>, grid: &Grid<S>) -> FieldNorms<S> {
    let (l2, gh, gp) = energies(f, grid, |v| v);
    let (mut lo, mut hi) = (S::infinity(), S::neg_infinity());
    for v in f.interior() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    FieldNorms {
        l2: l2.sqrt(),
        linf: lo.abs().max(hi.abs()),
        min: lo,
        max: hi,
        grad_h: gh.sqrt(),
        grad_p_w: gp.sqrt(),
        h1_w: (l2 + gh + gp).sqrt(),
    }
}

pub fn record_norms<S: Real>(state: &MoistState<S>, grid: &Grid<S>) -> NormRecord<S> {
    NormRecord {
        t: state.t,
        fields: std::array::from_fn(|n| field_norms(&state.fields[n], grid)),
    }
}

/// Tolerances of [`check_bounds`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTolerances<S> {
    pub nonnegative: S,
    pub vapor_max: S,
}

impl<S: Real> Default for BoundTolerances<S> {
    fn default() -> Self {
        BoundTolerances {
            nonnegative: S::lit(1e-12),
            vapor_max: S::lit(1e-10),
        }
    }
}

/// One cell violating one bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation<S> {
    pub t: S,
    /// Field name, or `kappa`, `rain_heat`, `inv_c`, `T_max`.
    pub quantity: &'static str,
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub value: S,
    pub bound: S,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ViolationReport<S> {
    pub violations: Vec<Violation<S>>,
}

impl<S: Real> ViolationReport<S> {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
    pub fn len(&self) -> usize {
        self.violations.len()
    }
}

/// Lists the cells violating nonnegativity, `q_v <= q_v* + tol` and the
/// coefficient bounds `0 < kappa~ <= kappa_1`, `c_l q_r+ / C~ in [0, 1]`,
/// `1 / C~ <= 1 / c_pd`.
pub fn check_bounds<S: Real>(
    state: &MoistState<S>,
    grid: &Grid<S>,
    params: &PhysParams<S>,
    qv_star: S,
    tol: BoundTolerances<S>,
) -> ViolationReport<S> {
    let d = grid.dims();
    let kappa1 = params.kappa1();
    let inv_cpd = params.c_pd.recip();
    let t = state.t;
    let planes: Vec<Vec<Violation<S>>> = (0..d.np)
        .into_par_iter()
        .map(|k| {
            let mut out = Vec::new();
            for j in 0..d.ny {
                for i in 0..d.nx {
                    let mut push = |quantity, value, bound| {
                        out.push(Violation {
                            t,
                            quantity,
                            i,
                            j,
                            k,
                            value,
                            bound,
                        })
                    };
                    let vals: [S; 4] = std::array::from_fn(|n| state.fields[n].get(i, j, k));
                    for f in Field::ALL {
                        let v = vals[f.index()];
                        if !(v >= -tol.nonnegative) {
                            push(f.name(), v, -tol.nonnegative);
                        }
                    }
                    if vals[1] > qv_star + tol.vapor_max {
                        push("qv", vals[1], qv_star + tol.vapor_max);
                    }
                    let c = moist_coeffs(vals[1], vals[2], vals[3], vals[0], params);
                    if !(c.kappa_tilde > S::zero() && c.kappa_tilde <= kappa1) {
                        push("kappa", c.kappa_tilde, kappa1);
                    }
                    let rain = params.c_l * vals[3].pos() * c.inv_c;
                    if !(rain >= S::zero() && rain <= S::one()) {
                        push("rain_heat", rain, S::one());
                    }
                    if !(c.inv_c <= inv_cpd) {
                        push("inv_c", c.inv_c, inv_cpd);
                    }
                }
            }
            out
        })
        .collect();
    ViolationReport {
        violations: planes.into_iter().flatten().collect(),
    }
}

/// `max{||q_v0||_inf, sup q_v boundary data, sup q_vs}`.
pub fn qv_star<S: Real>(initial: &MoistState<S>, bc: &BoundarySpec<S>, grid: &Grid<S>, params: &PhysParams<S>, t_end: S) -> S {
    let q0 = initial.qv().interior().fold(S::zero(), |m, v| m.max(v.abs()));
    q0.max(bc.data_sup(Field::Vapor, grid, t_end))
        .max(saturation_mixing_ratio_sup(grid.p_top(), params))
}

/// Largest `q_vs(p, T)` over the cells of `state`.
pub fn max_saturation<S: Real>(state: &MoistState<S>, grid: &Grid<S>, params: &PhysParams<S>) -> S {
    let d = grid.dims();
    let planes: Vec<S> = (0..d.np)
        .into_par_iter()
        .map(|k| {
            let p = grid.p_centers()[k];
            let mut m = S::zero();
            for j in 0..d.ny {
                for i in 0..d.nx {
                    m = m.max(qvs_unchecked(p, state.temp().get(i, j, k), params));
                }
            }
            m
        })
        .collect();
    planes.into_iter().fold(S::zero(), |a, b| a.max(b))
}

/// Threshold base `M = 2 max{||T_0||_inf, T_crit, sup T boundary data}`.
pub fn level_set_base<S: Real>(
    initial: &MoistState<S>,
    bc: &BoundarySpec<S>,
    grid: &Grid<S>,
    params: &PhysParams<S>,
    t_end: S,
) -> Result<S> {
    let t0 = initial.temp().interior().fold(S::zero(), |m, v| m.max(v.abs()));
    let tc = critical_temperature(params)?;
    Ok(S::lit(2.0) * t0.max(tc).max(bc.data_sup(Field::Temperature, grid, t_end)))
}

/// Running truncation energies
/// `J_k = sup_t ||(T - l_k)+||^2 + int (mu ||grad_h (T - l_k)+||^2 + nu ||w d_p (T - l_k)+||^2) dt`
/// at `l_k = M (1 - 2^-k)`. The time integral uses left endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetSeries<S> {
    pub m: S,
    pub k_min: u32,
    pub levels: Vec<S>,
    pub sup: Vec<S>,
    pub integral: Vec<S>,
    pub mu: S,
    pub nu: S,
}

impl<S: Real> LevelSetSeries<S> {
    pub fn new(m: S, k_min: u32, k_max: u32, mu: S, nu: S) -> Self {
        let levels = (k_min..=k_max)
            .map(|k| m * (S::one() - S::lit(2.0).powi(-(k as i32))))
            .collect::<Vec<_>>();
        let n = levels.len();
        LevelSetSeries {
            m,
            k_min,
            levels,
            sup: vec![S::zero(); n],
            integral: vec![S::zero(); n],
            mu,
            nu,
        }
    }

    /// `J_k` for every `k` in range, in increasing `k`.
    pub fn energies(&self) -> Vec<S> {
        self.sup.iter().zip(&self.integral).map(|(&a, &b)| a + b).collect()
    }

    pub fn j(&self, k: u32) -> Option<S> {
        let n = k.checked_sub(self.k_min)? as usize;
        Some(*self.sup.get(n)? + self.integral[n])
    }

    pub fn is_monotone(&self) -> bool {
        self.energies().windows(2).all(|w| w[1] <= w[0])
    }
}

/// Updates the running supremum with `state` and adds `dt` times its gradient
/// energy to the integral.
pub fn update_level_sets<S: Real>(series: &mut LevelSetSeries<S>, state: &MoistState<S>, grid: &Grid<S>, dt: S) {
    let t = state.temp();
    let tmax = t.interior().fold(S::neg_infinity(), |m, v| m.max(v));
    for n in 0..series.levels.len() {
        let lam = series.levels[n];
        if tmax <= lam {
            continue;
        }
        let (l2, gh, gp) = energies(t, grid, |v| (v - lam).pos());
        series.sup[n] = series.sup[n].max(l2);
        series.integral[n] += dt * (series.mu * gh + series.nu * gp);
    }
}

pub const NORM_COLUMNS: [&str; 7] = ["l2", "linf", "min", "max", "grad_h", "grad_p_w", "h1_w"];

/// Header of the diagnostics stream for level sets `k_min..=k_max`.
pub fn diagnostics_header(k_min: u32, k_max: u32) -> String {
    let mut cols = vec!["t".to_string()];
    for f in Field::ALL {
        for c in NORM_COLUMNS {
            cols.push(format!("{}_{c}", f.name()));
        }
    }
    cols.push("violations".into());
    cols.push("max_qvs".into());
    for k in k_min..=k_max {
        cols.push(format!("J_{k}"));
    }
    cols.join(",")
}

fn push_num<S: Real>(row: &mut String, v: S) {
    use std::fmt::Write as _;
    let _ = write!(row, ",{:e}", v.as_f64());
}

/// One diagnostics row matching [`diagnostics_header`].
pub fn diagnostics_row<S: Real>(rec: &NormRecord<S>, violations: usize, max_qvs: S, series: &LevelSetSeries<S>) -> String {
    let mut row = format!("{:e}", rec.t.as_f64());
    for n in &rec.fields {
        for v in [n.l2, n.linf, n.min, n.max, n.grad_h, n.grad_p_w, n.h1_w] {
            push_num(&mut row, v);
        }
    }
    row.push_str(&format!(",{violations}"));
    push_num(&mut row, max_qvs);
    for j in series.energies() {
        push_num(&mut row, j);
    }
    row
}

pub const VIOLATION_HEADER: &str = "t,field,i,j,k,value,bound";

pub fn violation_row<S: Real>(v: &Violation<S>) -> String {
    format!(
        "{:e},{},{},{},{},{:e},{:e}",
        v.t.as_f64(),
        v.quantity,
        v.i,
        v.j,
        v.k,
        v.value.as_f64(),
        v.bound.as_f64()
    )
}

/// Observer that checks bounds and records norms at every output time, updates
/// the level-set energies every step and optionally streams both CSV files.
pub struct Monitor<S: Real> {
    pub qv_star: S,
    pub tolerances: BoundTolerances<S>,
    pub level_sets: LevelSetSeries<S>,
    pub records: Vec<NormRecord<S>>,
    /// Violations seen so far, capped at `max_kept`.
    pub violations: Vec<Violation<S>>,
    pub violation_count: usize,
    pub max_kept: usize,
    /// Largest `q_vs` attained in any cell at any step.
    pub max_qvs: S,
    /// Largest temperature seen at any step.
    pub max_temp: S,
    /// Smallest value of any field seen at any output.
    pub min_value: S,
    pub max_qv: S,
    diagnostics: Option<Box<dyn Write + Send>>,
    violations_out: Option<Box<dyn Write + Send>>,
    k_range: (u32, u32),
}

impl<S: Real> Monitor<S> {
    /// Monitor for `model` started from `initial` and run to `t_end`, with
    /// `M` taken from [`level_set_base`] unless given.
    pub fn new(
        model: &Model<S>,
        initial: &MoistState<S>,
        t_end: S,
        k_range: (u32, u32),
        m_override: Option<S>,
    ) -> Result<Self> {
        let m = match m_override {
            Some(m) => m,
            None => level_set_base(initial, &model.boundary, &model.grid, &model.params, t_end)?,
        };
        let diff = model.params.diffusivity(Field::Temperature);
        Ok(Monitor {
            qv_star: qv_star(initial, &model.boundary, &model.grid, &model.params, t_end),
            tolerances: BoundTolerances::default(),
            level_sets: LevelSetSeries::new(m, k_range.0, k_range.1, diff.mu, diff.nu),
            records: Vec::new(),
            violations: Vec::new(),
            violation_count: 0,
            max_kept: 10_000,
            max_qvs: S::zero(),
            max_temp: S::neg_infinity(),
            min_value: S::infinity(),
            max_qv: S::neg_infinity(),
            diagnostics: None,
            violations_out: None,
            k_range,
        })
    }

    /// Streams diagnostics rows and violation rows to the given writers; headers
    /// are written immediately.
    pub fn with_writers(
        mut self,
        mut diagnostics: Box<dyn Write + Send>,
        mut violations: Box<dyn Write + Send>,
    ) -> Result<Self> {
        writeln!(diagnostics, "{}", diagnostics_header(self.k_range.0, self.k_range.1)).map_err(io_err)?;
        writeln!(violations, "{VIOLATION_HEADER}").map_err(io_err)?;
        self.diagnostics = Some(diagnostics);
        self.violations_out = Some(violations);
        Ok(self)
    }

    pub fn flush(&mut self) -> Result<()> {
        for w in [&mut self.diagnostics, &mut self.violations_out].into_iter().flatten() {
            w.flush().map_err(io_err)?;
        }
        Ok(())
    }

    fn record_violation(&mut self, v: Violation<S>) -> Result<()> {
        if let Some(w) = &mut self.violations_out {
            writeln!(w, "{}", violation_row(&v)).map_err(io_err)?;
        }
        self.violation_count += 1;
        if self.violations.len() < self.max_kept {
            self.violations.push(v);
        }
        Ok(())
    }

    /// Tight vapour bound from the saturation values actually reached.
    pub fn attained_qv_bound(&self, initial_and_boundary: S) -> S {
        initial_and_boundary.max(self.max_qvs)
    }
}

fn io_err(e: std::io::Error) -> crate::error::Error {
    crate::error::Error::io("<diagnostics stream>", e)
}

impl<S: Real> Observer<S> for Monitor<S> {
    fn on_output(&mut self, state: &MoistState<S>, model: &Model<S>) -> Result<()> {
        let grid = &model.grid;
        update_level_sets(&mut self.level_sets, state, grid, S::zero());
        self.max_qvs = self.max_qvs.max(max_saturation(state, grid, &model.params));
        let rec = record_norms(state, grid);
        self.max_temp = self.max_temp.max(rec.fields[0].max);
        self.max_qv = self.max_qv.max(rec.fields[1].max);
        for f in &rec.fields {
            self.min_value = self.min_value.min(f.min);
        }
        let report = check_bounds(state, grid, &model.params, self.qv_star, self.tolerances);
        let before = self.violation_count;
        for v in report.violations {
            self.record_violation(v)?;
        }
        if rec.fields[0].max > self.level_sets.m {
            // report the hottest cell
            let t = state.temp();
            let d = grid.dims();
            let (mut best, mut at) = (S::neg_infinity(), (0, 0, 0));
            for k in 0..d.np {
                for j in 0..d.ny {
                    for i in 0..d.nx {
                        if t.get(i, j, k) > best {
                            best = t.get(i, j, k);
                            at = (i, j, k);
                        }
                    }
                }
            }
            self.record_violation(Violation {
                t: state.t,
                quantity: "T_max",
                i: at.0,
                j: at.1,
                k: at.2,
                value: best,
                bound: self.level_sets.m,
            })?;
        }
        let new = self.violation_count - before;
        if let Some(w) = &mut self.diagnostics {
            writeln!(w, "{}", diagnostics_row(&rec, new, self.max_qvs, &self.level_sets)).map_err(io_err)?;
        }
        self.records.push(rec);
        Ok(())
    }

    fn on_step(&mut self, state: &MoistState<S>, model: &Model<S>, dt: S) -> Result<()> {
        update_level_sets(&mut self.level_sets, state, &model.grid, dt);
        self.max_qvs = self.max_qvs.max(max_saturation(state, &model.grid, &model.params));
        Ok(())
    }
}
