//! Robin data on the bottom and lateral faces; the top face is always homogeneous Neumann.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::real::Real;
use crate::state::Field;

/// Function of `(x, y, t)` on the bottom face.
pub type BottomFn<S> = Arc<dyn Fn(S, S, S) -> S + Send + Sync>;
/// Function of `(p, t)` on the lateral faces.
pub type LateralFn<S> = Arc<dyn Fn(S, S) -> S + Send + Sync>;

/// Boundary coefficients and data of one prognostic field:
/// `d_p f = alpha_bottom (data_bottom - f)` at the bottom and
/// `d_n f = alpha_lateral (data_lateral - f)` on the side walls.
#[derive(Clone)]
pub struct FieldBoundary<S> {
    pub alpha_bottom: BottomFn<S>,
    pub data_bottom: BottomFn<S>,
    pub alpha_lateral: LateralFn<S>,
    pub data_lateral: LateralFn<S>,
}

impl<S: Real> FieldBoundary<S> {
    /// Zero-flux walls everywhere.
    pub fn neumann() -> Self {
        Self::constant(S::zero(), S::zero(), S::zero(), S::zero())
    }

    pub fn constant(alpha_bottom: S, data_bottom: S, alpha_lateral: S, data_lateral: S) -> Self {
        FieldBoundary {
            alpha_bottom: Arc::new(move |_, _, _| alpha_bottom),
            data_bottom: Arc::new(move |_, _, _| data_bottom),
            alpha_lateral: Arc::new(move |_, _| alpha_lateral),
            data_lateral: Arc::new(move |_, _| data_lateral),
        }
    }
}

impl<S> fmt::Debug for FieldBoundary<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FieldBoundary { .. }")
    }
}

/// Boundary data for all four fields, indexed by [`Field::index`].
#[derive(Clone, Debug)]
pub struct BoundarySpec<S> {
    pub fields: [FieldBoundary<S>; 4],
}

/// Sample counts used by [`BoundarySpec::validate`] and [`BoundarySpec::data_sup`].
const TIME_SAMPLES: usize = 65;

impl<S: Real> BoundarySpec<S> {
    pub fn neumann() -> Self {
        BoundarySpec {
            fields: std::array::from_fn(|_| FieldBoundary::neumann()),
        }
    }

    pub fn field(&self, f: Field) -> &FieldBoundary<S> {
        &self.fields[f.index()]
    }

    fn sample_times(t_end: S) -> impl Iterator<Item = S> {
        let n = TIME_SAMPLES - 1;
        (0..=n).map(move |m| t_end * S::from_usize_lossy(m) / S::from_usize_lossy(n))
    }

    /// Checks that every coefficient and datum is finite and nonnegative at the
    /// boundary face centres for times sampled on `[0, t_end]`.
    pub fn validate(&self, grid: &Grid<S>, t_end: S) -> Result<()> {
        for f in Field::ALL {
            let fb = self.field(f);
            for t in Self::sample_times(t_end) {
                for j in 0..grid.ny() {
                    for i in 0..grid.nx() {
                        let (x, y) = (grid.x_center(i), grid.y_center(j));
                        check(f, "alpha_bottom", (fb.alpha_bottom)(x, y, t))?;
                        check(f, "data_bottom", (fb.data_bottom)(x, y, t))?;
                    }
                }
                for &p in grid.p_centers() {
                    check(f, "alpha_lateral", (fb.alpha_lateral)(p, t))?;
                    check(f, "data_lateral", (fb.data_lateral)(p, t))?;
                }
            }
        }
        Ok(())
    }

    /// Sampled supremum of the bottom and lateral data of one field over `[0, t_end]`.
    pub fn data_sup(&self, field: Field, grid: &Grid<S>, t_end: S) -> S {
        let fb = self.field(field);
        let mut sup = S::neg_infinity();
        for t in Self::sample_times(t_end) {
            for j in 0..grid.ny() {
                for i in 0..grid.nx() {
                    sup = sup.max((fb.data_bottom)(grid.x_center(i), grid.y_center(j), t));
                }
            }
            for &p in grid.p_centers() {
                sup = sup.max((fb.data_lateral)(p, t));
            }
        }
        sup
    }
}

fn check<S: Real>(f: Field, what: &str, v: S) -> Result<()> {
    if v.is_finite() && v >= S::zero() {
        Ok(())
    } else {
        Err(Error::InvalidBoundary(format!(
            "{what} of {} must be finite and nonnegative, got {v}",
            f.name()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridConfig;
    use crate::params::PhysParams;

    #[test]
    fn validation_catches_negative_data() {
        let g = Grid::new(&GridConfig::<f64>::cube(4), &PhysParams::default()).unwrap();
        let mut bc = BoundarySpec::neumann();
        bc.validate(&g, 1.0).unwrap();
        bc.fields[2].data_lateral = Arc::new(|p, t| 1e-3 * (p / 1e5 - 0.5) + t);
        assert!(bc.validate(&g, 1.0).is_err());
        bc.fields[2] = FieldBoundary::constant(1e-4, 0.01, f64::NAN, 0.0);
        assert!(bc.validate(&g, 1.0).is_err());
    }

    #[test]
    fn sup_covers_both_faces() {
        let g = Grid::new(&GridConfig::<f64>::cube(4), &PhysParams::default()).unwrap();
        let mut bc = BoundarySpec::neumann();
        bc.fields[1].data_bottom = Arc::new(|x, _, _| 0.01 * x);
        bc.fields[1].data_lateral = Arc::new(|_, t| 0.002 + 0.001 * t);
        let s = bc.data_sup(Field::Vapor, &g, 10.0);
        assert!((s - 0.012).abs() < 1e-15);
    }
}
