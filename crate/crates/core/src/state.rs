use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{Dims, Grid};
use crate::real::Real;

/// The four prognostic unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Field {
    Temperature,
    Vapor,
    Cloud,
    Rain,
}

impl Field {
    pub const ALL: [Field; 4] = [Field::Temperature, Field::Vapor, Field::Cloud, Field::Rain];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short name used in file headers and reports.
    pub fn name(self) -> &'static str {
        match self {
            Field::Temperature => "T",
            Field::Vapor => "qv",
            Field::Cloud => "qc",
            Field::Rain => "qr",
        }
    }

    pub fn from_name(name: &str) -> Option<Field> {
        Field::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Prognostic state `(T, q_v, q_c, q_r)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MoistState<S> {
    pub t: S,
    pub fields: [ScalarField<S>; 4],
}

impl<S: Real> MoistState<S> {
    pub fn zeros(dims: Dims) -> Self {
        MoistState {
            t: S::zero(),
            fields: std::array::from_fn(|_| ScalarField::zeros(dims)),
        }
    }

    /// Samples closed-form initial data at the cell centres.
    pub fn from_fns(
        grid: &Grid<S>,
        temp: impl Fn(S, S, S) -> S,
        qv: impl Fn(S, S, S) -> S,
        qc: impl Fn(S, S, S) -> S,
        qr: impl Fn(S, S, S) -> S,
    ) -> Self {
        MoistState {
            t: S::zero(),
            fields: [
                ScalarField::from_fn(grid, temp),
                ScalarField::from_fn(grid, qv),
                ScalarField::from_fn(grid, qc),
                ScalarField::from_fn(grid, qr),
            ],
        }
    }

    pub fn dims(&self) -> Dims {
        self.fields[0].dims()
    }

    pub fn field(&self, f: Field) -> &ScalarField<S> {
        &self.fields[f.index()]
    }

    pub fn field_mut(&mut self, f: Field) -> &mut ScalarField<S> {
        &mut self.fields[f.index()]
    }

    pub fn temp(&self) -> &ScalarField<S> {
        &self.fields[0]
    }
    pub fn qv(&self) -> &ScalarField<S> {
        &self.fields[1]
    }
    pub fn qc(&self) -> &ScalarField<S> {
        &self.fields[2]
    }
    pub fn qr(&self) -> &ScalarField<S> {
        &self.fields[3]
    }

    /// Cells where a field is negative beyond `tol` (physical admissibility check).
    pub fn negative_cells(&self, tol: S) -> Vec<(Field, usize, usize, usize, S)> {
        let d = self.dims();
        let mut out = Vec::new();
        for f in Field::ALL {
            let fld = self.field(f);
            for k in 0..d.np {
                for j in 0..d.ny {
                    for i in 0..d.nx {
                        let v = fld.get(i, j, k);
                        if v < -tol {
                            out.push((f, i, j, k, v));
                        }
                    }
                }
            }
        }
        out
    }

    /// Errors unless every field is finite and nonnegative.
    pub fn check_admissible(&self) -> Result<()> {
        for f in Field::ALL {
            let (lo, _) = self.field(f).minmax()?;
            if !lo.is_finite() || self.field(f).first_non_finite().is_some() {
                return Err(Error::InvalidState(format!("{} is not finite", f.name())));
            }
            if lo < S::zero() {
                return Err(Error::InvalidState(format!(
                    "{} must be nonnegative, minimum is {lo}",
                    f.name()
                )));
            }
        }
        Ok(())
    }
}
