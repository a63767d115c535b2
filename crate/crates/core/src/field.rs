//! Cell-centred scalar storage with one ghost layer per face.

use crate::error::{Error, Result};
use crate::grid::{Dims, Grid};
use crate::real::Real;

/// One scalar unknown sampled at cell centres, padded by one ghost cell on every face.
///
/// Storage order is x fastest, then y, then p; the padded extents are
/// `(nx + 2) x (ny + 2) x (np + 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<S> {
    dims: Dims,
    data: Vec<S>,
}

impl<S: Real> ScalarField<S> {
    pub fn zeros(dims: Dims) -> Self {
        Self::constant(dims, S::zero())
    }

    pub fn constant(dims: Dims, value: S) -> Self {
        let n = (dims.nx + 2) * (dims.ny + 2) * (dims.np + 2);
        ScalarField {
            dims,
            data: vec![value; n],
        }
    }

    /// Samples `f(x, y, p)` at the interior cell centres; ghosts are zero.
    pub fn from_fn(grid: &Grid<S>, mut f: impl FnMut(S, S, S) -> S) -> Self {
        let mut out = Self::zeros(grid.dims());
        for k in 0..grid.np() {
            let p = grid.p_centers()[k];
            for j in 0..grid.ny() {
                let y = grid.y_center(j);
                for i in 0..grid.nx() {
                    out.set(i, j, k, f(grid.x_center(i), y, p));
                }
            }
        }
        out
    }

    /// Builds a field from interior values in x-fastest order.
    pub fn from_interior(dims: Dims, values: &[S]) -> Result<Self> {
        if values.len() != dims.cells() {
            return Err(Error::InvalidState(format!(
                "expected {} interior values, got {}",
                dims.cells(),
                values.len()
            )));
        }
        let mut out = Self::zeros(dims);
        let mut it = values.iter();
        for k in 0..dims.np {
            for j in 0..dims.ny {
                for i in 0..dims.nx {
                    out.set(i, j, k, *it.next().unwrap());
                }
            }
        }
        Ok(out)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Padded strides `(1, sy, sz)`.
    #[inline]
    pub fn strides(&self) -> (usize, usize) {
        let sy = self.dims.nx + 2;
        (sy, sy * (self.dims.ny + 2))
    }

    /// Padded index of cell `(i, j, k)`; each index may range over `-1..=n`.
    #[inline]
    pub fn idx(&self, i: isize, j: isize, k: isize) -> usize {
        let (sy, sz) = self.strides();
        (k + 1) as usize * sz + (j + 1) as usize * sy + (i + 1) as usize
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> S {
        self.data[self.idx(i as isize, j as isize, k as isize)]
    }

    #[inline]
    pub fn at(&self, i: isize, j: isize, k: isize) -> S {
        self.data[self.idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: S) {
        let n = self.idx(i as isize, j as isize, k as isize);
        self.data[n] = v;
    }

    #[inline]
    pub fn set_at(&mut self, i: isize, j: isize, k: isize, v: S) {
        let n = self.idx(i, j, k);
        self.data[n] = v;
    }

    /// Raw padded storage.
    pub fn raw(&self) -> &[S] {
        &self.data
    }

    pub fn raw_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// Interior values in x-fastest order.
    pub fn interior(&self) -> impl Iterator<Item = S> + '_ {
        let d = self.dims;
        (0..d.np).flat_map(move |k| {
            (0..d.ny).flat_map(move |j| (0..d.nx).map(move |i| self.get(i, j, k)))
        })
    }

    pub fn interior_vec(&self) -> Vec<S> {
        self.interior().collect()
    }

    /// Exact interior extrema. Fails on NaN.
    pub fn minmax(&self) -> Result<(S, S)> {
        let mut lo = S::infinity();
        let mut hi = S::neg_infinity();
        for v in self.interior() {
            if v.is_nan() {
                return Err(Error::NanInField);
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok((lo, hi))
    }

    /// First interior cell holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<(usize, usize, usize)> {
        let d = self.dims;
        for k in 0..d.np {
            for j in 0..d.ny {
                for i in 0..d.nx {
                    if !self.get(i, j, k).is_finite() {
                        return Some((i, j, k));
                    }
                }
            }
        }
        None
    }

    /// `self += factor * rate` over the interior.
    pub fn add_scaled(&mut self, factor: S, rate: &Tendency<S>) {
        let d = self.dims;
        let mut n = 0;
        for k in 0..d.np {
            for j in 0..d.ny {
                let base = self.idx(0, j as isize, k as isize);
                for v in &mut self.data[base..base + d.nx] {
                    *v += factor * rate.0[n];
                    n += 1;
                }
            }
        }
    }

    /// `self = a * self + b * other` over the interior.
    pub fn combine(&mut self, a: S, b: S, other: &ScalarField<S>) {
        let d = self.dims;
        for k in 0..d.np {
            for j in 0..d.ny {
                let base = self.idx(0, j as isize, k as isize);
                for n in base..base + d.nx {
                    self.data[n] = a * self.data[n] + b * other.data[n];
                }
            }
        }
    }
}

/// Per-cell rate of change of one field over the interior, x-fastest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tendency<S>(pub Vec<S>);

impl<S: Real> Tendency<S> {
    pub fn zeros(dims: Dims) -> Self {
        Tendency(vec![S::zero(); dims.cells()])
    }

    pub fn add(&mut self, other: &Tendency<S>) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += *b;
        }
    }

    pub fn max_abs(&self) -> S {
        self.0.iter().fold(S::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}
