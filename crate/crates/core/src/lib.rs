//! Warm-cloud moisture dynamics in pressure coordinates.
//!
//! Temperature, water vapour, cloud water and rain are advanced on a cell-centred
//! grid over `[0, Lx] x [0, Ly] x [p_top, p_bottom]` under a prescribed
//! divergence-free velocity, with Kessler-type phase changes, rain fall, horizontal
//! and weighted vertical diffusion, and Robin conditions on the bottom and side
//! walls. The discretisation keeps the fields nonnegative and the vapour below
//! its saturation bound, and [`diagnostics`] checks this at run time.
//!
//! Everything is generic over the floating point type; [`Grid64`], [`Model64`]
//! and friends fix it to `f64`.

pub mod binfmt;
pub mod boundary;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod grid;
pub mod microphysics;
pub mod mms;
pub mod operators;
pub mod params;
pub mod real;
pub mod solver;
pub mod state;
pub mod thermo;
pub mod velocity;

pub use error::{Error, Result};
pub use real::Real;
pub use state::Field;

pub type Grid64 = grid::Grid<f64>;
pub type Grid32 = grid::Grid<f32>;
pub type GridConfig64 = grid::GridConfig<f64>;
pub type PhysParams64 = params::PhysParams<f64>;
pub type PhysParams32 = params::PhysParams<f32>;
pub type MoistState64 = state::MoistState<f64>;
pub type MoistState32 = state::MoistState<f32>;
pub type ScalarField64 = field::ScalarField<f64>;
pub type VelocityField64 = velocity::VelocityField<f64>;
pub type BoundarySpec64 = boundary::BoundarySpec<f64>;
pub type Model64 = solver::Model<f64>;
pub type Model32 = solver::Model<f32>;
pub type StepControl64 = solver::StepControl<f64>;
