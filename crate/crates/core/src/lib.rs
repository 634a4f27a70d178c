//! Two-dimensional implicit material point method with overlapping Schwarz
//! coarse/fine space-time refinement.
//!
//! The engine advances hyperelastic bodies by backward-Euler steps, each cast
//! as a constrained minimization of the incremental potential on a background
//! grid. Two overlapping subdomains with heterogeneous grid spacings and time
//! steps are coupled by alternating constrained solves that exchange Dirichlet
//! velocity data through mass-weighted interface operators.
//!
//! Module map:
//! - [`fields`]: particles, structured grids, and the interpolation kernel.
//! - [`transfer`]: affine particle-in-cell transfers and advection.
//! - [`constitutive`]: Neo-Hookean energy, stress, and tangent.
//! - [`implicit_step`]: one backward-Euler step via Newton with line search.
//! - [`schwarz`]: the overlapping two-domain coupler.
//! - [`oracles`]: closed-form reference solutions for the benchmarks.
//! - [`bench`]: benchmark scenarios, quasi-static driving, and error metrics.

pub mod bench;
pub mod constitutive;
pub mod fields;
pub mod implicit_step;
pub mod oracles;
pub mod schwarz;
pub mod transfer;

pub use nalgebra::{Matrix2, Vector2};

/// 2D vector of f64, the working precision everywhere.
pub type Vec2 = Vector2<f64>;
/// 2x2 matrix of f64.
pub type Mat2 = Matrix2<f64>;
