//! Core data model shared by every other module: the interpolation kernel,
//! Lagrangian particle state, structured background grids, and the subdomain
//! bundle that ties them to a material table and a time step.

mod grid;
mod kernel;
mod particle;
mod subdomain;

pub use grid::SubdomainGrid;
pub use kernel::{
    apic_inertia_tensor, kernel_weights, weight, weight_1d, weight_gradient, weight_gradient_1d,
    Stencil, StencilEntry, KERNEL_SUPPORT_CELLS, STENCIL_SIZE,
};
pub use particle::ParticleSet;
pub use subdomain::{
    seed_particles, ClampRegion, CollisionMode, CollisionPlane, SeedRegion, Subdomain,
    SubdomainLabel,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("particle {particle} at ({x}, {y}) lies outside the safe interior of the grid")]
    OutOfDomain { particle: usize, x: f64, y: f64 },
    #[error("grid cell size must be positive, got {0}")]
    InvalidCellSize(f64),
    #[error("particle {particle} has non-positive {quantity}: {value}")]
    InvalidParticle {
        particle: usize,
        quantity: &'static str,
        value: f64,
    },
}
