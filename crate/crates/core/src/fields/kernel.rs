//! Quadratic B-spline interpolation kernel.
//!
//! The kernel has support radius 1.5 cells per axis, so every evaluation
//! point sees exactly a 3x3 node stencil. Quadratic B-splines give C1
//! continuity, a partition of unity, linear reproduction, and the closed-form
//! affine inertia tensor D = (h^2/4) I used by the APIC transfers.

use nalgebra::{Matrix2, Vector2};

use super::{FieldError, SubdomainGrid};

/// Support radius in cell units.
pub const KERNEL_SUPPORT_CELLS: f64 = 1.5;

/// Number of nodes in the interpolation stencil (3x3).
pub const STENCIL_SIZE: usize = 9;

/// One-dimensional quadratic B-spline weight at a signed offset in cell units.
pub fn weight_1d(u: f64) -> f64 {
    let a = u.abs();
    if a < 0.5 {
        0.75 - u * u
    } else if a < 1.5 {
        let t = 1.5 - a;
        0.5 * t * t
    } else {
        0.0
    }
}

/// Derivative of [`weight_1d`] with respect to the offset, in 1/cell units.
pub fn weight_gradient_1d(u: f64) -> f64 {
    let a = u.abs();
    if a < 0.5 {
        -2.0 * u
    } else if a < 1.5 {
        (a - 1.5) * u.signum()
    } else {
        0.0
    }
}

/// Tensor-product 2D weight for an offset (evaluation point minus node) in
/// cell units.
pub fn weight(offset: Vector2<f64>) -> f64 {
    weight_1d(offset.x) * weight_1d(offset.y)
}

/// Gradient of [`weight`] with respect to the offset, in 1/cell units.
pub fn weight_gradient(offset: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(
        weight_gradient_1d(offset.x) * weight_1d(offset.y),
        weight_1d(offset.x) * weight_gradient_1d(offset.y),
    )
}

/// One node of an interpolation stencil.
#[derive(Debug, Clone, Copy)]
pub struct StencilEntry {
    /// Flat node index into the grid arrays.
    pub node: usize,
    /// Kernel weight N_i(x).
    pub weight: f64,
    /// Spatial kernel gradient, in 1/m.
    pub gradient: Vector2<f64>,
}

/// The 3x3 stencil of a single evaluation point.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub entries: [StencilEntry; STENCIL_SIZE],
    /// Lattice coordinates of the lower-left stencil node.
    pub base: (usize, usize),
}

/// Evaluates kernel weights and spatial gradients of the 3x3 node stencil
/// around `position`. Fails if the stencil would leave the node lattice,
/// i.e. the point is not at least 1.5 cells inside the grid extent.
pub fn kernel_weights(
    position: Vector2<f64>,
    grid: &SubdomainGrid,
    particle: usize,
) -> Result<Stencil, FieldError> {
    let h = grid.cell_size;
    let gx = (position.x - grid.origin.x) / h;
    let gy = (position.y - grid.origin.y) / h;
    let bx = (gx - 0.5).floor();
    let by = (gy - 0.5).floor();
    if bx < 0.0
        || by < 0.0
        || bx as usize + 2 > grid.nx - 1
        || by as usize + 2 > grid.ny - 1
    {
        return Err(FieldError::OutOfDomain {
            particle,
            x: position.x,
            y: position.y,
        });
    }
    let bx = bx as usize;
    let by = by as usize;
    let fx = gx - bx as f64;
    let fy = gy - by as f64;

    let mut wx = [0.0; 3];
    let mut wy = [0.0; 3];
    let mut dwx = [0.0; 3];
    let mut dwy = [0.0; 3];
    for k in 0..3 {
        let ux = fx - k as f64;
        let uy = fy - k as f64;
        wx[k] = weight_1d(ux);
        wy[k] = weight_1d(uy);
        dwx[k] = weight_gradient_1d(ux);
        dwy[k] = weight_gradient_1d(uy);
    }

    let inv_h = 1.0 / h;
    let mut entries = [StencilEntry {
        node: 0,
        weight: 0.0,
        gradient: Vector2::zeros(),
    }; STENCIL_SIZE];
    let mut slot = 0;
    for j in 0..3 {
        for i in 0..3 {
            entries[slot] = StencilEntry {
                node: grid.node_index(bx + i, by + j),
                weight: wx[i] * wy[j],
                gradient: Vector2::new(dwx[i] * wy[j] * inv_h, wx[i] * dwy[j] * inv_h),
            };
            slot += 1;
        }
    }
    Ok(Stencil {
        entries,
        base: (bx, by),
    })
}

/// Closed-form APIC inertia tensor for the quadratic B-spline kernel on a
/// grid with cell size `h`: D = (h^2/4) I.
pub fn apic_inertia_tensor(h: f64) -> Matrix2<f64> {
    assert!(h > 0.0, "cell size must be positive");
    Matrix2::from_diagonal_element(0.25 * h * h)
}
