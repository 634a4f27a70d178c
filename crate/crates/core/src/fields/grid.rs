//! Structured background grid for one subdomain.

use nalgebra::Vector2;

/// Fixed Eulerian node lattice with per-node transfer state and constraint
/// bookkeeping. Node (i, j) sits at `origin + cell_size * (i, j)`; nodes are
/// stored row-major with flat index `j * nx + i`.
#[derive(Debug, Clone)]
pub struct SubdomainGrid {
    pub origin: Vector2<f64>,
    pub cell_size: f64,
    /// Node counts per axis.
    pub nx: usize,
    pub ny: usize,
    pub mass: Vec<f64>,
    pub momentum: Vec<Vector2<f64>>,
    pub velocity: Vec<Vector2<f64>>,
    pub active: Vec<bool>,
    pub schwarz_receiver: Vec<bool>,
    pub collision_dirichlet: Vec<bool>,
    pub prescribed_velocity: Vec<Vector2<f64>>,
    /// A node is active iff its mass exceeds this threshold.
    pub mass_threshold: f64,
}

impl SubdomainGrid {
    pub fn new(
        origin: Vector2<f64>,
        cell_size: f64,
        nx: usize,
        ny: usize,
        mass_threshold: f64,
    ) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        assert!(nx >= 3 && ny >= 3, "grid needs at least a 3x3 node lattice");
        let n = nx * ny;
        Self {
            origin,
            cell_size,
            nx,
            ny,
            mass: vec![0.0; n],
            momentum: vec![Vector2::zeros(); n],
            velocity: vec![Vector2::zeros(); n],
            active: vec![false; n],
            schwarz_receiver: vec![false; n],
            collision_dirichlet: vec![false; n],
            prescribed_velocity: vec![Vector2::zeros(); n],
            mass_threshold,
        }
    }

    /// Builds a grid covering `[min, max]` padded by `pad` cells per side,
    /// with the origin snapped onto the global lattice `cell_size * Z^2` so
    /// that grids of commensurate spacing share node locations exactly.
    pub fn from_bounds(
        min: Vector2<f64>,
        max: Vector2<f64>,
        cell_size: f64,
        pad: usize,
        mass_threshold: f64,
    ) -> Self {
        assert!(cell_size > 0.0);
        assert!(max.x >= min.x && max.y >= min.y, "empty bounds");
        let i0 = (min.x / cell_size).floor() as i64 - pad as i64;
        let j0 = (min.y / cell_size).floor() as i64 - pad as i64;
        let i1 = (max.x / cell_size).ceil() as i64 + pad as i64;
        let j1 = (max.y / cell_size).ceil() as i64 + pad as i64;
        let origin = Vector2::new(i0 as f64 * cell_size, j0 as f64 * cell_size);
        let nx = (i1 - i0) as usize + 1;
        let ny = (j1 - j0) as usize + 1;
        Self::new(origin, cell_size, nx, ny, mass_threshold)
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    #[inline]
    pub fn node_coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    #[inline]
    pub fn node_position(&self, idx: usize) -> Vector2<f64> {
        let (i, j) = self.node_coords(idx);
        self.origin + self.cell_size * Vector2::new(i as f64, j as f64)
    }

    /// Clears all per-step transfer state and constraint flags.
    pub fn clear_transfer_state(&mut self) {
        self.mass.fill(0.0);
        self.momentum.fill(Vector2::zeros());
        self.velocity.fill(Vector2::zeros());
        self.active.fill(false);
        self.schwarz_receiver.fill(false);
        self.collision_dirichlet.fill(false);
        self.prescribed_velocity.fill(Vector2::zeros());
    }

    /// Marks nodes active where mass exceeds the threshold and converts
    /// momentum to velocity there.
    pub fn finalize_velocities(&mut self) {
        for idx in 0..self.num_nodes() {
            if self.mass[idx] > self.mass_threshold {
                self.active[idx] = true;
                self.velocity[idx] = self.momentum[idx] / self.mass[idx];
            } else {
                self.active[idx] = false;
                self.velocity[idx] = Vector2::zeros();
            }
        }
    }

    /// Maximum velocity magnitude over active nodes.
    pub fn max_velocity_norm(&self) -> f64 {
        let mut m: f64 = 0.0;
        for idx in 0..self.num_nodes() {
            if self.active[idx] {
                m = m.max(self.velocity[idx].norm());
            }
        }
        m
    }

    /// Locates the node whose position coincides with `pos` within `tol`,
    /// if any.
    pub fn node_at_position(&self, pos: Vector2<f64>, tol: f64) -> Option<usize> {
        let gi = ((pos.x - self.origin.x) / self.cell_size).round();
        let gj = ((pos.y - self.origin.y) / self.cell_size).round();
        if gi < 0.0 || gj < 0.0 || gi >= self.nx as f64 || gj >= self.ny as f64 {
            return None;
        }
        let idx = self.node_index(gi as usize, gj as usize);
        if (self.node_position(idx) - pos).norm() <= tol {
            Some(idx)
        } else {
            None
        }
    }
}
