//! APIC particle-grid transfers, deformation-gradient update, and advection.
//!
//! P2G scatters mass and affine-augmented momentum in a fixed particle order,
//! so repeated runs are bit-identical. G2P and advection are pure per-particle
//! gathers and run in parallel; results do not depend on the thread count.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use thiserror::Error;

use crate::fields::{kernel_weights, FieldError, ParticleSet, SubdomainGrid};

#[derive(Debug, Error)]
pub enum TransferError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("particle {particle} inverted during deformation update: det F = {det}")]
    Inverted { particle: usize, det: f64 },
}

/// Particle-to-grid transfer. Clears the grid transfer state, scatters mass
/// and APIC momentum, then finalizes nodal velocities on active nodes.
///
/// The affine momentum term uses the closed-form inertia tensor
/// D = (h^2/4) I, so B D^-1 = (4/h^2) B with no per-particle inversion.
pub fn p2g(particles: &ParticleSet, grid: &mut SubdomainGrid) -> Result<(), TransferError> {
    grid.clear_transfer_state();
    let d_inv = 4.0 / (grid.cell_size * grid.cell_size);
    for p in 0..particles.len() {
        let x = particles.position[p];
        let stencil = kernel_weights(x, grid, p)?;
        let m = particles.mass[p];
        let v = particles.velocity[p];
        let c = particles.affine[p] * d_inv;
        for e in &stencil.entries {
            let xi = grid.node_position(e.node);
            let momentum = m * e.weight * (v + c * (xi - x));
            grid.mass[e.node] += m * e.weight;
            grid.momentum[e.node] += momentum;
        }
    }
    grid.finalize_velocities();
    Ok(())
}

struct G2pResult {
    velocity: Vector2<f64>,
    affine: Matrix2<f64>,
    def_grad: Matrix2<f64>,
    det: f64,
}

fn gather_one(
    grid: &SubdomainGrid,
    position: Vector2<f64>,
    def_grad: Matrix2<f64>,
    dt: f64,
    particle: usize,
) -> Result<G2pResult, TransferError> {
    let stencil = kernel_weights(position, grid, particle)?;
    let mut v = Vector2::zeros();
    let mut b = Matrix2::zeros();
    let mut vel_grad = Matrix2::zeros();
    for e in &stencil.entries {
        let vi = grid.velocity[e.node];
        let xi = grid.node_position(e.node);
        v += e.weight * vi;
        b += e.weight * vi * (xi - position).transpose();
        vel_grad += vi * e.gradient.transpose();
    }
    let f_new = (Matrix2::identity() + dt * vel_grad) * def_grad;
    Ok(G2pResult {
        velocity: v,
        affine: b,
        def_grad: f_new,
        det: f_new.determinant(),
    })
}

/// Grid-to-particle transfer: updates particle velocities, affine matrices,
/// and deformation gradients from the post-solve grid velocity field.
pub fn g2p(grid: &SubdomainGrid, particles: &mut ParticleSet, dt: f64) -> Result<(), TransferError> {
    let results: Vec<Result<G2pResult, TransferError>> = (0..particles.len())
        .into_par_iter()
        .map(|p| gather_one(grid, particles.position[p], particles.def_grad[p], dt, p))
        .collect();
    for (p, r) in results.into_iter().enumerate() {
        let r = r?;
        if r.det <= 0.0 {
            return Err(TransferError::Inverted {
                particle: p,
                det: r.det,
            });
        }
        particles.velocity[p] = r.velocity;
        particles.affine[p] = r.affine;
        particles.def_grad[p] = r.def_grad;
    }
    Ok(())
}

/// Interpolated grid velocity at an arbitrary point.
pub fn interpolate_velocity(
    grid: &SubdomainGrid,
    position: Vector2<f64>,
) -> Result<Vector2<f64>, TransferError> {
    let stencil = kernel_weights(position, grid, usize::MAX)?;
    let mut v = Vector2::zeros();
    for e in &stencil.entries {
        v += e.weight * grid.velocity[e.node];
    }
    Ok(v)
}

/// Advects particles with the interpolated grid velocity (the same field
/// g2p samples, evaluated at the pre-advection positions).
pub fn advect(
    particles: &mut ParticleSet,
    grid: &SubdomainGrid,
    dt: f64,
) -> Result<(), TransferError> {
    let moved: Vec<Result<Vector2<f64>, TransferError>> = particles
        .position
        .par_iter()
        .map(|&x| interpolate_velocity(grid, x).map(|v| x + dt * v))
        .collect();
    for (p, x) in moved.into_iter().enumerate() {
        let x = x?;
        // The new position must remain usable by the next transfer.
        kernel_weights(x, grid, p)?;
        particles.position[p] = x;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::seed_particles;

    fn grid(n: usize, h: f64) -> SubdomainGrid {
        SubdomainGrid::new(Vector2::new(0.0, 0.0), h, n, n, 1e-15)
    }

    fn cloud(seed: u64, count: usize, lo: f64, hi: f64) -> ParticleSet {
        // Small deterministic cloud with nontrivial velocities and affine state.
        let mut s = seed as f64 / 97.0 + 0.173;
        let mut next = move || {
            s = (s * 641.0 + 0.217).fract();
            s
        };
        let mut set = ParticleSet::default();
        for i in 0..count {
            let p = Vector2::new(lo + (hi - lo) * next(), lo + (hi - lo) * next());
            set.push(0.5 + next(), 1.0, p, 0);
            set.velocity[i] = Vector2::new(next() - 0.5, next() - 0.5);
            set.affine[i] = Matrix2::new(next() - 0.5, next() - 0.5, next() - 0.5, next() - 0.5);
        }
        set
    }

    #[test]
    fn single_particle_at_node() {
        let mut g = grid(9, 1.0);
        let mut set = ParticleSet::default();
        set.push(1.0, 1.0, Vector2::new(4.0, 4.0), 0);
        set.velocity[0] = Vector2::new(1.0, 0.0);
        p2g(&set, &mut g).unwrap();
        let center = g.node_index(4, 4);
        assert!((g.mass[center] - 9.0 / 16.0).abs() < 1e-14);
        for idx in 0..g.num_nodes() {
            if g.active[idx] {
                assert!((g.velocity[idx] - Vector2::new(1.0, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn p2g_conserves_mass_and_momentum() {
        for seed in 0..20 {
            let set = cloud(seed, 50, 2.0, 7.0);
            let mut g = grid(12, 1.0);
            p2g(&set, &mut g).unwrap();
            let grid_mass: f64 = g.mass.iter().sum();
            assert!((grid_mass - set.total_mass()).abs() <= 1e-10 * set.total_mass());
            let grid_momentum: Vector2<f64> = g.momentum.iter().sum();
            let pm = set.total_momentum();
            assert!((grid_momentum - pm).norm() <= 1e-10 * (1.0 + pm.norm()));
        }
    }

    #[test]
    fn p2g_preserves_angular_momentum() {
        for seed in 20..40 {
            let set = cloud(seed, 50, 2.0, 7.0);
            let mut g = grid(12, 1.0);
            p2g(&set, &mut g).unwrap();
            let mut grid_l = 0.0;
            for idx in 0..g.num_nodes() {
                let x = g.node_position(idx);
                let mv = g.momentum[idx];
                grid_l += x.x * mv.y - x.y * mv.x;
            }
            let particle_l = set.total_angular_momentum();
            assert!(
                (grid_l - particle_l).abs() <= 1e-8 * (1.0 + particle_l.abs()),
                "grid {grid_l} vs particles {particle_l}"
            );
        }
    }

    #[test]
    fn g2p_uniform_field() {
        let mut g = grid(9, 1.0);
        let v0 = Vector2::new(0.4, -0.2);
        for idx in 0..g.num_nodes() {
            g.velocity[idx] = v0;
            g.active[idx] = true;
        }
        let region = |_: Vector2<f64>| Some(0usize);
        let mut set = seed_particles(
            &region,
            Vector2::new(3.0, 3.0),
            Vector2::new(5.0, 5.0),
            1.0,
            2,
            &[1.0],
        );
        let f0 = Matrix2::new(1.1, 0.05, -0.02, 0.93);
        for p in 0..set.len() {
            set.def_grad[p] = f0;
        }
        g2p(&g, &mut set, 0.1).unwrap();
        for p in 0..set.len() {
            assert!((set.velocity[p] - v0).norm() < 1e-13);
            assert!(set.affine[p].norm() < 1e-12, "B vanishes on uniform fields");
            assert!((set.def_grad[p] - f0).norm() < 1e-13);
        }
    }

    #[test]
    fn g2p_affine_field_recovers_gradient() {
        let mut g = grid(12, 0.5);
        let a = Matrix2::new(0.3, -0.1, 0.2, 0.15);
        for idx in 0..g.num_nodes() {
            g.velocity[idx] = a * g.node_position(idx);
            g.active[idx] = true;
        }
        let mut set = ParticleSet::default();
        set.push(1.0, 1.0, Vector2::new(2.3, 2.9), 0);
        set.push(1.0, 1.0, Vector2::new(3.17, 1.44), 0);
        let dt = 0.05;
        g2p(&g, &mut set, dt).unwrap();
        for p in 0..set.len() {
            let expect = (Matrix2::identity() + dt * a) * Matrix2::identity();
            assert!((set.def_grad[p] - expect).norm() < 1e-10);
            let x = set.position[p];
            assert!((set.velocity[p] - a * x).norm() < 1e-10);
        }
    }

    #[test]
    fn g2p_zero_field_zeroes_velocity_and_affine() {
        let g = grid(9, 1.0);
        let mut set = cloud(3, 10, 3.0, 5.0);
        let f_before = set.def_grad.clone();
        let x_before = set.position.clone();
        g2p(&g, &mut set, 0.2).unwrap();
        for p in 0..set.len() {
            assert_eq!(set.velocity[p], Vector2::zeros());
            assert_eq!(set.affine[p], Matrix2::zeros());
            assert_eq!(set.def_grad[p], f_before[p]);
            assert_eq!(set.position[p], x_before[p]);
        }
    }

    #[test]
    fn round_trip_reproduces_affine_velocity_field() {
        // Particles carrying v = c + A x and B = A D stay on that field
        // through P2G followed by G2P.
        let c = Vector2::new(0.1, -0.3);
        let a = Matrix2::new(0.2, 0.5, -0.4, 0.1);
        let mut g = grid(12, 1.0);
        let region = |_: Vector2<f64>| Some(0usize);
        let mut set = seed_particles(
            &region,
            Vector2::new(3.0, 3.0),
            Vector2::new(8.0, 8.0),
            1.0,
            2,
            &[1000.0],
        );
        let d = crate::fields::apic_inertia_tensor(g.cell_size);
        for p in 0..set.len() {
            set.velocity[p] = c + a * set.position[p];
            set.affine[p] = a * d;
        }
        p2g(&set, &mut g).unwrap();
        g2p(&g, &mut set, 0.0).unwrap();
        let scale = 1e-9 * (c.norm() + a.norm() * g.cell_size);
        for p in 0..set.len() {
            let expect = c + a * set.position[p];
            assert!(
                (set.velocity[p] - expect).norm() <= scale,
                "affine field broken at particle {p}"
            );
        }
    }

    #[test]
    fn advect_trivial_cases() {
        let mut g = grid(9, 1.0);
        let v0 = Vector2::new(0.25, 0.5);
        for idx in 0..g.num_nodes() {
            g.velocity[idx] = v0;
        }
        let mut set = cloud(5, 8, 3.0, 5.0);
        let before = set.position.clone();
        advect(&mut set, &g, 0.0).unwrap();
        assert_eq!(set.position, before);
        advect(&mut set, &g, 0.5).unwrap();
        for p in 0..set.len() {
            assert!((set.position[p] - before[p] - 0.5 * v0).norm() < 1e-13);
        }
    }

    #[test]
    fn advect_rotation_error_scales_quadratically() {
        let omega = 0.8;
        let center = Vector2::new(6.0, 6.0);
        let run = |dt: f64| -> f64 {
            let mut g = grid(13, 1.0);
            for idx in 0..g.num_nodes() {
                let r = g.node_position(idx) - center;
                g.velocity[idx] = omega * Vector2::new(-r.y, r.x);
            }
            let mut set = cloud(9, 20, 4.5, 7.5);
            let before = set.position.clone();
            advect(&mut set, &g, dt).unwrap();
            let (sin, cos) = (omega * dt).sin_cos();
            let mut err: f64 = 0.0;
            for p in 0..set.len() {
                let r = before[p] - center;
                let exact = center + Vector2::new(cos * r.x - sin * r.y, sin * r.x + cos * r.y);
                err = err.max((set.position[p] - exact).norm());
            }
            err
        };
        let e1 = run(0.02);
        let e2 = run(0.01);
        assert!(e1 < 1e-3);
        let ratio = e1 / e2;
        assert!(
            ratio > 2.5 && ratio < 5.5,
            "expected O(dt^2) scaling, got ratio {ratio}"
        );
    }

    #[test]
    fn out_of_domain_particle_is_reported() {
        let mut g = grid(6, 1.0);
        let mut set = ParticleSet::default();
        set.push(1.0, 1.0, Vector2::new(0.1, 3.0), 0);
        assert!(matches!(
            p2g(&set, &mut g),
            Err(TransferError::Field(FieldError::OutOfDomain { particle: 0, .. }))
        ));
    }
}
