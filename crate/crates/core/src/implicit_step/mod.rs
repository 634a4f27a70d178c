//! One backward-Euler step on one subdomain, solved as a constrained
//! minimization of the incremental potential
//!
//!   E_h(x^) = sum_i m_i/(2 dt^2) |x^_i - x~_i|^2
//!           + sum_p V_p0 psi(F_p(x^)) - sum_i x^_i . f_ext_i
//!
//! with x~_i = x_i + dt v_i^n and F_p(x^) per the updated-Lagrangian rule.
//! Dirichlet nodes (Schwarz receivers, collision and clamp constraints) are
//! eliminated from the system, so prescribed velocities hold bit-exactly.
//! The minimizer is found by Newton with backtracking line search; per-node
//! tangent blocks are eigen-projected to positive semidefinite whenever the
//! raw Newton direction fails a descent check.

mod linear;

pub use linear::{BlockLattice, SolveFailure, CG_RELATIVE_RESIDUAL, DENSE_THRESHOLD};

use nalgebra::{Matrix2, Matrix4, Vector2};
use rayon::prelude::*;
use thiserror::Error;

use crate::constitutive::{
    contract_tangent, energy_density, piola_stress, tangent_matrix, tangent_matrix_psd,
    MaterialModel,
};
use crate::fields::{
    kernel_weights, ClampRegion, CollisionMode, CollisionPlane, FieldError, Subdomain,
    SubdomainGrid, STENCIL_SIZE,
};

use linear::{CENTER_SLOT, SLOTS};

const NO_NODE: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("Newton did not converge in {iterations} iterations; gradient norm {gradient_norm}")]
    NonConvergence { iterations: usize, gradient_norm: f64 },
    #[error("line search stagnated at iteration {iteration} (step below 2^-20)")]
    LineSearchStagnation { iteration: usize },
    #[error("linear solve failed even after tangent projection")]
    LinearSolveFailure,
    #[error("initial state has inverted elements; incremental potential is not finite")]
    NonFiniteStart,
}

/// Newton iteration controls. The absolute gradient tolerance is
/// `tolerance_rel * characteristic force` of the problem unless overridden.
#[derive(Debug, Clone, Copy)]
pub struct NewtonSettings {
    pub max_iterations: usize,
    pub tolerance_rel: f64,
    pub absolute_tolerance: Option<f64>,
    pub shrink: f64,
    pub min_step: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance_rel: 1e-7,
            absolute_tolerance: None,
            shrink: 0.5,
            min_step: (2.0_f64).powi(-20),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct NodeData {
    grid_index: u32,
    lattice: (i32, i32),
    mass: f64,
    position: Vector2<f64>,
    inertial_target: Vector2<f64>,
    external_force: Vector2<f64>,
    /// Prescribed velocity for constrained nodes.
    dirichlet: Option<Vector2<f64>>,
    /// Index into the free-node list, if unconstrained.
    free_index: Option<u32>,
}

#[derive(Debug, Clone, Copy)]
struct ParticleQuadrature {
    volume0: f64,
    def_grad: Matrix2<f64>,
    material: u32,
    /// Active-node slots (or NO_NODE) with spatial kernel gradients.
    nodes: [u32; STENCIL_SIZE],
    gradients: [Vector2<f64>; STENCIL_SIZE],
}

/// Assembled backward-Euler step for one subdomain at one time level.
#[derive(Debug, Clone)]
pub struct StepProblem {
    pub dt: f64,
    nodes: Vec<NodeData>,
    particles: Vec<ParticleQuadrature>,
    materials: Vec<MaterialModel>,
    free: Vec<u32>,
    neighbors: Vec<[i32; SLOTS]>,
    grid_nodes: usize,
    /// Force scale used for the relative Newton tolerance.
    pub characteristic_force: f64,
}

/// Per-iteration convergence record.
#[derive(Debug, Clone, Copy)]
pub struct TraceRecord {
    pub iteration: usize,
    pub energy: f64,
    pub gradient_norm: f64,
    pub step_size: f64,
}

/// Result of one implicit solve.
#[derive(Debug, Clone)]
pub struct StepSolution {
    /// Post-step nodal velocities, grid-node indexed; Dirichlet nodes carry
    /// their prescriptions bit-exactly, inactive nodes zero.
    pub velocity: Vec<Vector2<f64>>,
    /// Converged trial positions on active nodes (warm-start input).
    pub xhat: Vec<Vector2<f64>>,
    /// Constraint reaction force per Dirichlet node (grid index, N).
    pub reactions: Vec<(usize, Vector2<f64>)>,
    pub trace: Vec<TraceRecord>,
    pub iterations: usize,
    pub energy: f64,
    pub gradient_norm: f64,
}

impl StepProblem {
    /// Builds the step problem from a subdomain whose grid already holds the
    /// particle-to-grid transfer and all constraint flags for this step.
    pub fn from_subdomain(sub: &Subdomain) -> Result<Self, StepError> {
        Self::build(
            &sub.grid,
            &sub.particles.position,
            &sub.particles.mass,
            &sub.particles.volume0,
            &sub.particles.def_grad,
            &sub.particles.material,
            &sub.materials,
            sub.dt,
            sub.gravity,
            sub.characteristic_force(),
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        grid: &SubdomainGrid,
        positions: &[Vector2<f64>],
        masses: &[f64],
        volumes: &[f64],
        def_grads: &[Matrix2<f64>],
        particle_materials: &[usize],
        materials: &[MaterialModel],
        dt: f64,
        gravity: Vector2<f64>,
        characteristic_force: f64,
    ) -> Result<Self, StepError> {
        assert!(dt > 0.0, "time step must be positive");
        let mut slot_of_node = vec![NO_NODE; grid.num_nodes()];
        let mut nodes = Vec::new();
        for idx in 0..grid.num_nodes() {
            if !grid.active[idx] {
                continue;
            }
            let (i, j) = grid.node_coords(idx);
            let dirichlet = if grid.schwarz_receiver[idx] || grid.collision_dirichlet[idx] {
                Some(grid.prescribed_velocity[idx])
            } else {
                None
            };
            let position = grid.node_position(idx);
            slot_of_node[idx] = nodes.len() as u32;
            nodes.push(NodeData {
                grid_index: idx as u32,
                lattice: (i as i32, j as i32),
                mass: grid.mass[idx],
                position,
                inertial_target: position + dt * grid.velocity[idx],
                external_force: Vector2::zeros(),
                dirichlet,
                free_index: None,
            });
        }

        let mut particles = Vec::with_capacity(positions.len());
        for p in 0..positions.len() {
            let stencil = kernel_weights(positions[p], grid, p)?;
            let mut node_slots = [NO_NODE; STENCIL_SIZE];
            let mut gradients = [Vector2::zeros(); STENCIL_SIZE];
            for (k, e) in stencil.entries.iter().enumerate() {
                node_slots[k] = slot_of_node[e.node];
                gradients[k] = e.gradient;
                if slot_of_node[e.node] != NO_NODE {
                    let f = masses[p] * gravity * e.weight;
                    nodes[slot_of_node[e.node] as usize].external_force += f;
                }
            }
            particles.push(ParticleQuadrature {
                volume0: volumes[p],
                def_grad: def_grads[p],
                material: particle_materials[p] as u32,
                nodes: node_slots,
                gradients,
            });
        }

        let mut free = Vec::new();
        for (slot, node) in nodes.iter_mut().enumerate() {
            if node.dirichlet.is_none() {
                node.free_index = Some(free.len() as u32);
                free.push(slot as u32);
            }
        }

        // Free-node coupling window: stencils of a shared particle put any
        // two of its nodes within two lattice steps of each other.
        let mut free_at = std::collections::HashMap::new();
        for (fi, &slot) in free.iter().enumerate() {
            free_at.insert(nodes[slot as usize].lattice, fi as i32);
        }
        let neighbors = free
            .iter()
            .map(|&slot| {
                let (i, j) = nodes[slot as usize].lattice;
                let mut row = [-1i32; SLOTS];
                for dj in -2..=2i32 {
                    for di in -2..=2i32 {
                        if let Some(&c) = free_at.get(&(i + di, j + dj)) {
                            row[((dj + 2) * 5 + di + 2) as usize] = c;
                        }
                    }
                }
                row
            })
            .collect();

        Ok(Self {
            dt,
            nodes,
            particles,
            materials: materials.to_vec(),
            free,
            neighbors,
            grid_nodes: grid.num_nodes(),
            characteristic_force,
        })
    }

    pub fn num_active_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_free_nodes(&self) -> usize {
        self.free.len()
    }

    /// (grid index, is Dirichlet) per active-node slot.
    pub fn active_nodes(&self) -> Vec<(usize, bool)> {
        self.nodes
            .iter()
            .map(|n| (n.grid_index as usize, n.dirichlet.is_some()))
            .collect()
    }

    pub fn is_dirichlet(&self, slot: usize) -> bool {
        self.nodes[slot].dirichlet.is_some()
    }

    /// Reference position of an active node.
    pub fn node_position(&self, slot: usize) -> Vector2<f64> {
        self.nodes[slot].position
    }

    /// Free scalar unknowns as (active-node slot, axis) pairs.
    pub fn free_coordinates(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(2 * self.free.len());
        for &slot in &self.free {
            out.push((slot as usize, 0));
            out.push((slot as usize, 1));
        }
        out
    }

    /// Initial trial positions: the inertial target on free nodes, the
    /// constrained target on Dirichlet nodes.
    pub fn initial_guess(&self) -> Vec<Vector2<f64>> {
        self.nodes
            .iter()
            .map(|n| match n.dirichlet {
                Some(v) => n.position + self.dt * v,
                None => n.inertial_target,
            })
            .collect()
    }

    fn enforce_dirichlet(&self, xhat: &mut [Vector2<f64>]) {
        for (slot, n) in self.nodes.iter().enumerate() {
            if let Some(v) = n.dirichlet {
                xhat[slot] = n.position + self.dt * v;
            }
        }
    }

    /// Deformation gradient of particle `p` under trial positions `xhat`.
    fn particle_def_grad(&self, p: &ParticleQuadrature, xhat: &[Vector2<f64>]) -> Matrix2<f64> {
        let mut a = Matrix2::identity();
        for k in 0..STENCIL_SIZE {
            let slot = p.nodes[k];
            if slot == NO_NODE {
                continue;
            }
            let n = &self.nodes[slot as usize];
            let disp = xhat[slot as usize] - n.position;
            a += disp * p.gradients[k].transpose();
        }
        a * p.def_grad
    }
}

/// Total incremental potential at trial positions `xhat` (active-node
/// indexed). Returns +infinity when any particle would invert, which makes
/// the line search reject the step.
pub fn incremental_potential(xhat: &[Vector2<f64>], problem: &StepProblem) -> f64 {
    let inv_2dt2 = 0.5 / (problem.dt * problem.dt);
    let mut energy = 0.0;
    for (slot, n) in problem.nodes.iter().enumerate() {
        let d = xhat[slot] - n.inertial_target;
        energy += n.mass * inv_2dt2 * d.norm_squared();
        energy -= xhat[slot].dot(&n.external_force);
    }
    let elastic: Vec<f64> = problem
        .particles
        .par_iter()
        .map(|p| {
            let f = problem.particle_def_grad(p, xhat);
            match energy_density(&f, &problem.materials[p.material as usize]) {
                Ok(psi) => p.volume0 * psi,
                Err(_) => f64::INFINITY,
            }
        })
        .collect();
    for e in elastic {
        energy += e;
    }
    energy
}

/// Gradient of the incremental potential on all active nodes. At a solution
/// the value on Dirichlet nodes equals the constraint reaction force.
pub fn energy_gradient(xhat: &[Vector2<f64>], problem: &StepProblem) -> Vec<Vector2<f64>> {
    let inv_dt2 = 1.0 / (problem.dt * problem.dt);
    let mut grad: Vec<Vector2<f64>> = problem
        .nodes
        .iter()
        .enumerate()
        .map(|(slot, n)| n.mass * inv_dt2 * (xhat[slot] - n.inertial_target) - n.external_force)
        .collect();
    let contributions: Vec<(usize, [Vector2<f64>; STENCIL_SIZE])> = problem
        .particles
        .par_iter()
        .enumerate()
        .map(|(pi, p)| {
            let f = problem.particle_def_grad(p, xhat);
            let mat = &problem.materials[p.material as usize];
            let piola = piola_stress(&f, mat).unwrap_or_else(|_| Matrix2::zeros());
            let pf = piola * p.def_grad.transpose();
            let mut out = [Vector2::zeros(); STENCIL_SIZE];
            for k in 0..STENCIL_SIZE {
                out[k] = p.volume0 * pf * p.gradients[k];
            }
            (pi, out)
        })
        .collect();
    for (pi, out) in contributions {
        let p = &problem.particles[pi];
        for k in 0..STENCIL_SIZE {
            let slot = p.nodes[k];
            if slot != NO_NODE {
                grad[slot as usize] += out[k];
            }
        }
    }
    grad
}

fn free_gradient_inf_norm(problem: &StepProblem, grad: &[Vector2<f64>]) -> f64 {
    problem
        .free
        .iter()
        .map(|&slot| grad[slot as usize].amax())
        .fold(0.0, f64::max)
}

fn assemble_hessian(
    problem: &StepProblem,
    xhat: &[Vector2<f64>],
    project: bool,
    matrix: &mut BlockLattice,
) -> Result<(), StepError> {
    matrix.clear();
    let inv_dt2 = 1.0 / (problem.dt * problem.dt);
    for &slot in &problem.free {
        let n = &problem.nodes[slot as usize];
        let fi = n.free_index.unwrap() as usize;
        matrix.add_block(
            fi,
            CENTER_SLOT,
            &Matrix2::from_diagonal_element(n.mass * inv_dt2),
        );
    }

    // Per-particle vectorized tangents, computed in parallel; the scatter
    // below runs in particle order so assembly stays deterministic.
    let tangents: Vec<Matrix4<f64>> = problem
        .particles
        .par_iter()
        .map(|p| {
            let f = problem.particle_def_grad(p, xhat);
            let mat = &problem.materials[p.material as usize];
            let result = if project {
                tangent_matrix_psd(&f, mat)
            } else {
                tangent_matrix(&f, mat)
            };
            result.unwrap_or_else(|_| Matrix4::zeros())
        })
        .collect();

    for (p, m4) in problem.particles.iter().zip(&tangents) {
        let mut w = [Vector2::zeros(); STENCIL_SIZE];
        for k in 0..STENCIL_SIZE {
            w[k] = p.def_grad.transpose() * p.gradients[k];
        }
        for j in 0..STENCIL_SIZE {
            let slot_j = p.nodes[j];
            if slot_j == NO_NODE {
                continue;
            }
            let node_j = &problem.nodes[slot_j as usize];
            let Some(fj) = node_j.free_index else {
                continue;
            };
            for l in 0..STENCIL_SIZE {
                let slot_l = p.nodes[l];
                if slot_l == NO_NODE {
                    continue;
                }
                let node_l = &problem.nodes[slot_l as usize];
                if node_l.free_index.is_none() {
                    continue;
                }
                let di = node_l.lattice.0 - node_j.lattice.0;
                let dj = node_l.lattice.1 - node_j.lattice.1;
                debug_assert!(di.abs() <= 2 && dj.abs() <= 2);
                let s = ((dj + 2) * 5 + di + 2) as usize;
                let block = p.volume0 * contract_tangent(m4, &w[j], &w[l]);
                matrix.add_block(fj as usize, s, &block);
            }
        }
    }
    Ok(())
}

fn newton_direction(
    problem: &StepProblem,
    xhat: &[Vector2<f64>],
    grad: &[Vector2<f64>],
    matrix: &mut BlockLattice,
) -> Result<Vec<Vector2<f64>>, StepError> {
    let rhs: Vec<Vector2<f64>> = problem
        .free
        .iter()
        .map(|&slot| -grad[slot as usize])
        .collect();
    let descent = |delta: &[Vector2<f64>]| -> bool {
        let mut dot = 0.0;
        for (fi, &slot) in problem.free.iter().enumerate() {
            dot += grad[slot as usize].dot(&delta[fi]);
        }
        dot < 0.0
    };

    assemble_hessian(problem, xhat, false, matrix)?;
    if let Ok(delta) = matrix.solve(&rhs) {
        if descent(&delta) {
            return Ok(delta);
        }
    }
    // The raw tangent produced an unusable direction; retry with the
    // projected positive-semidefinite blocks.
    assemble_hessian(problem, xhat, true, matrix)?;
    match matrix.solve(&rhs) {
        Ok(delta) if descent(&delta) => Ok(delta),
        _ => Err(StepError::LinearSolveFailure),
    }
}

/// Minimizes the incremental potential and returns the post-step velocities.
/// `warm_start` seeds the Newton iteration (Dirichlet values are re-imposed).
pub fn solve_step(
    problem: &StepProblem,
    settings: &NewtonSettings,
    warm_start: Option<&[Vector2<f64>]>,
) -> Result<StepSolution, StepError> {
    let tolerance = settings
        .absolute_tolerance
        .unwrap_or(settings.tolerance_rel * problem.characteristic_force);

    let mut xhat = match warm_start {
        Some(x) if x.len() == problem.nodes.len() => x.to_vec(),
        _ => problem.initial_guess(),
    };
    problem.enforce_dirichlet(&mut xhat);

    let mut matrix = BlockLattice::new(problem.neighbors.clone());
    let mut trace = Vec::new();
    let mut energy = incremental_potential(&xhat, problem);
    if !energy.is_finite() {
        // A warm start can carry an inverted state; the untouched initial
        // guess cannot, so fall back to it before giving up.
        xhat = problem.initial_guess();
        problem.enforce_dirichlet(&mut xhat);
        energy = incremental_potential(&xhat, problem);
        if !energy.is_finite() {
            return Err(StepError::NonFiniteStart);
        }
    }
    let mut step_size = 0.0;
    let mut iterations = 0;
    loop {
        let grad = energy_gradient(&xhat, problem);
        let gradient_norm = free_gradient_inf_norm(problem, &grad);
        trace.push(TraceRecord {
            iteration: iterations,
            energy,
            gradient_norm,
            step_size,
        });
        let mut done = gradient_norm <= tolerance || problem.free.is_empty();
        if !done {
            if iterations >= settings.max_iterations {
                return Err(StepError::NonConvergence {
                    iterations,
                    gradient_norm,
                });
            }
            let delta = newton_direction(problem, &xhat, &grad, &mut matrix)?;
            let mut decrement = 0.0;
            for (fi, &slot) in problem.free.iter().enumerate() {
                decrement -= 0.5 * grad[slot as usize].dot(&delta[fi]);
            }
            let mut alpha = 1.0;
            let mut trial = xhat.clone();
            loop {
                for (fi, &slot) in problem.free.iter().enumerate() {
                    trial[slot as usize] = xhat[slot as usize] + alpha * delta[fi];
                }
                let trial_energy = incremental_potential(&trial, problem);
                if trial_energy < energy {
                    energy = trial_energy;
                    step_size = alpha;
                    std::mem::swap(&mut xhat, &mut trial);
                    iterations += 1;
                    break;
                }
                alpha *= settings.shrink;
                if alpha < settings.min_step {
                    // No representable energy decrease is left when the
                    // Newton decrement sits at the f64 resolution of the
                    // energy itself; the iterate is converged to round-off.
                    if decrement <= 1e3 * f64::EPSILON * energy.abs().max(f64::MIN_POSITIVE) {
                        done = true;
                        break;
                    }
                    return Err(StepError::LineSearchStagnation {
                        iteration: iterations,
                    });
                }
            }
        }
        if done {
            let reactions = problem
                .nodes
                .iter()
                .enumerate()
                .filter(|(_, n)| n.dirichlet.is_some())
                .map(|(slot, n)| (n.grid_index as usize, grad[slot]))
                .collect();
            let velocity = extract_velocities(problem, &xhat);
            return Ok(StepSolution {
                velocity,
                xhat,
                reactions,
                trace,
                iterations,
                energy,
                gradient_norm,
            });
        }
    }
}

fn extract_velocities(problem: &StepProblem, xhat: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut velocity = vec![Vector2::zeros(); problem.grid_nodes];
    for (slot, n) in problem.nodes.iter().enumerate() {
        velocity[n.grid_index as usize] = match n.dirichlet {
            Some(v) => v,
            None => (xhat[slot] - n.position) / problem.dt,
        };
    }
    velocity
}

/// Writes a solved velocity field back onto the grid (inactive nodes zero).
pub fn store_velocities(grid: &mut SubdomainGrid, velocity: &[Vector2<f64>]) {
    for idx in 0..grid.num_nodes() {
        grid.velocity[idx] = velocity.get(idx).copied().unwrap_or_else(Vector2::zeros);
    }
}

/// Marks active nodes inside clamp regions as Dirichlet with the region's
/// prescribed velocity.
pub fn apply_clamps(grid: &mut SubdomainGrid, clamps: &[ClampRegion]) -> usize {
    let mut count = 0;
    for idx in 0..grid.num_nodes() {
        if !grid.active[idx] {
            continue;
        }
        let p = grid.node_position(idx);
        for clamp in clamps {
            if clamp.contains(p) {
                grid.collision_dirichlet[idx] = true;
                grid.prescribed_velocity[idx] = clamp.velocity;
                count += 1;
                break;
            }
        }
    }
    count
}

/// Applies a rigid-plane constraint: active nodes on the non-admissible side
/// whose (gravity-predicted) velocity points into the plane get a prescribed
/// velocity with zero normal component (slip) or zero entirely (sticky).
///
/// `predictor` is the velocity increment the step would add without contact
/// (dt * gravity); pass zero to apply the literal current-velocity rule.
pub fn apply_collision_dirichlet(
    grid: &mut SubdomainGrid,
    plane: &CollisionPlane,
    predictor: Vector2<f64>,
) -> usize {
    let n = plane.normal.normalize();
    let mut count = 0;
    for idx in 0..grid.num_nodes() {
        if !grid.active[idx] {
            continue;
        }
        let x = grid.node_position(idx);
        if (x - plane.point).dot(&n) >= 0.0 {
            continue;
        }
        let v = grid.velocity[idx];
        if (v + predictor).dot(&n) < 0.0 {
            let prescribed = match plane.mode {
                CollisionMode::Slip => v - v.dot(&n) * n,
                CollisionMode::Sticky => Vector2::zeros(),
            };
            grid.collision_dirichlet[idx] = true;
            grid.prescribed_velocity[idx] = prescribed;
            count += 1;
        }
    }
    count
}
