//! Overlapping Schwarz coupler for two subdomains with heterogeneous grid
//! spacings and time steps.
//!
//! Per global frame: fine particles are checkpointed, both domains run their
//! initial particle-to-grid transfer, and interface node sets are built from
//! boundary-particle mass with mass-based arbitration of coincident nodes.
//! The frame then alternates (multiplicative Schwarz) between a coarse solve
//! over the full step, constrained on its receivers by the mass-weighted
//! projection of the fine velocity field, and a reset-and-subcycle of the
//! fine domain, constrained by temporally interpolated coarse endpoint data.
//! Iterations stop when the interface velocities on both grids stabilize.

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

use crate::fields::{kernel_weights, weight, ParticleSet, Subdomain, SubdomainGrid};
use crate::implicit_step::{
    apply_clamps, apply_collision_dirichlet, solve_step, store_velocities, NewtonSettings,
    StepError, StepProblem, StepSolution,
};
use crate::transfer::{advect, g2p, p2g, TransferError};

#[derive(Debug, Error)]
pub enum SchwarzError {
    #[error("boundary-particle layer is empty (layer width {layer_width})")]
    EmptyBoundaryLayer { layer_width: f64 },
    #[error("coupling configuration error: {0}")]
    CouplingConfiguration(String),
    #[error("temporal interpolation index {m} exceeds sub-cycling ratio {substeps}")]
    TemporalIndex { m: usize, substeps: usize },
    #[error(
        "Schwarz iteration did not converge in {iterations} iterations; \
         last residuals r_B = {last_rb}, r_S = {last_rs}"
    )]
    NonConvergence {
        iterations: usize,
        residuals: Vec<(f64, f64)>,
        last_rb: f64,
        last_rs: f64,
    },
    #[error("{domain} solve failed at Schwarz iteration {iteration}{substep}: {source}", substep = match .substep { Some(m) => format!(", sub-step {m}"), None => String::new() })]
    Solve {
        domain: &'static str,
        iteration: usize,
        substep: Option<usize>,
        source: StepError,
    },
    #[error("{domain} transfer failed at Schwarz iteration {iteration}: {source}")]
    Transfer {
        domain: &'static str,
        iteration: usize,
        source: TransferError,
    },
}

/// Iteration controls for the coupled frame.
#[derive(Debug, Clone, Copy)]
pub struct SchwarzSettings {
    /// Relative interface-velocity tolerance.
    pub eps_conv: f64,
    /// Iteration cap per frame.
    pub k_max: usize,
    /// Sub-cycling ratio M = dT / dt (integer >= 1).
    pub substeps: usize,
}

impl Default for SchwarzSettings {
    fn default() -> Self {
        Self {
            eps_conv: 1e-5,
            k_max: 100,
            substeps: 1,
        }
    }
}

/// Interface node sets for one global frame: the eligible boundary sets
/// Gamma per grid and the receiver subsets after donor arbitration.
#[derive(Debug, Clone)]
pub struct InterfaceSets {
    pub gamma_coarse: Vec<usize>,
    pub gamma_fine: Vec<usize>,
    pub receivers_coarse: Vec<usize>,
    pub receivers_fine: Vec<usize>,
    pub tau_coarse: f64,
    pub tau_fine: f64,
}

/// Full copy of the fine-particle state at the start of a frame.
#[derive(Debug, Clone)]
pub struct FrameCheckpoint {
    position: Vec<Vector2<f64>>,
    velocity: Vec<Vector2<f64>>,
    def_grad: Vec<Matrix2<f64>>,
    affine: Vec<Matrix2<f64>>,
}

impl FrameCheckpoint {
    pub fn capture(particles: &ParticleSet) -> Self {
        Self {
            position: particles.position.clone(),
            velocity: particles.velocity.clone(),
            def_grad: particles.def_grad.clone(),
            affine: particles.affine.clone(),
        }
    }

    pub fn restore(&self, particles: &mut ParticleSet) {
        particles.position.copy_from_slice(&self.position);
        particles.velocity.copy_from_slice(&self.velocity);
        particles.def_grad.copy_from_slice(&self.def_grad);
        particles.affine.copy_from_slice(&self.affine);
    }
}

/// Flags particles lying within `layer_width` of the boundary of the
/// subdomain's particle region. With `partner` given, only boundary portions
/// covered by the partner's particles count (the artificial interface); the
/// free surface of the global body is then excluded.
///
/// The region boundary is resolved on the subdomain's own grid cells: a cell
/// is occupied if it contains a particle, and a particle is a boundary
/// particle if it lies within `layer_width` of some unoccupied (or, with a
/// partner, partner-occupied) cell.
pub fn mark_boundary_particles(
    sub: &mut Subdomain,
    layer_width: f64,
    partner: Option<&ParticleSet>,
) -> Result<usize, SchwarzError> {
    let grid = &sub.grid;
    let h = grid.cell_size;
    let cx = grid.nx - 1;
    let cy = grid.ny - 1;
    let cell_of = |p: Vector2<f64>| -> Option<(usize, usize)> {
        let i = ((p.x - grid.origin.x) / h).floor();
        let j = ((p.y - grid.origin.y) / h).floor();
        if i < 0.0 || j < 0.0 || i >= cx as f64 || j >= cy as f64 {
            None
        } else {
            Some((i as usize, j as usize))
        }
    };

    let mut occupied = vec![false; cx * cy];
    for &p in &sub.particles.position {
        if let Some((i, j)) = cell_of(p) {
            occupied[j * cx + i] = true;
        }
    }
    let mut target = vec![false; cx * cy];
    match partner {
        Some(other) => {
            for &p in &other.position {
                if let Some((i, j)) = cell_of(p) {
                    if !occupied[j * cx + i] {
                        target[j * cx + i] = true;
                    }
                }
            }
        }
        None => {
            for c in 0..cx * cy {
                target[c] = !occupied[c];
            }
        }
    }

    let window = (layer_width / h).ceil() as i64 + 1;
    let mut flagged = 0;
    for p in 0..sub.particles.len() {
        let x = sub.particles.position[p];
        let mut boundary = false;
        if let Some((ci, cj)) = cell_of(x) {
            'search: for dj in -window..=window {
                for di in -window..=window {
                    let ti = ci as i64 + di;
                    let tj = cj as i64 + dj;
                    if ti < 0 || tj < 0 || ti >= cx as i64 || tj >= cy as i64 {
                        continue;
                    }
                    if !target[tj as usize * cx + ti as usize] {
                        continue;
                    }
                    // Distance from the particle to the target cell box.
                    let lo = grid.origin + h * Vector2::new(ti as f64, tj as f64);
                    let dx = (lo.x - x.x).max(x.x - (lo.x + h)).max(0.0);
                    let dy = (lo.y - x.y).max(x.y - (lo.y + h)).max(0.0);
                    if (dx * dx + dy * dy).sqrt() <= layer_width {
                        boundary = true;
                        break 'search;
                    }
                }
            }
        }
        sub.particles.is_boundary[p] = boundary;
        if boundary {
            flagged += 1;
        }
    }
    if flagged == 0 {
        return Err(SchwarzError::EmptyBoundaryLayer { layer_width });
    }
    Ok(flagged)
}

/// Boundary-node mass threshold: 1e-6 times the median particle mass.
pub fn boundary_mass_threshold(particles: &ParticleSet) -> f64 {
    1e-6 * particles.median_mass()
}

fn boundary_node_set(sub: &Subdomain, tau: f64) -> Result<Vec<usize>, SchwarzError> {
    let mut boundary_mass = vec![0.0; sub.grid.num_nodes()];
    for p in 0..sub.particles.len() {
        if !sub.particles.is_boundary[p] {
            continue;
        }
        let stencil = kernel_weights(sub.particles.position[p], &sub.grid, p).map_err(|e| {
            SchwarzError::CouplingConfiguration(format!("boundary particle scatter failed: {e}"))
        })?;
        for e in &stencil.entries {
            boundary_mass[e.node] += sub.particles.mass[p] * e.weight;
        }
    }
    Ok((0..sub.grid.num_nodes())
        .filter(|&idx| sub.grid.active[idx] && boundary_mass[idx] > tau)
        .collect())
}

/// Builds the interface sets for the current frame from boundary-particle
/// mass on both grids, then arbitrates coincident node pairs by nodal mass
/// (ties go to the background domain).
pub fn build_interface_sets(
    coarse: &Subdomain,
    fine: &Subdomain,
) -> Result<InterfaceSets, SchwarzError> {
    let tau_coarse = boundary_mass_threshold(&coarse.particles);
    let tau_fine = boundary_mass_threshold(&fine.particles);
    let gamma_coarse = boundary_node_set(coarse, tau_coarse)?;
    let gamma_fine = boundary_node_set(fine, tau_fine)?;

    let tol = 1e-9 * coarse.grid.cell_size.min(fine.grid.cell_size);
    let in_gamma_fine: std::collections::HashSet<usize> = gamma_fine.iter().copied().collect();
    let mut drop_coarse = vec![false; gamma_coarse.len()];
    let mut drop_fine_nodes = std::collections::HashSet::new();
    for (k, &b) in gamma_coarse.iter().enumerate() {
        let pos = coarse.grid.node_position(b);
        if let Some(j) = fine.grid.node_at_position(pos, tol) {
            if in_gamma_fine.contains(&j) {
                // Coincident pair: the side with larger nodal mass donates
                // and is therefore not a receiver.
                if coarse.grid.mass[b] >= fine.grid.mass[j] {
                    drop_coarse[k] = true;
                } else {
                    drop_fine_nodes.insert(j);
                }
            }
        }
    }
    let receivers_coarse: Vec<usize> = gamma_coarse
        .iter()
        .enumerate()
        .filter(|&(k, _)| !drop_coarse[k])
        .map(|(_, &b)| b)
        .collect();
    let receivers_fine: Vec<usize> = gamma_fine
        .iter()
        .filter(|j| !drop_fine_nodes.contains(j))
        .copied()
        .collect();

    if receivers_coarse.is_empty() || receivers_fine.is_empty() {
        return Err(SchwarzError::CouplingConfiguration(format!(
            "empty receiver set after arbitration (coarse {}, fine {})",
            receivers_coarse.len(),
            receivers_fine.len()
        )));
    }
    Ok(InterfaceSets {
        gamma_coarse,
        gamma_fine,
        receivers_coarse,
        receivers_fine,
        tau_coarse,
        tau_fine,
    })
}

/// Mass-weighted projection of the fine grid velocity field onto coarse
/// receiver nodes:
///   v_I = sum_j m_j v_j N_I(x_j) / (sum_j m_j N_I(x_j) + eps_tol)
/// over active fine nodes in the coarse node's kernel support. Returns the
/// projected velocities and the number of vacuum receivers (zero support).
pub fn project_fine_to_coarse(
    fine: &SubdomainGrid,
    coarse: &SubdomainGrid,
    receivers: &[usize],
    eps_tol: f64,
) -> (Vec<Vector2<f64>>, usize) {
    let hb = coarse.cell_size;
    let hs = fine.cell_size;
    let support = 1.5 * hb;
    let mut vacuum = 0;
    let values = receivers
        .iter()
        .map(|&idx| {
            let xi = coarse.node_position(idx);
            let i_lo = (((xi.x - support - fine.origin.x) / hs).floor() as i64).max(0);
            let i_hi =
                (((xi.x + support - fine.origin.x) / hs).ceil() as i64).min(fine.nx as i64 - 1);
            let j_lo = (((xi.y - support - fine.origin.y) / hs).floor() as i64).max(0);
            let j_hi =
                (((xi.y + support - fine.origin.y) / hs).ceil() as i64).min(fine.ny as i64 - 1);
            let mut num = Vector2::zeros();
            let mut den = 0.0;
            for j in j_lo..=j_hi {
                for i in i_lo..=i_hi {
                    let node = fine.node_index(i as usize, j as usize);
                    if !fine.active[node] {
                        continue;
                    }
                    let w = weight((fine.node_position(node) - xi) / hb);
                    if w == 0.0 {
                        continue;
                    }
                    num += fine.mass[node] * w * fine.velocity[node];
                    den += fine.mass[node] * w;
                }
            }
            if den == 0.0 {
                vacuum += 1;
            }
            num / (den + eps_tol)
        })
        .collect();
    (values, vacuum)
}

/// Pointwise shape-function interpolation of a coarse velocity field at fine
/// receiver nodes: v_j = sum_I field_I N_I(x_j), taken over active coarse
/// nodes and renormalized by their weight sum. The field is undefined off
/// the coarse material, so fringe receivers whose stencil clips the active
/// set would otherwise sample artificially dampened velocities. A receiver
/// outside the coarse kernel support entirely is a configuration error.
pub fn interpolate_coarse_to_fine(
    coarse: &SubdomainGrid,
    field: &[Vector2<f64>],
    fine: &SubdomainGrid,
    receivers: &[usize],
) -> Result<Vec<Vector2<f64>>, SchwarzError> {
    receivers
        .iter()
        .map(|&idx| {
            let x = fine.node_position(idx);
            let stencil = kernel_weights(x, coarse, idx).map_err(|_| {
                SchwarzError::CouplingConfiguration(format!(
                    "fine receiver at ({}, {}) lies outside the coarse grid",
                    x.x, x.y
                ))
            })?;
            let mut v = Vector2::zeros();
            let mut wsum = 0.0;
            for e in &stencil.entries {
                if coarse.active[e.node] {
                    v += e.weight * field[e.node];
                    wsum += e.weight;
                }
            }
            if wsum <= 0.0 {
                return Err(SchwarzError::CouplingConfiguration(format!(
                    "fine receiver at ({}, {}) has no active coarse support",
                    x.x, x.y
                )));
            }
            Ok(v / wsum)
        })
        .collect()
}

/// Linear temporal interpolation at sub-step `m` of `substeps`.
pub fn temporal_interp(
    v_n: &[Vector2<f64>],
    v_np1: &[Vector2<f64>],
    m: usize,
    substeps: usize,
) -> Result<Vec<Vector2<f64>>, SchwarzError> {
    if m > substeps {
        return Err(SchwarzError::TemporalIndex { m, substeps });
    }
    let alpha = m as f64 / substeps as f64;
    Ok(v_n
        .iter()
        .zip(v_np1)
        .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
        .collect())
}

/// Relative change between consecutive interface-velocity iterates, stacked
/// over receiver nodes. A zero denominator counts as converged when the
/// change is below an absolute floor of 1e-14; otherwise the absolute change
/// is used.
pub fn convergence_residual(prev: &[Vector2<f64>], next: &[Vector2<f64>]) -> f64 {
    debug_assert_eq!(prev.len(), next.len());
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in prev.iter().zip(next) {
        num += (b - a).norm_squared();
        den += b.norm_squared();
    }
    let num = num.sqrt();
    let den = den.sqrt();
    if den == 0.0 {
        if num <= 1e-14 {
            0.0
        } else {
            num
        }
    } else {
        num / den
    }
}

/// Interface residuals for both grids and the combined convergence test.
pub fn convergence_residuals(
    prev_coarse: &[Vector2<f64>],
    next_coarse: &[Vector2<f64>],
    prev_fine: &[Vector2<f64>],
    next_fine: &[Vector2<f64>],
) -> (f64, f64) {
    (
        convergence_residual(prev_coarse, next_coarse),
        convergence_residual(prev_fine, next_fine),
    )
}

/// Outcome of one coupled frame.
#[derive(Debug, Clone)]
pub struct FrameReport {
    /// Schwarz iterations used.
    pub iterations: usize,
    /// (r_B, r_S) per iteration.
    pub residuals: Vec<(f64, f64)>,
    pub coarse_newton_iterations: usize,
    pub fine_newton_iterations: usize,
    /// Receivers with empty fine support seen by the projection.
    pub vacuum_receivers: usize,
    pub coarse_wall_s: f64,
    pub fine_wall_s: f64,
    pub coarse_solution: StepSolution,
    pub fine_solution: StepSolution,
}

/// Paired coarse/fine subdomains plus iteration state.
#[derive(Debug, Clone)]
pub struct SchwarzCoupler {
    pub coarse: Subdomain,
    pub fine: Subdomain,
    pub settings: SchwarzSettings,
    pub newton: NewtonSettings,
    /// Projection regularization mass, 1e-12 times the total fine mass.
    pub eps_tol: f64,
    pub frame_index: usize,
}

impl SchwarzCoupler {
    pub fn new(
        coarse: Subdomain,
        fine: Subdomain,
        settings: SchwarzSettings,
        newton: NewtonSettings,
    ) -> Result<Self, SchwarzError> {
        if fine.grid.cell_size > coarse.grid.cell_size {
            return Err(SchwarzError::CouplingConfiguration(format!(
                "fine cell size {} exceeds coarse cell size {}",
                fine.grid.cell_size, coarse.grid.cell_size
            )));
        }
        if settings.substeps < 1 {
            return Err(SchwarzError::CouplingConfiguration(
                "sub-cycling ratio must be a positive integer".into(),
            ));
        }
        let expected = fine.dt * settings.substeps as f64;
        if (coarse.dt - expected).abs() > 1e-12 * coarse.dt {
            return Err(SchwarzError::CouplingConfiguration(format!(
                "coarse step {} != substeps {} x fine step {}",
                coarse.dt, settings.substeps, fine.dt
            )));
        }
        if settings.eps_conv <= 0.0 {
            return Err(SchwarzError::CouplingConfiguration(
                "eps_conv must be positive".into(),
            ));
        }
        let eps_tol = 1e-12 * fine.particles.total_mass();
        Ok(Self {
            coarse,
            fine,
            settings,
            newton,
            eps_tol,
            frame_index: 0,
        })
    }

    fn apply_receiver_bc(grid: &mut SubdomainGrid, receivers: &[usize], values: &[Vector2<f64>]) {
        for (&idx, &v) in receivers.iter().zip(values) {
            if grid.active[idx] {
                grid.schwarz_receiver[idx] = true;
                grid.prescribed_velocity[idx] = v;
            }
        }
    }

    fn apply_static_constraints(sub: &mut Subdomain) {
        let clamps = sub.clamps.clone();
        apply_clamps(&mut sub.grid, &clamps);
        let predictor = sub.dt * sub.gravity;
        let planes = sub.planes.clone();
        for plane in &planes {
            apply_collision_dirichlet(&mut sub.grid, plane, predictor);
        }
    }

    /// Advances the coupled system by one coarse step, alternating subdomain
    /// solves until both interface residuals drop below `eps_conv`.
    pub fn advance_frame(&mut self) -> Result<FrameReport, SchwarzError> {
        let substeps = self.settings.substeps;
        let frame = self.frame_index;

        // Step 0: checkpoint fine particles, initial P2G on both domains,
        // interface sets for the frame.
        let checkpoint = FrameCheckpoint::capture(&self.fine.particles);
        p2g(&self.coarse.particles, &mut self.coarse.grid).map_err(|e| {
            SchwarzError::Transfer {
                domain: "coarse",
                iteration: 0,
                source: e,
            }
        })?;
        p2g(&self.fine.particles, &mut self.fine.grid).map_err(|e| SchwarzError::Transfer {
            domain: "fine",
            iteration: 0,
            source: e,
        })?;
        let sets = build_interface_sets(&self.coarse, &self.fine)?;

        // Frozen t_n coarse grid state; every iteration rebuilds the coarse
        // problem from it and only the Newton initial guess is warm-started.
        let coarse_tn = self.coarse.grid.clone();
        let fine_bc_n = interpolate_coarse_to_fine(
            &coarse_tn,
            &coarse_tn.velocity,
            &self.fine.grid,
            &sets.receivers_fine,
        )?;

        // Iterate-zero interface data: the projection of the fine t_n field
        // (the previous step's particle velocities through P2G) and the
        // interpolation of the coarse t_n field.
        let (mut bc_b, vacuum0) = project_fine_to_coarse(
            &self.fine.grid,
            &coarse_tn,
            &sets.receivers_coarse,
            self.eps_tol,
        );
        let mut prev_bc_s = fine_bc_n.clone();

        let mut residuals: Vec<(f64, f64)> = Vec::new();
        let mut converged = false;
        let mut coarse_warm: Option<Vec<Vector2<f64>>> = None;
        let mut coarse_solution: Option<StepSolution> = None;
        let mut fine_solution: Option<StepSolution> = None;
        let mut coarse_newton = 0;
        let mut fine_newton = 0;
        let mut vacuum_total = vacuum0;
        let mut coarse_wall = 0.0;
        let mut fine_wall = 0.0;

        for k in 0..self.settings.k_max {
            // 1. Coarse solve over the full step, receivers constrained by
            // the projection of the fine velocity field.
            let t0 = std::time::Instant::now();
            self.coarse.grid = coarse_tn.clone();
            Self::apply_receiver_bc(&mut self.coarse.grid, &sets.receivers_coarse, &bc_b);
            Self::apply_static_constraints(&mut self.coarse);
            let problem =
                StepProblem::from_subdomain(&self.coarse).map_err(|e| SchwarzError::Solve {
                    domain: "coarse",
                    iteration: k,
                    substep: None,
                    source: e,
                })?;
            let sol_b = solve_step(&problem, &self.newton, coarse_warm.as_deref()).map_err(
                |e| SchwarzError::Solve {
                    domain: "coarse",
                    iteration: k,
                    substep: None,
                    source: e,
                },
            )?;
            coarse_newton += sol_b.iterations;
            coarse_warm = Some(sol_b.xhat.clone());
            coarse_wall += t0.elapsed().as_secs_f64();

            // 2. Fine sub-cycling from the restored t_n particle state.
            let t1 = std::time::Instant::now();
            checkpoint.restore(&mut self.fine.particles);
            p2g(&self.fine.particles, &mut self.fine.grid).map_err(|e| {
                SchwarzError::Transfer {
                    domain: "fine",
                    iteration: k,
                    source: e,
                }
            })?;
            let bc_s_np1 = interpolate_coarse_to_fine(
                &coarse_tn,
                &sol_b.velocity,
                &self.fine.grid,
                &sets.receivers_fine,
            )?;
            for m in 1..=substeps {
                let bc_m = temporal_interp(&fine_bc_n, &bc_s_np1, m, substeps)?;
                Self::apply_receiver_bc(&mut self.fine.grid, &sets.receivers_fine, &bc_m);
                Self::apply_static_constraints(&mut self.fine);
                let problem =
                    StepProblem::from_subdomain(&self.fine).map_err(|e| SchwarzError::Solve {
                        domain: "fine",
                        iteration: k,
                        substep: Some(m),
                        source: e,
                    })?;
                let sol_s =
                    solve_step(&problem, &self.newton, None).map_err(|e| SchwarzError::Solve {
                        domain: "fine",
                        iteration: k,
                        substep: Some(m),
                        source: e,
                    })?;
                fine_newton += sol_s.iterations;
                store_velocities(&mut self.fine.grid, &sol_s.velocity);
                g2p(&self.fine.grid, &mut self.fine.particles, self.fine.dt).map_err(|e| {
                    SchwarzError::Transfer {
                        domain: "fine",
                        iteration: k,
                        source: e,
                    }
                })?;
                advect(&mut self.fine.particles, &self.fine.grid, self.fine.dt).map_err(|e| {
                    SchwarzError::Transfer {
                        domain: "fine",
                        iteration: k,
                        source: e,
                    }
                })?;
                p2g(&self.fine.particles, &mut self.fine.grid).map_err(|e| {
                    SchwarzError::Transfer {
                        domain: "fine",
                        iteration: k,
                        source: e,
                    }
                })?;
                fine_solution = Some(sol_s);
            }
            fine_wall += t1.elapsed().as_secs_f64();

            // 3. Convergence check: compare the post-sweep projection of the
            // new fine field against the value applied this iteration, and
            // the interpolated coarse endpoint against the previous iterate.
            let (fresh_bc_b, vacuum) = project_fine_to_coarse(
                &self.fine.grid,
                &coarse_tn,
                &sets.receivers_coarse,
                self.eps_tol,
            );
            vacuum_total += vacuum;
            let (r_b, r_s) =
                convergence_residuals(&bc_b, &fresh_bc_b, &prev_bc_s, &bc_s_np1);
            residuals.push((r_b, r_s));
            bc_b = fresh_bc_b;
            prev_bc_s = bc_s_np1;
            coarse_solution = Some(sol_b);
            if r_b <= self.settings.eps_conv && r_s <= self.settings.eps_conv {
                converged = true;
                break;
            }
        }

        if !converged {
            let (last_rb, last_rs) = residuals.last().copied().unwrap_or((f64::NAN, f64::NAN));
            return Err(SchwarzError::NonConvergence {
                iterations: residuals.len(),
                residuals,
                last_rb,
                last_rs,
            });
        }

        // 4. Post-convergence: fine particles are already at t_{n+1}; the
        // coarse particles receive their single G2P + advection pass.
        let sol_b = coarse_solution.expect("converged frame has a coarse solution");
        store_velocities(&mut self.coarse.grid, &sol_b.velocity);
        g2p(&self.coarse.grid, &mut self.coarse.particles, self.coarse.dt).map_err(|e| {
            SchwarzError::Transfer {
                domain: "coarse",
                iteration: residuals.len(),
                source: e,
            }
        })?;
        advect(&mut self.coarse.particles, &self.coarse.grid, self.coarse.dt).map_err(|e| {
            SchwarzError::Transfer {
                domain: "coarse",
                iteration: residuals.len(),
                source: e,
            }
        })?;

        self.frame_index = frame + 1;

        let fine_solution = fine_solution.expect("at least one fine sub-step ran");
        Ok(FrameReport {
            iterations: residuals.len(),
            residuals,
            coarse_newton_iterations: coarse_newton,
            fine_newton_iterations: fine_newton,
            vacuum_receivers: vacuum_total,
            coarse_wall_s: coarse_wall,
            fine_wall_s: fine_wall,
            coarse_solution: sol_b,
            fine_solution,
        })
    }
}
