//! Benchmark scenarios: declarative configuration, scenario construction,
//! the quasi-static driving loop, and scenario-specific measurements.
//!
//! Static equilibrium is reached by advancing backward-Euler frames until the
//! max-norm grid velocity falls below the scenario's static tolerance on
//! every grid; L-stable damping at large steps turns each frame into an
//! effective quasi-static solve.

mod sampling;

pub use sampling::{l2_stress_error, sample_stress, FieldSample};

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

use crate::constitutive::{cauchy_stress, ConstitutiveError, MaterialModel};
use crate::fields::{
    seed_particles, ClampRegion, CollisionMode, CollisionPlane, Subdomain, SubdomainGrid,
    SubdomainLabel,
};
use crate::implicit_step::{
    apply_clamps, apply_collision_dirichlet, solve_step, store_velocities, NewtonSettings,
    StepError, StepProblem, StepSolution,
};
use crate::oracles::{HertzSolution, InclusionSolution, OracleError};
use crate::schwarz::{
    mark_boundary_particles, FrameReport, SchwarzCoupler, SchwarzError, SchwarzSettings,
};
use crate::transfer::{advect, g2p, p2g, TransferError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("scenario validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Constitutive(#[from] ConstitutiveError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Schwarz(#[from] SchwarzError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("every sample point was flagged for empty support")]
    AllSamplesFlagged,
    #[error("measurement unavailable: {0}")]
    Measurement(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Cantilever,
    Hertz,
    Inclusion,
    /// Clamped/stretched elastic bar (the `custom` scenario).
    Bar,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Cantilever => "cantilever",
            ScenarioKind::Hertz => "hertz",
            ScenarioKind::Inclusion => "inclusion",
            ScenarioKind::Bar => "bar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Single,
    Dual,
}

impl RunMode {
    pub fn name(&self) -> &'static str {
        match self {
            RunMode::Single => "single",
            RunMode::Dual => "dual",
        }
    }
}

/// Scenario geometry. Lengths in meters; splits are fractions of the main
/// dimension defining the dual-domain decomposition (the coarse domain spans
/// up to `split_hi`, the fine domain starts at `split_lo`).
#[derive(Debug, Clone, Copy)]
pub enum Geometry {
    Cantilever {
        length: f64,
        thickness: f64,
        split_lo: f64,
        split_hi: f64,
    },
    Hertz {
        radius: f64,
        /// Height of the fine band above the plane.
        fine_band: f64,
        /// Vertical extent of the coarse/fine overlap.
        overlap_band: f64,
    },
    Inclusion {
        domain_size: f64,
        inclusion_radius: f64,
        /// Inner radius of the coarse domain (the coarse hole).
        hole_radius: f64,
        /// Outer radius of the fine disk.
        fine_radius: f64,
    },
    Bar {
        length: f64,
        thickness: f64,
        split_lo: f64,
        split_hi: f64,
        /// Prescribed horizontal velocity of the right grip.
        end_velocity: f64,
    },
}

/// Declarative description of one experiment.
#[derive(Debug, Clone)]
pub struct BenchmarkScenario {
    pub kind: ScenarioKind,
    pub mode: RunMode,
    pub geometry: Geometry,
    /// Material table; the inclusion scenario uses [matrix, inclusion].
    pub materials: Vec<MaterialModel>,
    pub h_fine: f64,
    pub h_coarse: f64,
    /// Coarse (global frame) time step; the fine step is dt_coarse/substeps.
    pub dt_coarse: f64,
    pub substeps: usize,
    pub particles_per_cell_axis: usize,
    pub gravity: Vector2<f64>,
    /// Inclusion eigenstrain magnitude delta (F0 = (1 - delta) I).
    pub eigenstrain: f64,
    pub max_frames: usize,
    pub static_tolerance: f64,
    pub pad_cells: usize,
}

impl BenchmarkScenario {
    pub fn dt_fine(&self) -> f64 {
        self.dt_coarse / self.substeps as f64
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.h_fine <= 0.0 || self.h_coarse <= 0.0 {
            return Err(BenchError::Validation("cell sizes must be positive".into()));
        }
        if self.h_fine > self.h_coarse {
            return Err(BenchError::Validation(format!(
                "h_fine {} must not exceed h_coarse {}",
                self.h_fine, self.h_coarse
            )));
        }
        if self.substeps < 1 {
            return Err(BenchError::Validation(
                "substeps must be a positive integer".into(),
            ));
        }
        if self.dt_coarse <= 0.0 {
            return Err(BenchError::Validation("dt must be positive".into()));
        }
        if self.materials.is_empty() {
            return Err(BenchError::Validation("material table is empty".into()));
        }
        if self.particles_per_cell_axis < 1 {
            return Err(BenchError::Validation(
                "particles per cell axis must be >= 1".into(),
            ));
        }
        match self.geometry {
            Geometry::Cantilever {
                length,
                thickness,
                split_lo,
                split_hi,
            }
            | Geometry::Bar {
                length,
                thickness,
                split_lo,
                split_hi,
                ..
            } => {
                if length <= 0.0 || thickness <= 0.0 {
                    return Err(BenchError::Validation("degenerate geometry".into()));
                }
                if self.mode == RunMode::Dual && !(split_lo < split_hi && split_lo > 0.0 && split_hi < 1.0)
                {
                    return Err(BenchError::Validation(format!(
                        "dual mode requires 0 < split_lo < split_hi < 1, got ({split_lo}, {split_hi})"
                    )));
                }
            }
            Geometry::Hertz {
                radius,
                fine_band,
                overlap_band,
            } => {
                if radius <= 0.0 {
                    return Err(BenchError::Validation("radius must be positive".into()));
                }
                if self.mode == RunMode::Dual
                    && !(overlap_band > 0.0 && fine_band > overlap_band && fine_band < radius)
                {
                    return Err(BenchError::Validation(
                        "dual mode requires 0 < overlap_band < fine_band < radius".into(),
                    ));
                }
            }
            Geometry::Inclusion {
                domain_size,
                inclusion_radius,
                hole_radius,
                fine_radius,
            } => {
                if domain_size <= 0.0 || inclusion_radius <= 0.0 {
                    return Err(BenchError::Validation("degenerate geometry".into()));
                }
                if inclusion_radius >= domain_size / 2.0 {
                    return Err(BenchError::Validation(
                        "inclusion must fit inside the domain".into(),
                    ));
                }
                if self.mode == RunMode::Dual
                    && !(inclusion_radius < hole_radius
                        && hole_radius < fine_radius
                        && fine_radius < domain_size / 2.0)
                {
                    return Err(BenchError::Validation(
                        "dual mode requires inclusion < hole < fine radius < domain/2".into(),
                    ));
                }
                if self.materials.len() < 2 {
                    return Err(BenchError::Validation(
                        "inclusion scenario needs [matrix, inclusion] materials".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Gravity level that realizes a target gravito-bending parameter for the
/// cantilever: Gamma = 12 rho g L^3 (1 - nu^2) / (E t^2) with unit depth.
pub fn cantilever_gravity_for_gamma(
    gamma: f64,
    length: f64,
    thickness: f64,
    mat: &MaterialModel,
) -> f64 {
    gamma * mat.young * thickness * thickness
        / (12.0 * mat.density * length.powi(3) * (1.0 - mat.poisson * mat.poisson))
}

/// Per-frame progression record.
#[derive(Debug, Clone)]
pub struct FrameLog {
    pub frame: usize,
    pub grid_velocity_inf: f64,
    pub schwarz_iterations: Option<usize>,
    pub schwarz_residuals: Vec<(f64, f64)>,
    pub newton_iterations: usize,
    pub vacuum_receivers: usize,
    pub wall_s: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct EquilibriumReport {
    pub frames: usize,
    pub reached: bool,
    pub final_velocity_inf: f64,
}

/// Live state of a built scenario.
pub enum RunState {
    Single {
        sub: Subdomain,
        initial_positions: Vec<Vector2<f64>>,
        last_solution: Option<StepSolution>,
    },
    Dual {
        coupler: SchwarzCoupler,
        initial_coarse: Vec<Vector2<f64>>,
        initial_fine: Vec<Vector2<f64>>,
        last_report: Option<FrameReport>,
    },
}

pub struct BuiltScenario {
    pub config: BenchmarkScenario,
    pub newton: NewtonSettings,
    pub schwarz_settings: SchwarzSettings,
    pub state: RunState,
    pub frame_logs: Vec<FrameLog>,
}

fn grid_for(
    particles: &crate::fields::ParticleSet,
    h: f64,
    pads: (usize, usize, usize, usize),
) -> SubdomainGrid {
    let mut min = Vector2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Vector2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &particles.position {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    let threshold = 1e-12 * particles.median_mass();
    let (pl, pr, pb, pt) = pads;
    let i0 = (min.x / h).floor() as i64 - pl as i64;
    let j0 = (min.y / h).floor() as i64 - pb as i64;
    let i1 = (max.x / h).ceil() as i64 + pr as i64;
    let j1 = (max.y / h).ceil() as i64 + pt as i64;
    SubdomainGrid::new(
        Vector2::new(i0 as f64 * h, j0 as f64 * h),
        h,
        (i1 - i0) as usize + 1,
        (j1 - j0) as usize + 1,
        threshold,
    )
}

struct DomainSpec<'a> {
    label: SubdomainLabel,
    region: Box<dyn Fn(Vector2<f64>) -> Option<usize> + 'a>,
    seed_min: Vector2<f64>,
    seed_max: Vector2<f64>,
    h: f64,
    dt: f64,
    pads: (usize, usize, usize, usize),
    planes: Vec<CollisionPlane>,
    clamps: Vec<ClampRegion>,
}

fn build_domain(spec: DomainSpec, scn: &BenchmarkScenario) -> Result<Subdomain, BenchError> {
    let densities: Vec<f64> = scn.materials.iter().map(|m| m.density).collect();
    let mut particles = seed_particles(
        &spec.region,
        spec.seed_min,
        spec.seed_max,
        spec.h,
        scn.particles_per_cell_axis,
        &densities,
    );
    if particles.is_empty() {
        return Err(BenchError::Validation(format!(
            "{:?} subdomain seeded no particles",
            spec.label
        )));
    }
    // Inclusion particles carry the eigenstrain as an initial deformation
    // gradient F0 = (1 - delta) I.
    if matches!(scn.kind, ScenarioKind::Inclusion) {
        let f0 = Matrix2::identity() * (1.0 - scn.eigenstrain);
        for p in 0..particles.len() {
            if particles.material[p] == 1 {
                particles.def_grad[p] = f0;
            }
        }
    }
    let grid = grid_for(&particles, spec.h, spec.pads);
    Ok(Subdomain {
        label: spec.label,
        grid,
        particles,
        materials: scn.materials.clone(),
        dt: spec.dt,
        gravity: scn.gravity,
        planes: spec.planes,
        clamps: spec.clamps,
    })
}

const BIG: f64 = 1e9;

fn band_clamp(x_lo: f64, x_hi: f64, velocity: Vector2<f64>) -> ClampRegion {
    ClampRegion {
        min: Vector2::new(x_lo, -BIG),
        max: Vector2::new(x_hi, BIG),
        velocity,
    }
}

/// Builds the fully initialized subdomain(s) and, in dual mode, the Schwarz
/// coupler with marked boundary particles.
pub fn build_scenario(
    scn: &BenchmarkScenario,
    schwarz_settings: SchwarzSettings,
    newton: NewtonSettings,
) -> Result<BuiltScenario, BenchError> {
    scn.validate()?;
    let mut schwarz_settings = schwarz_settings;
    schwarz_settings.substeps = scn.substeps;
    let dt_fine = scn.dt_fine();
    let pad = scn.pad_cells;
    let pads_sym = (pad, pad, pad, pad);

    // Geometric body region and per-scenario constraints.
    let state = match scn.geometry {
        Geometry::Cantilever {
            length,
            thickness,
            split_lo,
            split_hi,
        }
        | Geometry::Bar {
            length,
            thickness,
            split_lo,
            split_hi,
            ..
        } => {
            let body = move |p: Vector2<f64>| {
                if p.x >= 0.0 && p.x <= length && p.y >= 0.0 && p.y <= thickness {
                    Some(0)
                } else {
                    None
                }
            };
            let clamp_w = scn.h_coarse;
            let slack = 1e-9 * scn.h_coarse;
            let left_clamp = band_clamp(-BIG, clamp_w + slack, Vector2::zeros());
            let right_grip = match scn.geometry {
                Geometry::Bar { end_velocity, .. } => Some(band_clamp(
                    length - clamp_w - slack,
                    BIG,
                    Vector2::new(end_velocity, 0.0),
                )),
                _ => None,
            };
            // The cantilever swings well below its initial bounding box.
            let extra_drop = match scn.kind {
                ScenarioKind::Cantilever => (0.8 * length / scn.h_fine).ceil() as usize,
                _ => 0,
            };
            match scn.mode {
                RunMode::Single => {
                    let mut clamps = vec![left_clamp];
                    clamps.extend(right_grip);
                    let sub = build_domain(
                        DomainSpec {
                            label: SubdomainLabel::Background,
                            region: Box::new(body),
                            seed_min: Vector2::new(0.0, 0.0),
                            seed_max: Vector2::new(length, thickness),
                            h: scn.h_fine,
                            dt: dt_fine,
                            pads: (pad, pad + extra_drop / 2, pad + extra_drop, pad),
                            planes: vec![],
                            clamps,
                        },
                        scn,
                    )?;
                    single_state(sub)
                }
                RunMode::Dual => {
                    let cut_coarse = split_hi * length;
                    let cut_fine = split_lo * length;
                    let coarse = build_domain(
                        DomainSpec {
                            label: SubdomainLabel::Background,
                            region: Box::new(body),
                            seed_min: Vector2::new(0.0, 0.0),
                            seed_max: Vector2::new(cut_coarse, thickness),
                            h: scn.h_coarse,
                            dt: scn.dt_coarse,
                            pads: (pad, pad + extra_drop / 2, pad + extra_drop, pad),
                            planes: vec![],
                            clamps: vec![left_clamp],
                        },
                        scn,
                    )?;
                    let fine = build_domain(
                        DomainSpec {
                            label: SubdomainLabel::Refined,
                            region: Box::new(body),
                            seed_min: Vector2::new(cut_fine, 0.0),
                            seed_max: Vector2::new(length, thickness),
                            h: scn.h_fine,
                            dt: dt_fine,
                            pads: (pad, pad + extra_drop / 2, pad + extra_drop, pad),
                            planes: vec![],
                            clamps: right_grip.into_iter().collect(),
                        },
                        scn,
                    )?;
                    dual_state(coarse, fine, scn, schwarz_settings, newton)?
                }
            }
        }
        Geometry::Hertz {
            radius,
            fine_band,
            overlap_band,
        } => {
            let center = Vector2::new(0.0, radius);
            let body = move |p: Vector2<f64>| {
                if (p - center).norm() <= radius && p.y <= radius {
                    Some(0)
                } else {
                    None
                }
            };
            let plane = CollisionPlane {
                point: Vector2::zeros(),
                normal: Vector2::new(0.0, 1.0),
                mode: CollisionMode::Slip,
            };
            match scn.mode {
                RunMode::Single => {
                    let sub = build_domain(
                        DomainSpec {
                            label: SubdomainLabel::Background,
                            region: Box::new(body),
                            seed_min: Vector2::new(-radius, 0.0),
                            seed_max: Vector2::new(radius, radius),
                            h: scn.h_fine,
                            dt: dt_fine,
                            pads: pads_sym,
                            planes: vec![plane],
                            clamps: vec![],
                        },
                        scn,
                    )?;
                    single_state(sub)
                }
                RunMode::Dual => {
                    let fine_top = fine_band;
                    let coarse_bottom = fine_band - overlap_band;
                    let coarse = build_domain(
                        DomainSpec {
                            label: SubdomainLabel::Background,
                            region: Box::new(move |p| {
                                if p.y >= coarse_bottom { body(p) } else { None }
                            }),
                            seed_min: Vector2::new(-radius, coarse_bottom),
                            seed_max: Vector2::new(radius, radius),
                            h: scn.h_coarse,
                            dt: scn.dt_coarse,
                            pads: pads_sym,
                            planes: vec![plane],
                            clamps: vec![],
                        },
                        scn,
                    )?;
                    let fine = build_domain(
                        DomainSpec {
                            label: SubdomainLabel::Refined,
                            region: Box::new(move |p| if p.y <= fine_top { body(p) } else { None }),
                            seed_min: Vector2::new(-radius, 0.0),
                            seed_max: Vector2::new(radius, fine_top),
                            h: scn.h_fine,
                            dt: dt_fine,
                            pads: pads_sym,
                            planes: vec![plane],
                            clamps: vec![],
                        },
                        scn,
                    )?;
                    dual_state(coarse, fine, scn, schwarz_settings, newton)?
                }
            }
        }
        Geometry::Inclusion {
            domain_size,
            inclusion_radius,
            hole_radius,
            fine_radius,
        } => {
            let center = Vector2::new(domain_size / 2.0, domain_size / 2.0);
            let body = move |p: Vector2<f64>| {
                if p.x < 0.0 || p.x > domain_size || p.y < 0.0 || p.y > domain_size {
                    None
                } else if (p - center).norm() <= inclusion_radius {
                    Some(1)
                } else {
                    Some(0)
                }
            };
            let clamp_w = scn.h_coarse;
            let slack = 1e-9 * scn.h_coarse;
            let edge_clamps = vec![
                band_clamp(-BIG, clamp_w + slack, Vector2::zeros()),
                band_clamp(domain_size - clamp_w - slack, BIG, Vector2::zeros()),
                ClampRegion {
                    min: Vector2::new(-BIG, -BIG),
                    max: Vector2::new(BIG, clamp_w + slack),
                    velocity: Vector2::zeros(),
                },
                ClampRegion {
                    min: Vector2::new(-BIG, domain_size - clamp_w - slack),
                    max: Vector2::new(BIG, BIG),
                    velocity: Vector2::zeros(),
                },
            ];
            match scn.mode {
                RunMode::Single => {
                    let sub = build_domain(
                        DomainSpec {
                            label: SubdomainLabel::Background,
                            region: Box::new(body),
                            seed_min: Vector2::zeros(),
                            seed_max: Vector2::new(domain_size, domain_size),
                            h: scn.h_fine,
                            dt: dt_fine,
                            pads: pads_sym,
                            planes: vec![],
                            clamps: edge_clamps,
                        },
                        scn,
                    )?;
                    single_state(sub)
                }
                RunMode::Dual => {
                    let coarse = build_domain(
                        DomainSpec {
                            label: SubdomainLabel::Background,
                            region: Box::new(move |p| {
                                if (p - center).norm() >= hole_radius {
                                    body(p)
                                } else {
                                    None
                                }
                            }),
                            seed_min: Vector2::zeros(),
                            seed_max: Vector2::new(domain_size, domain_size),
                            h: scn.h_coarse,
                            dt: scn.dt_coarse,
                            pads: pads_sym,
                            planes: vec![],
                            clamps: edge_clamps,
                        },
                        scn,
                    )?;
                    let fine = build_domain(
                        DomainSpec {
                            label: SubdomainLabel::Refined,
                            region: Box::new(move |p| {
                                if (p - center).norm() <= fine_radius {
                                    body(p)
                                } else {
                                    None
                                }
                            }),
                            seed_min: center - Vector2::new(fine_radius, fine_radius),
                            seed_max: center + Vector2::new(fine_radius, fine_radius),
                            h: scn.h_fine,
                            dt: dt_fine,
                            pads: pads_sym,
                            planes: vec![],
                            clamps: vec![],
                        },
                        scn,
                    )?;
                    dual_state(coarse, fine, scn, schwarz_settings, newton)?
                }
            }
        }
    };

    Ok(BuiltScenario {
        config: scn.clone(),
        newton,
        schwarz_settings,
        state,
        frame_logs: Vec::new(),
    })
}

fn single_state(sub: Subdomain) -> RunState {
    let initial_positions = sub.particles.position.clone();
    RunState::Single {
        sub,
        initial_positions,
        last_solution: None,
    }
}

fn dual_state(
    mut coarse: Subdomain,
    mut fine: Subdomain,
    scn: &BenchmarkScenario,
    settings: SchwarzSettings,
    newton: NewtonSettings,
) -> Result<RunState, BenchError> {
    // Boundary layers one own-cell wide, restricted to the portions covered
    // by the partner (the artificial interface).
    mark_boundary_particles(&mut coarse, scn.h_coarse, Some(&fine.particles))?;
    mark_boundary_particles(&mut fine, scn.h_fine, Some(&coarse.particles))?;
    let initial_coarse = coarse.particles.position.clone();
    let initial_fine = fine.particles.position.clone();
    let coupler = SchwarzCoupler::new(coarse, fine, settings, newton)?;
    Ok(RunState::Dual {
        coupler,
        initial_coarse,
        initial_fine,
        last_report: None,
    })
}

/// Advances one subdomain by one backward-Euler step (P2G, constraints,
/// implicit solve, G2P, advection) and returns the solve.
pub fn single_step(sub: &mut Subdomain, newton: &NewtonSettings) -> Result<StepSolution, BenchError> {
    p2g(&sub.particles, &mut sub.grid)?;
    let clamps = sub.clamps.clone();
    apply_clamps(&mut sub.grid, &clamps);
    let predictor = sub.dt * sub.gravity;
    let planes = sub.planes.clone();
    for plane in &planes {
        apply_collision_dirichlet(&mut sub.grid, plane, predictor);
    }
    let problem = StepProblem::from_subdomain(sub)?;
    let solution = solve_step(&problem, newton, None)?;
    store_velocities(&mut sub.grid, &solution.velocity);
    g2p(&sub.grid, &mut sub.particles, sub.dt)?;
    advect(&mut sub.particles, &sub.grid, sub.dt)?;
    Ok(solution)
}

impl BuiltScenario {
    /// Advances one global frame and records a frame log.
    pub fn step_once(&mut self) -> Result<(), BenchError> {
        let frame = self.frame_logs.len();
        let t0 = std::time::Instant::now();
        let log = match &mut self.state {
            RunState::Single {
                sub, last_solution, ..
            } => {
                let solution = single_step(sub, &self.newton)?;
                let v_inf = sub.grid.max_velocity_norm();
                let newton_iterations = solution.iterations;
                *last_solution = Some(solution);
                FrameLog {
                    frame,
                    grid_velocity_inf: v_inf,
                    schwarz_iterations: None,
                    schwarz_residuals: Vec::new(),
                    newton_iterations,
                    vacuum_receivers: 0,
                    wall_s: t0.elapsed().as_secs_f64(),
                }
            }
            RunState::Dual {
                coupler,
                last_report,
                ..
            } => {
                let report = coupler.advance_frame()?;
                let v_inf = coupler
                    .coarse
                    .grid
                    .max_velocity_norm()
                    .max(coupler.fine.grid.max_velocity_norm());
                let log = FrameLog {
                    frame,
                    grid_velocity_inf: v_inf,
                    schwarz_iterations: Some(report.iterations),
                    schwarz_residuals: report.residuals.clone(),
                    newton_iterations: report.coarse_newton_iterations
                        + report.fine_newton_iterations,
                    vacuum_receivers: report.vacuum_receivers,
                    wall_s: t0.elapsed().as_secs_f64(),
                };
                *last_report = Some(report);
                log
            }
        };
        self.frame_logs.push(log);
        Ok(())
    }

    /// Advances frames until the max-norm grid velocity drops below the
    /// static tolerance on every grid, or the frame cap is hit (a timeout
    /// report, not an error).
    pub fn run_to_equilibrium(&mut self) -> Result<EquilibriumReport, BenchError> {
        let cap = self.config.max_frames;
        let tol = self.config.static_tolerance;
        while self.frame_logs.len() < cap {
            self.step_once()?;
            let v_inf = self.frame_logs.last().unwrap().grid_velocity_inf;
            if v_inf < tol {
                return Ok(EquilibriumReport {
                    frames: self.frame_logs.len(),
                    reached: true,
                    final_velocity_inf: v_inf,
                });
            }
        }
        Ok(EquilibriumReport {
            frames: self.frame_logs.len(),
            reached: false,
            final_velocity_inf: self
                .frame_logs
                .last()
                .map_or(f64::INFINITY, |l| l.grid_velocity_inf),
        })
    }

    /// Particle records for snapshots: per particle (position, velocity,
    /// deformation gradient, Cauchy stress, subdomain label).
    pub fn particle_records(
        &self,
    ) -> Result<Vec<(Vector2<f64>, Vector2<f64>, Matrix2<f64>, [f64; 3], char)>, BenchError> {
        let mut rows = Vec::new();
        let mut dump = |sub: &Subdomain| -> Result<(), BenchError> {
            let cauchy = particle_cauchy(sub)?;
            for p in 0..sub.particles.len() {
                rows.push((
                    sub.particles.position[p],
                    sub.particles.velocity[p],
                    sub.particles.def_grad[p],
                    cauchy[p],
                    sub.label.as_char(),
                ));
            }
            Ok(())
        };
        match &self.state {
            RunState::Single { sub, .. } => dump(sub)?,
            RunState::Dual { coupler, .. } => {
                dump(&coupler.coarse)?;
                dump(&coupler.fine)?;
            }
        }
        Ok(rows)
    }

    /// Sampling inputs composited for the run mode: all particles in single
    /// mode; in dual mode the fine particles plus the coarse particles
    /// outside the fine subdomain's well-covered interior.
    pub fn sampling_inputs(
        &self,
    ) -> Result<(Vec<Vector2<f64>>, Vec<f64>, Vec<[f64; 3]>, Vec<Vector2<f64>>), BenchError> {
        let mut positions = Vec::new();
        let mut masses = Vec::new();
        let mut stresses = Vec::new();
        let mut displacements = Vec::new();
        let mut extend = |sub: &Subdomain,
                          initial: &[Vector2<f64>],
                          keep: &dyn Fn(Vector2<f64>) -> bool|
         -> Result<(), BenchError> {
            let cauchy = particle_cauchy(sub)?;
            for p in 0..sub.particles.len() {
                if !keep(initial[p]) {
                    continue;
                }
                positions.push(sub.particles.position[p]);
                masses.push(sub.particles.mass[p]);
                stresses.push(cauchy[p]);
                displacements.push(sub.particles.position[p] - initial[p]);
            }
            Ok(())
        };
        match &self.state {
            RunState::Single {
                sub,
                initial_positions,
                ..
            } => extend(sub, initial_positions, &|_| true)?,
            RunState::Dual {
                coupler,
                initial_coarse,
                initial_fine,
                ..
            } => {
                let margin = 1.5 * self.config.h_coarse;
                let interior = fine_interior_predicate(&self.config, margin);
                extend(&coupler.fine, initial_fine, &|_| true)?;
                extend(&coupler.coarse, initial_coarse, &|x0| !interior(x0))?;
            }
        }
        Ok((positions, masses, stresses, displacements))
    }

    /// Kernel-averaged stress/displacement sample at the given points with
    /// the scenario's default smoothing radius (1.5 fine cells).
    pub fn sample_field(&self, points: &[Vector2<f64>]) -> Result<FieldSample, BenchError> {
        let (pos, mass, stress, disp) = self.sampling_inputs()?;
        Ok(sample_stress(
            &pos,
            &mass,
            &stress,
            &disp,
            points,
            1.5 * self.config.h_fine,
        ))
    }

    /// Deformed-centerline aspect ratio H/W for the beam scenarios, measured
    /// from particles seeded nearest the mid-line.
    pub fn aspect_ratio(&self) -> Result<f64, BenchError> {
        let (length, thickness) = match self.config.geometry {
            Geometry::Cantilever {
                length, thickness, ..
            }
            | Geometry::Bar {
                length, thickness, ..
            } => (length, thickness),
            _ => {
                return Err(BenchError::Measurement(
                    "aspect ratio is only defined for beam scenarios".into(),
                ))
            }
        };
        let spacing = self.config.h_fine / self.config.particles_per_cell_axis as f64;
        let mid = thickness / 2.0;
        let mut height: f64 = 0.0;
        let mut width: f64 = 0.0;
        let mut found = false;
        let mut scan = |sub: &Subdomain, initial: &[Vector2<f64>]| {
            for p in 0..sub.particles.len() {
                if (initial[p].y - mid).abs() > spacing * 0.75 {
                    continue;
                }
                found = true;
                let x = sub.particles.position[p];
                height = height.max((x.y - mid).abs());
                width = width.max(x.x);
            }
        };
        match &self.state {
            RunState::Single {
                sub,
                initial_positions,
                ..
            } => scan(sub, initial_positions),
            RunState::Dual {
                coupler,
                initial_coarse,
                initial_fine,
                ..
            } => {
                scan(&coupler.coarse, initial_coarse);
                scan(&coupler.fine, initial_fine);
            }
        }
        if !found || width <= 0.0 {
            return Err(BenchError::Measurement(
                "no centerline particles found".into(),
            ));
        }
        let _ = length;
        Ok(height / width)
    }

    /// Contact pressure profile along the rigid plane from the final solve's
    /// constraint reactions: per contact node (in-plane coordinate,
    /// reaction normal force / tributary width). Empty when nothing touches.
    pub fn contact_profile(&self) -> Result<Vec<(f64, f64)>, BenchError> {
        let (sub, solution) = match &self.state {
            RunState::Single {
                sub, last_solution, ..
            } => (
                sub,
                last_solution.as_ref().ok_or_else(|| {
                    BenchError::Measurement("no solve has run yet".into())
                })?,
            ),
            RunState::Dual {
                coupler,
                last_report,
                ..
            } => (
                &coupler.fine,
                last_report
                    .as_ref()
                    .map(|r| &r.fine_solution)
                    .ok_or_else(|| BenchError::Measurement("no frame has run yet".into()))?,
            ),
        };
        let Some(plane) = sub.planes.first() else {
            return Err(BenchError::Measurement(
                "scenario has no collision plane".into(),
            ));
        };
        let n = plane.normal.normalize();
        let tangent = Vector2::new(-n.y, n.x);
        let h = sub.grid.cell_size;
        let mut profile: Vec<(f64, f64)> = solution
            .reactions
            .iter()
            .filter(|(idx, _)| (sub.grid.node_position(*idx) - plane.point).dot(&n) < 0.0)
            .map(|(idx, force)| {
                let x = sub.grid.node_position(*idx);
                ((x - plane.point).dot(&tangent), force.dot(&n) / h)
            })
            .collect();
        profile.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(profile)
    }

    /// Total normal contact force per unit depth from the current profile.
    pub fn contact_force(&self) -> Result<f64, BenchError> {
        let profile = self.contact_profile()?;
        let h = match &self.state {
            RunState::Single { sub, .. } => sub.grid.cell_size,
            RunState::Dual { coupler, .. } => coupler.fine.grid.cell_size,
        };
        Ok(profile.iter().map(|(_, p)| p * h).sum())
    }

    /// Hertz oracle built from the measured contact force.
    pub fn hertz_oracle(&self) -> Result<HertzSolution, BenchError> {
        let Geometry::Hertz { radius, .. } = self.config.geometry else {
            return Err(BenchError::Measurement("not a Hertz scenario".into()));
        };
        let mat = &self.config.materials[0];
        Ok(HertzSolution::new(
            self.contact_force()?,
            radius,
            mat.young,
            mat.poisson,
        )?)
    }

    /// Inclusion oracle for the configured materials and eigenstrain.
    pub fn inclusion_oracle(&self) -> Result<InclusionSolution, BenchError> {
        let Geometry::Inclusion {
            inclusion_radius, ..
        } = self.config.geometry
        else {
            return Err(BenchError::Measurement("not an inclusion scenario".into()));
        };
        let matrix = &self.config.materials[0];
        let inclusion = &self.config.materials[1];
        Ok(InclusionSolution::new(
            inclusion_radius,
            self.config.eigenstrain,
            inclusion.young,
            inclusion.poisson,
            matrix.young,
            matrix.poisson,
        )?)
    }

    /// Inclusion center in world coordinates.
    pub fn inclusion_center(&self) -> Result<Vector2<f64>, BenchError> {
        let Geometry::Inclusion { domain_size, .. } = self.config.geometry else {
            return Err(BenchError::Measurement("not an inclusion scenario".into()));
        };
        Ok(Vector2::new(domain_size / 2.0, domain_size / 2.0))
    }

    /// Horizontal sigma_yy profile through the inclusion center, returning
    /// (sample, oracle values per point).
    pub fn inclusion_profile(
        &self,
        points_per_side: usize,
    ) -> Result<(FieldSample, Vec<[f64; 3]>), BenchError> {
        let Geometry::Inclusion {
            domain_size,
            inclusion_radius,
            ..
        } = self.config.geometry
        else {
            return Err(BenchError::Measurement("not an inclusion scenario".into()));
        };
        let center = self.inclusion_center()?;
        let oracle = self.inclusion_oracle()?;
        // Keep clear of the clamped edge bands.
        let margin = 2.0 * self.config.h_coarse;
        let half = domain_size / 2.0 - margin;
        let n = points_per_side.max(2);
        let mut points = Vec::with_capacity(2 * n + 1);
        for k in 0..=2 * n {
            let x = center.x - half + (k as f64 / (2 * n) as f64) * 2.0 * half;
            points.push(Vector2::new(x, center.y));
        }
        let sample = self.sample_field(&points)?;
        let oracle_values = points
            .iter()
            .map(|&q| oracle.stress(q - center))
            .collect();
        let _ = inclusion_radius;
        Ok((sample, oracle_values))
    }

    /// Mean pressure -(s_xx + s_yy)/2 over the inclusion interior.
    pub fn interior_mean_pressure(&self) -> Result<f64, BenchError> {
        let Geometry::Inclusion {
            inclusion_radius, ..
        } = self.config.geometry
        else {
            return Err(BenchError::Measurement("not an inclusion scenario".into()));
        };
        let center = self.inclusion_center()?;
        let r = 0.6 * inclusion_radius;
        let n = 8;
        let mut points = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let q = center
                    + Vector2::new(
                        (i as f64 / (n - 1) as f64 - 0.5) * 2.0 * r,
                        (j as f64 / (n - 1) as f64 - 0.5) * 2.0 * r,
                    );
                if (q - center).norm() <= r {
                    points.push(q);
                }
            }
        }
        let sample = self.sample_field(&points)?;
        let mut sum = 0.0;
        let mut count = 0;
        for (k, s) in sample.stress.iter().enumerate() {
            if !sample.flagged[k] {
                sum += -(s[0] + s[1]) / 2.0;
                count += 1;
            }
        }
        if count == 0 {
            return Err(BenchError::AllSamplesFlagged);
        }
        Ok(sum / count as f64)
    }

    /// L2 error of the sigma_yy centerline profile against the inclusion
    /// oracle (only the yy component enters, matching the extracted profile).
    pub fn inclusion_l2_error(&self, points_per_side: usize) -> Result<f64, BenchError> {
        let (sample, oracle_values) = self.inclusion_profile(points_per_side)?;
        let mut num = 0.0;
        let mut den = 0.0;
        let mut used = 0;
        for k in 0..sample.points.len() {
            if sample.flagged[k] {
                continue;
            }
            used += 1;
            let d = sample.stress[k][1] - oracle_values[k][1];
            num += d * d;
            den += oracle_values[k][1] * oracle_values[k][1];
        }
        if used == 0 {
            return Err(BenchError::AllSamplesFlagged);
        }
        Ok((num / den).sqrt())
    }

    pub fn total_wall_s(&self) -> f64 {
        self.frame_logs.iter().map(|l| l.wall_s).sum()
    }
}

/// Predicate marking the well-covered interior of the fine subdomain, used
/// to drop redundant coarse particles from composite samples.
fn fine_interior_predicate(
    scn: &BenchmarkScenario,
    margin: f64,
) -> Box<dyn Fn(Vector2<f64>) -> bool> {
    match scn.geometry {
        Geometry::Cantilever {
            length, split_lo, ..
        }
        | Geometry::Bar {
            length, split_lo, ..
        } => {
            let cut = split_lo * length + margin;
            Box::new(move |x| x.x > cut)
        }
        Geometry::Hertz { fine_band, .. } => {
            let top = fine_band - margin;
            Box::new(move |x| x.y < top)
        }
        Geometry::Inclusion {
            domain_size,
            fine_radius,
            ..
        } => {
            let center = Vector2::new(domain_size / 2.0, domain_size / 2.0);
            let r = fine_radius - margin;
            Box::new(move |x| (x - center).norm() < r)
        }
    }
}

/// Per-particle Cauchy stress components (s_xx, s_yy, s_xy).
pub fn particle_cauchy(sub: &Subdomain) -> Result<Vec<[f64; 3]>, BenchError> {
    let mut out = Vec::with_capacity(sub.particles.len());
    for p in 0..sub.particles.len() {
        let mat = &sub.materials[sub.particles.material[p]];
        let sigma = cauchy_stress(&sub.particles.def_grad[p], mat)?;
        out.push([sigma[(0, 0)], sigma[(1, 1)], 0.5 * (sigma[(0, 1)] + sigma[(1, 0)])]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
