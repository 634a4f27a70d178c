use super::*;
use crate::schwarz::build_interface_sets;

fn material() -> MaterialModel {
    MaterialModel::new(1.0e5, 0.3, 1000.0).unwrap()
}

fn inclusion_scenario(mode: RunMode) -> BenchmarkScenario {
    BenchmarkScenario {
        kind: ScenarioKind::Inclusion,
        mode,
        geometry: Geometry::Inclusion {
            domain_size: 0.32,
            inclusion_radius: 0.04,
            hole_radius: 0.06,
            fine_radius: 0.1,
        },
        materials: vec![material(), material()],
        h_fine: 0.016,
        h_coarse: 0.032,
        dt_coarse: 0.02,
        substeps: 2,
        particles_per_cell_axis: 2,
        gravity: Vector2::zeros(),
        eigenstrain: 0.01,
        max_frames: 100,
        static_tolerance: 1e-6,
        pad_cells: 4,
    }
}

#[test]
fn inclusion_particles_carry_eigenstrain() {
    let scn = inclusion_scenario(RunMode::Single);
    let built = build_scenario(&scn, SchwarzSettings::default(), NewtonSettings::default()).unwrap();
    let RunState::Single { sub, .. } = &built.state else {
        panic!("expected single state")
    };
    let expect = (1.0 - 0.01_f64) * (1.0 - 0.01_f64);
    let mut inclusion_count = 0;
    for p in 0..sub.particles.len() {
        let det = sub.particles.def_grad[p].determinant();
        if sub.particles.material[p] == 1 {
            inclusion_count += 1;
            assert!((det - expect).abs() < 1e-15);
        } else {
            assert_eq!(det, 1.0);
        }
    }
    assert!(inclusion_count > 0);
}

#[test]
fn cantilever_clamp_nodes_are_zero_velocity_dirichlet() {
    let scn = BenchmarkScenario {
        kind: ScenarioKind::Cantilever,
        mode: RunMode::Single,
        geometry: Geometry::Cantilever {
            length: 0.15,
            thickness: 0.02,
            split_lo: 0.4,
            split_hi: 0.6,
        },
        materials: vec![material()],
        h_fine: 0.005,
        h_coarse: 0.005,
        dt_coarse: 0.05,
        substeps: 1,
        particles_per_cell_axis: 3,
        gravity: Vector2::new(0.0, -1.0),
        eigenstrain: 0.0,
        max_frames: 10,
        static_tolerance: 1e-6,
        pad_cells: 4,
    };
    let built = build_scenario(&scn, SchwarzSettings::default(), NewtonSettings::default()).unwrap();
    let RunState::Single { mut sub, .. } = built.state else {
        panic!()
    };
    p2g(&sub.particles, &mut sub.grid).unwrap();
    let clamps = sub.clamps.clone();
    let count = apply_clamps(&mut sub.grid, &clamps);
    assert!(count > 0);
    for idx in 0..sub.grid.num_nodes() {
        if sub.grid.collision_dirichlet[idx] {
            assert_eq!(sub.grid.prescribed_velocity[idx], Vector2::zeros());
            assert!(sub.grid.node_position(idx).x <= scn.h_coarse + 1e-9);
        }
    }
}

#[test]
fn dual_inclusion_has_nonempty_overlap_and_receivers() {
    let scn = inclusion_scenario(RunMode::Dual);
    let built = build_scenario(&scn, SchwarzSettings::default(), NewtonSettings::default()).unwrap();
    let RunState::Dual { mut coupler, .. } = built.state else {
        panic!()
    };
    // Overlap annulus is populated on both sides.
    let center = Vector2::new(0.16, 0.16);
    let coarse_in_overlap = coupler
        .coarse
        .particles
        .position
        .iter()
        .filter(|p| {
            let r = (*p - center).norm();
            r >= 0.06 && r <= 0.1
        })
        .count();
    assert!(coarse_in_overlap > 0);
    p2g(&coupler.coarse.particles, &mut coupler.coarse.grid).unwrap();
    p2g(&coupler.fine.particles, &mut coupler.fine.grid).unwrap();
    let sets = build_interface_sets(&coupler.coarse, &coupler.fine).unwrap();
    assert!(!sets.receivers_coarse.is_empty());
    assert!(!sets.receivers_fine.is_empty());
    // Coarse receivers hug the hole edge, fine receivers the disk edge.
    for &b in &sets.receivers_coarse {
        let r = (coupler.coarse.grid.node_position(b) - center).norm();
        assert!(r < 0.06 + 3.0 * scn.h_coarse, "coarse receiver at r = {r}");
    }
    for &j in &sets.receivers_fine {
        let r = (coupler.fine.grid.node_position(j) - center).norm();
        assert!(r > 0.1 - 3.0 * scn.h_fine, "fine receiver at r = {r}");
    }
}

#[test]
fn rest_state_reaches_equilibrium_in_one_frame() {
    let mut scn = inclusion_scenario(RunMode::Single);
    scn.eigenstrain = 0.0; // stress-free
    scn.gravity = Vector2::zeros();
    let mut built =
        build_scenario(&scn, SchwarzSettings::default(), NewtonSettings::default()).unwrap();
    let report = built.run_to_equilibrium().unwrap();
    assert!(report.reached);
    assert_eq!(report.frames, 1);
    assert_eq!(report.final_velocity_inf, 0.0);
}

#[test]
fn body_settles_on_rigid_plane() {
    let scn = BenchmarkScenario {
        kind: ScenarioKind::Hertz,
        mode: RunMode::Single,
        geometry: Geometry::Hertz {
            radius: 0.1,
            fine_band: 0.04,
            overlap_band: 0.02,
        },
        materials: vec![MaterialModel::new(2.0e5, 0.3, 1000.0).unwrap()],
        h_fine: 0.01,
        h_coarse: 0.01,
        dt_coarse: 0.01,
        substeps: 1,
        particles_per_cell_axis: 2,
        gravity: Vector2::new(0.0, -9.8),
        eigenstrain: 0.0,
        max_frames: 120,
        static_tolerance: 1e-6,
        pad_cells: 4,
    };
    let mut built =
        build_scenario(&scn, SchwarzSettings::default(), NewtonSettings::default()).unwrap();
    let report = built.run_to_equilibrium().unwrap();
    assert!(report.reached, "no equilibrium: {report:?}");
    assert!(report.final_velocity_inf < 1e-6);
    // The contact carries the body weight.
    let force = built.contact_force().unwrap();
    let weight = match &built.state {
        RunState::Single { sub, .. } => sub.particles.total_mass() * 9.8,
        _ => unreachable!(),
    };
    assert!(
        (force - weight).abs() / weight < 0.05,
        "contact force {force} vs weight {weight}"
    );
    // Profile is nonempty and symmetric-ish about the contact center.
    let profile = built.contact_profile().unwrap();
    assert!(!profile.is_empty());
}

#[test]
fn no_contact_gives_empty_profile() {
    // Body above the plane: shift the plane far below.
    let mut scn = BenchmarkScenario {
        kind: ScenarioKind::Hertz,
        mode: RunMode::Single,
        geometry: Geometry::Hertz {
            radius: 0.05,
            fine_band: 0.02,
            overlap_band: 0.01,
        },
        materials: vec![material()],
        h_fine: 0.01,
        h_coarse: 0.01,
        dt_coarse: 0.005,
        substeps: 1,
        particles_per_cell_axis: 2,
        gravity: Vector2::zeros(),
        eigenstrain: 0.0,
        max_frames: 3,
        static_tolerance: 1e-9,
        pad_cells: 4,
    };
    scn.gravity = Vector2::zeros();
    let mut built =
        build_scenario(&scn, SchwarzSettings::default(), NewtonSettings::default()).unwrap();
    if let RunState::Single { sub, .. } = &mut built.state {
        sub.planes[0].point = Vector2::new(0.0, -1.0);
    }
    built.step_once().unwrap();
    let profile = built.contact_profile().unwrap();
    assert!(profile.is_empty());
}

#[test]
fn validation_rejects_bad_configs() {
    let mut scn = inclusion_scenario(RunMode::Dual);
    scn.h_fine = 0.064; // larger than coarse
    assert!(matches!(scn.validate(), Err(BenchError::Validation(_))));

    let mut scn = inclusion_scenario(RunMode::Dual);
    scn.substeps = 0;
    assert!(scn.validate().is_err());

    let mut scn = inclusion_scenario(RunMode::Dual);
    scn.geometry = Geometry::Inclusion {
        domain_size: 0.32,
        inclusion_radius: 0.04,
        hole_radius: 0.2, // hole beyond fine disk
        fine_radius: 0.1,
    };
    assert!(scn.validate().is_err());
}

#[test]
fn equilibrium_is_deterministic() {
    let scn = inclusion_scenario(RunMode::Single);
    let run = || {
        let mut built =
            build_scenario(&scn, SchwarzSettings::default(), NewtonSettings::default()).unwrap();
        for _ in 0..3 {
            built.step_once().unwrap();
        }
        let RunState::Single { sub, .. } = built.state else {
            panic!()
        };
        (sub.particles.position, sub.particles.velocity)
    };
    let (p1, v1) = run();
    let (p2, v2) = run();
    assert_eq!(p1, p2);
    assert_eq!(v1, v2);
}
