
use std::collections::HashMap;
use mpm2d::bench::{build_scenario, BenchmarkScenario, Geometry, RunMode, RunState, ScenarioKind};
use mpm2d::constitutive::MaterialModel;
use mpm2d::implicit_step::NewtonSettings;
use mpm2d::schwarz::SchwarzSettings;
use mpm2d::Vec2;

fn tight() -> NewtonSettings { NewtonSettings { tolerance_rel: 1e-10, ..Default::default() } }
fn material() -> MaterialModel { MaterialModel::new(1.0e5, 0.0, 1000.0).unwrap() }

fn bar_scenario(mode: RunMode, dt: f64, vend: f64) -> BenchmarkScenario {
    BenchmarkScenario {
        kind: ScenarioKind::Bar,
        mode,
        geometry: Geometry::Bar { length: 0.48, thickness: 0.08, split_lo: 0.375, split_hi: 0.541666666666667, end_velocity: vend },
        materials: vec![material()],
        h_fine: 0.02, h_coarse: 0.02, dt_coarse: dt, substeps: 1,
        particles_per_cell_axis: 2,
        gravity: Vec2::zeros(), eigenstrain: 0.0,
        max_frames: 1, static_tolerance: 1e-30, pad_cells: 4,
    }
}

fn measure(dt: f64, vend: f64) -> (f64, f64, usize) {
    let mut single = build_scenario(&bar_scenario(RunMode::Single, dt, vend), SchwarzSettings::default(), tight()).unwrap();
    single.step_once().unwrap();
    let mut reference: HashMap<(u64, u64), Vec2> = HashMap::new();
    let RunState::Single { sub, initial_positions, .. } = &single.state else { panic!() };
    for p in 0..sub.particles.len() {
        reference.insert((initial_positions[p].x.to_bits(), initial_positions[p].y.to_bits()), sub.particles.velocity[p]);
    }
    let vscale = sub.particles.velocity.iter().map(|v| v.amax()).fold(0.0_f64, f64::max);
    let settings = SchwarzSettings { eps_conv: 1e-9, k_max: 400, substeps: 1 };
    let mut dual = build_scenario(&bar_scenario(RunMode::Dual, dt, vend), settings, tight()).unwrap();
    dual.step_once().unwrap();
    let iters = dual.frame_logs[0].schwarz_iterations.unwrap();
    let RunState::Dual { coupler, initial_coarse, initial_fine, .. } = &dual.state else { panic!() };
    let mut worst = 0.0_f64;
    for (sub, initial) in [(&coupler.coarse, initial_coarse), (&coupler.fine, initial_fine)] {
        for p in 0..sub.particles.len() {
            let key = (initial[p].x.to_bits(), initial[p].y.to_bits());
            worst = worst.max((sub.particles.velocity[p] - reference[&key]).amax());
        }
    }
    (worst / vscale, vscale, iters)
}

#[test]
fn sweep() {
    for (dt, vend) in [(0.05, 0.01), (0.1, 0.01), (0.2, 0.002), (0.2, 0.0005), (0.4, 0.0005), (0.1, 0.0005)] {
        let (rel, vscale, iters) = measure(dt, vend);
        println!("dt={dt} vend={vend}: rel dv = {rel:.3e} (vscale {vscale:.2e}, {iters} schwarz iters)");
    }
}
