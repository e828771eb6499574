use std::time::Instant;

use cablenet::adjoint::solve_adjoint;
use cablenet::instrument::{ipac_iterate, MeasurementPlan, NoiseModel, Plant};
use cablenet::scenario::bundled;
use cablenet::{Error, Optimizer, OptimizerConfig};
use num_complex::Complex64;

fn scenario(name: &str) -> cablenet::scenario::Scenario {
    bundled(name).unwrap().unwrap()
}

#[test]
fn noiseless_plant_reproduces_the_twin_trace_exactly() {
    for name in ["fig3_tmt_sim", "fig3_cpa_sim", "fig3_invis_sim"] {
        let s = scenario(name);
        let opt = Optimizer::new(OptimizerConfig {
            max_iterations: 50,
            ..s.optimizer.clone()
        })
        .unwrap();
        let x0 = s.params.values();
        let twin_run = opt.run(&mut s.twin().unwrap(), &x0).unwrap();
        let mut plant = s.plant().unwrap();
        let plant_run = opt.run(&mut plant, &x0).unwrap();
        assert!(twin_run.trace.same_numbers(&plant_run.trace), "{name}");
        assert!(!plant.access_log().is_empty());
        assert!(plant.access_log().iter().all(|a| a.out_of_plan == 0), "{name}");
    }
}

#[test]
fn measured_gradient_matches_twin_gradient() {
    for name in ["fig3_tmt_sim", "fig3_cpa_sim", "fig3_invis_sim"] {
        let s = scenario(name);
        let twin = s.twin().unwrap();
        let mut plant = s.plant().unwrap();
        let x = s.params.values();
        let expected = twin.evaluate(&x).unwrap();
        let measured = plant.measure_gradient(&x).unwrap();
        assert_eq!(measured.value.value, expected.value.value);
        for (m, e) in measured.gradient.iter().zip(&expected.gradient) {
            assert!((m - e).abs() <= 1e-12 * e.abs().max(1.0), "{name}: {m} vs {e}");
        }
        assert!(measured.access.forward_reads > 0 && measured.access.adjoint_reads > 0);
    }
}

#[test]
fn stepwise_loop_matches_optimizer_run() {
    let s = scenario("fig3_tmt_sim");
    let opt = Optimizer::new(OptimizerConfig {
        max_iterations: 10,
        tolerance: 1e-300,
        gradient_tolerance: 0.0,
        ..s.optimizer.clone()
    })
    .unwrap();
    let mut plant = s.plant().unwrap();
    let clock = Instant::now();
    let mut state = opt.start(&mut plant, &s.params.values()).unwrap();
    let mut values = Vec::new();
    for _ in 0..5 {
        values.push(ipac_iterate(&opt, &mut state, &mut plant, clock).unwrap().value);
    }
    let run = opt.run(&mut s.plant().unwrap(), &s.params.values()).unwrap();
    assert_eq!(&run.trace.values()[1..6], &values[..]);
}

#[test]
fn adjoint_injection_reproduces_the_adjoint_field() {
    let s = scenario("fig3_invis_sim");
    let twin = s.twin().unwrap();
    let x = s.params.values();
    let plan = MeasurementPlan {
        forward_probes: (0..6).collect(),
        adjoint_probes: (0..6).collect(),
        repeats: 1,
    };
    let mut plant = Plant::new(twin.clone(), plan, NoiseModel::noiseless()).unwrap();
    let forward = plant.forward_measure(&x).unwrap();
    let source = twin
        .objective()
        .adjoint_source(&forward.readings, &forward.wavefront)
        .unwrap();
    let psi = plant.adjoint_measure(&forward, &source).unwrap();
    let reference = solve_adjoint(&forward.system, &source).unwrap();
    for (v, z) in psi.probes() {
        assert_eq!(z, reference.voltages[v]);
    }
}

#[test]
fn zero_source_gives_zero_readings() {
    let s = scenario("fig3_cpa_sim");
    let mut plant = s.plant().unwrap();
    let forward = plant.forward_measure(&s.params.values()).unwrap();
    let psi = plant.adjoint_measure(&forward, &[Complex64::new(0.0, 0.0); 6]).unwrap();
    assert!(psi.probes().all(|(_, z)| z == Complex64::new(0.0, 0.0)));
}

#[test]
fn source_on_internal_vertex_is_rejected() {
    let s = scenario("fig3_tmt_sim");
    let mut plant = s.plant().unwrap();
    let forward = plant.forward_measure(&s.params.values()).unwrap();
    let mut source = vec![Complex64::new(0.0, 0.0); 6];
    source[4] = Complex64::new(1.0, 0.0);
    assert_eq!(
        plant.adjoint_measure(&forward, &source).unwrap_err(),
        Error::NonInjectableSource { vertex: 4 }
    );
}

#[test]
fn averaged_noise_has_the_expected_standard_error() {
    let s = scenario("fig3_tmt_sim");
    let twin = s.twin().unwrap();
    let x = s.params.values();
    let exact = twin.forward(&x).unwrap().phi.voltages;
    let sigma = 0.05;
    let plan = MeasurementPlan {
        forward_probes: vec![0],
        adjoint_probes: vec![],
        repeats: 10,
    };
    let mut plant = Plant::new(twin, plan, NoiseModel::new(sigma, 11).unwrap()).unwrap();
    let trials = 1000;
    let mut power = 0.0;
    for _ in 0..trials {
        let m = plant.forward_measure(&x).unwrap();
        let (v, z) = m.readings.probes().next().unwrap();
        power += (z - exact[v]).norm_sqr();
    }
    let se = (power / trials as f64).sqrt();
    let expected = sigma / 10f64.sqrt();
    assert!((se / expected - 1.0).abs() < 0.08, "{se} vs {expected}");
}

#[test]
fn noisy_runs_are_reproducible_per_seed() {
    let s = scenario("fig3_tmt_sim");
    let twin = s.twin().unwrap();
    let opt = Optimizer::new(OptimizerConfig {
        max_iterations: 15,
        ..s.optimizer.clone()
    })
    .unwrap();
    let run = |seed| {
        let plan = MeasurementPlan::for_twin(&twin, 10).unwrap();
        let mut plant = Plant::new(twin.clone(), plan, NoiseModel::new(1e-3, seed).unwrap()).unwrap();
        opt.run(&mut plant, &s.params.values()).unwrap()
    };
    assert!(run(4).trace.same_numbers(&run(4).trace));
    assert!(!run(4).trace.same_numbers(&run(5).trace));
}

#[test]
fn plan_rejects_out_of_range_probes() {
    let s = scenario("fig3_tmt_sim");
    let plan = MeasurementPlan {
        forward_probes: vec![9],
        adjoint_probes: vec![],
        repeats: 10,
    };
    assert!(Plant::new(s.twin().unwrap(), plan, NoiseModel::noiseless()).is_err());
}
