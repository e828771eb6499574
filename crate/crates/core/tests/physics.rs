mod common;

use cablenet::exec::Execution;
use cablenet::system::{assemble_system, driving_source, power_budget, scattering_matrix, solve_forward};
use cablenet::{wavenumber, Wavefront};
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_wavefront(seed: u64, leads: usize) -> Wavefront {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let a = (0..leads).map(|_| rng.random_range(0.0..2.0)).collect();
    let p = (0..leads).map(|_| random_phase(&mut rng)).collect();
    Wavefront::new(a, p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lossless_networks_conserve_power(seed in any::<u64>(), v in 2usize..9, f in 0.3e9f64..4e9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = random_graph(&mut rng, v, v.min(4), LOSSLESS);
        let w = random_wavefront(seed, graph.lead_count());
        let k = wavenumber(f, graph.refractive_index()).unwrap();
        let m = assemble_system(&graph, k).unwrap();
        let phi = solve_forward(&m, &driving_source(&graph, &w).unwrap()).unwrap();
        let budget = power_budget(&phi, &graph, &w).unwrap();
        prop_assert!((budget.outgoing - budget.input).abs() <= 1e-10 * budget.input.max(1.0));
    }

    #[test]
    fn lossy_networks_absorb(seed in any::<u64>(), v in 2usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = random_graph(&mut rng, v, v.min(3), LOSSY);
        let w = random_wavefront(seed, graph.lead_count());
        prop_assume!(w.input_power() > 1e-6);
        let k = wavenumber(2.0e9, graph.refractive_index()).unwrap();
        let m = assemble_system(&graph, k).unwrap();
        let phi = solve_forward(&m, &driving_source(&graph, &w).unwrap()).unwrap();
        let budget = power_budget(&phi, &graph, &w).unwrap();
        prop_assert!(budget.absorbed > 0.0 && budget.absorbed < budget.input);
    }

    #[test]
    fn scattering_is_reciprocal(seed in any::<u64>(), v in 2usize..9, lossy in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = random_graph(&mut rng, v, v.min(5), if lossy { LOSSY } else { LOSSLESS });
        let k = wavenumber(1.7e9, graph.refractive_index()).unwrap();
        let n = graph.lead_count();
        let s = scattering_matrix(&graph, k, Execution::Sequential).unwrap();
        for a in 0..n {
            for b in 0..n {
                prop_assert!((s[a * n + b] - s[b * n + a]).norm() < 1e-10);
            }
        }
    }
}

#[test]
fn parallel_and_sequential_scattering_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let graph = cablenet::MetricGraph::fully_connected(12, 0.25, 0.05, LOSSY, &mut rng).unwrap();
    let k = wavenumber(3.2e9, graph.refractive_index()).unwrap();
    let a = scattering_matrix(&graph, k, Execution::Sequential).unwrap();
    let b = scattering_matrix(&graph, k, Execution::Parallel).unwrap();
    assert_eq!(a, b);
}
