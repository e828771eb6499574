#![allow(dead_code)]

use std::f64::consts::PI;

use cablenet::graph::{Bond, MetricGraph};
use cablenet::{ObjectiveSpec, ParamKind, Parameter, ParameterVector, Twin, Wavefront};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;

pub const LOSSY: Complex64 = Complex64 { re: 1.0, im: 0.0085 };
pub const LOSSLESS: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Connected graph: a random spanning tree plus extra random edges, with
/// leads on `lead_count` distinct random vertices.
pub fn random_graph<R: Rng>(rng: &mut R, v: usize, lead_count: usize, index: Complex64) -> MetricGraph {
    let mut order: Vec<usize> = (0..v).collect();
    order.shuffle(rng);
    let mut pairs = Vec::new();
    for i in 1..v {
        let j = rng.random_range(0..i);
        pairs.push((order[i].min(order[j]), order[i].max(order[j])));
    }
    let extra = rng.random_range(0..=v);
    for _ in 0..extra {
        let a = rng.random_range(0..v);
        let b = rng.random_range(0..v);
        if a != b && !pairs.contains(&(a.min(b), a.max(b))) {
            pairs.push((a.min(b), a.max(b)));
        }
    }
    let bonds = pairs
        .into_iter()
        .map(|(a, b)| Bond::new(a, b, rng.random_range(0.2..0.9)))
        .collect();
    let mut leads: Vec<usize> = (0..v).collect();
    leads.shuffle(rng);
    leads.truncate(lead_count);
    MetricGraph::new(v, bonds, leads, index).unwrap()
}

pub fn random_phase<R: Rng>(rng: &mut R) -> f64 {
    rng.random_range(-PI..PI)
}

/// Objective of the requested kind on a graph with at least three leads,
/// plus a wavefront that injects on exactly its input channels.
pub fn random_objective<R: Rng>(rng: &mut R, kind: usize, lead_count: usize) -> (ObjectiveSpec, Wavefront) {
    let mut leads: Vec<usize> = (0..lead_count).collect();
    leads.shuffle(rng);
    let mut amplitudes = vec![0.0; lead_count];
    let mut phases = vec![0.0; lead_count];
    let spec = match kind % 3 {
        0 => {
            let n_inj = rng.random_range(1..lead_count);
            let (inj, rest) = leads.split_at(n_inj);
            let n_tgt = rng.random_range(1..=rest.len());
            ObjectiveSpec::Tmt {
                injected: inj.to_vec(),
                targeted: rest[..n_tgt].to_vec(),
            }
        }
        1 => {
            let n_inj = rng.random_range(1..=lead_count);
            ObjectiveSpec::Cpa {
                injected: leads[..n_inj].to_vec(),
            }
        }
        _ => ObjectiveSpec::Invis {
            interrogation: leads[0],
            probe: leads[1],
            control: leads[2],
            control_penalty: rng.random_bool(0.5),
        },
    };
    for l in spec.injected() {
        amplitudes[l] = rng.random_range(0.2..2.0);
        phases[l] = random_phase(rng);
    }
    (spec, Wavefront::new(amplitudes, phases).unwrap())
}

/// Up to three bond lengths plus some amplitudes and phases of injected leads.
pub fn random_params<R: Rng>(
    rng: &mut R,
    graph: &MetricGraph,
    spec: &ObjectiveSpec,
    wavefront: &Wavefront,
) -> ParameterVector {
    let mut entries = Vec::new();
    let mut bonds: Vec<usize> = (0..graph.bonds().len()).collect();
    bonds.shuffle(rng);
    for &b in bonds.iter().take(rng.random_range(1..=3)) {
        let l = graph.bond(b).length;
        entries.push(Parameter::new(ParamKind::BondLength(b), l, l - 0.05, l + 0.05));
    }
    for l in spec.injected() {
        if rng.random_bool(0.5) {
            entries.push(Parameter::new(
                ParamKind::Amplitude(l),
                wavefront.amplitude(l),
                0.001,
                3.0,
            ));
        }
        if rng.random_bool(0.5) {
            entries.push(Parameter::phase(l, wavefront.phase(l)));
        }
    }
    ParameterVector::new(entries, graph, wavefront).unwrap()
}

/// Random twin with `V` in `3..=8` and every lead kind represented.
pub fn random_twin<R: Rng>(rng: &mut R, kind: usize, index: Complex64) -> Twin {
    let v = rng.random_range(3..=8);
    let leads = rng.random_range(3..=v);
    let graph = random_graph(rng, v, leads, index);
    let (spec, wavefront) = random_objective(rng, kind, leads);
    let params = random_params(rng, &graph, &spec, &wavefront);
    let f = rng.random_range(0.5e9..3.5e9);
    Twin::new(graph, wavefront, spec, params, f).unwrap()
}
