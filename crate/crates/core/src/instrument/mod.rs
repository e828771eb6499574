//! Emulated measurement loop: the plant is solved like the twin, but the
//! optimizer only ever sees averaged, optionally noisy voltages at probed
//! vertices, and the adjoint field is produced by physically injecting the
//! adjoint source through the leads.

pub mod shifter;

use std::cell::Cell;
use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::adjoint::{gradient, Twin};
use crate::error::{Error, Result};
use crate::objective::ObjectiveValue;
use crate::optim::{Bound, IterationRecord, OptimizationState, Optimizer, Problem};
use crate::system::{FieldAccess, FieldKind, FieldSolution, LinearSolver, SystemMatrix};

/// Multiplying a lead injection by `2i` and then by this recovers the
/// original value exactly in floating point.
const INVERSE_INJECTION: Complex64 = Complex64 { re: 0.0, im: -0.5 };
const INJECTION: Complex64 = Complex64 { re: 0.0, im: 2.0 };

/// Additive complex Gaussian readout noise with `E|n|^2 = sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    sigma: f64,
    seed: u64,
}

impl NoiseModel {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise sigma must be finite and >= 0, got {sigma}"
            )));
        }
        Ok(NoiseModel { sigma, seed })
    }

    pub fn noiseless() -> Self {
        NoiseModel { sigma: 0.0, seed: 0 }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementPlan {
    pub forward_probes: Vec<usize>,
    pub adjoint_probes: Vec<usize>,
    pub repeats: usize,
}

impl MeasurementPlan {
    /// Probes the tunable bonds' endpoints and the tunable leads, plus the
    /// lead vertices the objective itself is built from.
    pub fn for_twin<S: LinearSolver>(twin: &Twin<S>, repeats: usize) -> Result<Self> {
        if repeats < 1 {
            return Err(Error::InvalidConfig(
                "repeats per measurement must be at least 1".into(),
            ));
        }
        let graph = twin.graph();
        let mut forward = twin.params().forward_vertices(graph);
        forward.extend(twin.objective().vertices());
        forward.sort_unstable();
        forward.dedup();
        Ok(MeasurementPlan {
            forward_probes: forward,
            adjoint_probes: twin.params().adjoint_vertices(graph),
            repeats,
        })
    }
}

/// Averaged voltages at probed vertices. Reads outside the probe set are
/// counted and return NaN, so a locality violation also poisons the result.
#[derive(Debug)]
pub struct ProbeReadings {
    values: BTreeMap<usize, Complex64>,
    kind: FieldKind,
    reads: Cell<usize>,
    misses: Cell<usize>,
}

impl ProbeReadings {
    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn probes(&self) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.values.iter().map(|(&v, &z)| (v, z))
    }

    pub fn reads(&self) -> usize {
        self.reads.get()
    }

    pub fn out_of_plan_reads(&self) -> usize {
        self.misses.get()
    }
}

impl FieldAccess for ProbeReadings {
    fn voltage(&self, vertex: usize) -> Complex64 {
        self.reads.set(self.reads.get() + 1);
        match self.values.get(&vertex) {
            Some(&z) => z,
            None => {
                self.misses.set(self.misses.get() + 1);
                Complex64::new(f64::NAN, f64::NAN)
            }
        }
    }
}

/// Voltage reads during one gradient evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AccessLog {
    pub forward_reads: usize,
    pub adjoint_reads: usize,
    pub out_of_plan: usize,
}

/// Result of one forward measurement: the plant's configuration plus the
/// readings taken on it.
#[derive(Debug)]
pub struct ForwardMeasurement {
    pub system: SystemMatrix,
    pub wavefront: crate::wave::Wavefront,
    pub graph: crate::graph::MetricGraph,
    pub readings: ProbeReadings,
}

#[derive(Debug)]
pub struct MeasuredGradient {
    pub value: ObjectiveValue,
    pub gradient: Vec<f64>,
    pub access: AccessLog,
}

/// Emulated hardware around a twin.
#[derive(Debug, Clone)]
pub struct Plant<S: LinearSolver = crate::system::DenseLu> {
    twin: Twin<S>,
    plan: MeasurementPlan,
    noise: NoiseModel,
    rng: ChaCha8Rng,
    log: Vec<AccessLog>,
}

impl<S: LinearSolver> Plant<S> {
    pub fn new(twin: Twin<S>, plan: MeasurementPlan, noise: NoiseModel) -> Result<Self> {
        let v = twin.graph().vertex_count();
        if plan.repeats < 1 {
            return Err(Error::InvalidConfig(
                "repeats per measurement must be at least 1".into(),
            ));
        }
        if let Some(&bad) = plan
            .forward_probes
            .iter()
            .chain(&plan.adjoint_probes)
            .find(|&&p| p >= v)
        {
            return Err(Error::InvalidConfig(format!(
                "probe vertex {bad} outside graph of {v} vertices"
            )));
        }
        Ok(Plant {
            rng: ChaCha8Rng::seed_from_u64(noise.seed),
            twin,
            plan,
            noise,
            log: Vec::new(),
        })
    }

    pub fn twin(&self) -> &Twin<S> {
        &self.twin
    }

    pub fn plan(&self) -> &MeasurementPlan {
        &self.plan
    }

    /// One entry per gradient evaluation, in order.
    pub fn access_log(&self) -> &[AccessLog] {
        &self.log
    }

    fn sample(&mut self, field: &FieldSolution, probes: &[usize]) -> ProbeReadings {
        let mut values = BTreeMap::new();
        let normal = Normal::new(0.0, self.noise.sigma / std::f64::consts::SQRT_2).expect("sigma validated");
        for &p in probes {
            let exact = field.voltages[p];
            let z = if self.noise.sigma == 0.0 {
                exact
            } else {
                let mut sum = Complex64::new(0.0, 0.0);
                for _ in 0..self.plan.repeats {
                    sum += exact + Complex64::new(normal.sample(&mut self.rng), normal.sample(&mut self.rng));
                }
                sum / self.plan.repeats as f64
            };
            values.insert(p, z);
        }
        ProbeReadings {
            values,
            kind: field.kind,
            reads: Cell::new(0),
            misses: Cell::new(0),
        }
    }

    /// Actuates `values` (shifter snapped to whole steps when configured) and
    /// reads the forward probes.
    pub fn forward_measure(&mut self, values: &[f64]) -> Result<ForwardMeasurement> {
        let state = self.twin.forward(values)?;
        let probes = self.plan.forward_probes.clone();
        let readings = self.sample(&state.phi, &probes);
        Ok(ForwardMeasurement {
            system: state.system,
            wavefront: state.wavefront,
            graph: state.graph,
            readings,
        })
    }

    /// Injects `source` (the adjoint source, in system-source units) through
    /// the leads and reads the adjoint probes.
    pub fn adjoint_measure(&mut self, forward: &ForwardMeasurement, source: &[Complex64]) -> Result<ProbeReadings> {
        let graph = &forward.graph;
        if source.len() != graph.vertex_count() {
            return Err(Error::DimensionMismatch {
                expected: graph.vertex_count(),
                found: source.len(),
            });
        }
        if let Some(vertex) = source
            .iter()
            .enumerate()
            .position(|(v, z)| *z != Complex64::new(0.0, 0.0) && graph.lead_at(v).is_none())
        {
            return Err(Error::NonInjectableSource { vertex });
        }
        // the hardware sees a lead wavefront; the solver sees 2i times it
        let mut rhs = vec![Complex64::new(0.0, 0.0); graph.vertex_count()];
        for &v in graph.lead_vertices() {
            let injection = source[v] * INVERSE_INJECTION;
            rhs[v] = INJECTION * injection;
        }
        let psi = self.twin.solver().solve(&forward.system, &rhs)?;
        let field = FieldSolution {
            voltages: psi,
            wavenumber: forward.system.wavenumber(),
            kind: FieldKind::Adjoint,
        };
        let probes = self.plan.adjoint_probes.clone();
        Ok(self.sample(&field, &probes))
    }

    pub fn measure_value(&mut self, values: &[f64]) -> Result<ObjectiveValue> {
        let forward = self.forward_measure(values)?;
        self.twin.objective().evaluate(&forward.readings, &forward.wavefront)
    }

    /// Forward measurement, adjoint measurement and the gradient assembled
    /// from probed voltages only.
    pub fn measure_gradient(&mut self, values: &[f64]) -> Result<MeasuredGradient> {
        let forward = self.forward_measure(values)?;
        let objective = self.twin.objective().clone();
        let value = objective.evaluate(&forward.readings, &forward.wavefront)?;
        let source = objective.adjoint_source(&forward.readings, &forward.wavefront)?;
        let psi = self.adjoint_measure(&forward, &source)?;
        let gradient = gradient(
            &objective,
            &forward.readings,
            &psi,
            self.twin.params(),
            &forward.graph,
            &forward.wavefront,
            self.twin.wavenumber(),
        )?;
        let access = AccessLog {
            forward_reads: forward.readings.reads(),
            adjoint_reads: psi.reads(),
            out_of_plan: forward.readings.out_of_plan_reads() + psi.out_of_plan_reads(),
        };
        self.log.push(access);
        Ok(MeasuredGradient {
            value,
            gradient,
            access,
        })
    }
}

impl<S: LinearSolver> Problem for Plant<S> {
    fn bounds(&self) -> Vec<Bound> {
        Problem::bounds(&self.twin)
    }

    fn value(&mut self, x: &[f64]) -> Result<f64> {
        Ok(self.measure_value(x)?.value)
    }

    fn value_and_gradient(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let m = self.measure_gradient(x)?;
        Ok((m.value.value, m.gradient))
    }

    fn realized(&self, x: &[f64]) -> Vec<f64> {
        self.twin.realize(x)
    }
}

/// One pass of measure forward, measure adjoint, compute gradient, actuate.
/// Returns the trace record of the new state.
pub fn ipac_iterate<S: LinearSolver>(
    optimizer: &Optimizer,
    state: &mut OptimizationState,
    plant: &mut Plant<S>,
    clock: Instant,
) -> Result<IterationRecord> {
    optimizer
        .step(state, plant)
        .map_err(|e| e.at_iteration(state.iteration + 1))?;
    Ok(optimizer.record(state, plant, clock.elapsed()))
}
