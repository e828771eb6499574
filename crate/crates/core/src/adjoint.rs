//! Adjoint sensitivities: one forward and one adjoint solve give the full
//! gradient, whatever the number of parameters.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{insert_wavenumber, MetricGraph};
use crate::instrument::shifter;
use crate::objective::{Objective, ObjectiveSpec, ObjectiveValue, WavefrontParam};
use crate::optim::{Bound, Problem};
use crate::system::{
    assemble_system, bond_trig, driving_source, solve_with, DenseLu, FieldAccess, FieldKind, FieldSolution,
    LinearSolver, SystemMatrix,
};
use crate::wave::{wavenumber, wrap_phase, Wavefront, Wavenumber};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// What a parameter controls. Bond ids index `MetricGraph::bonds`, lead ids
/// index the wavefront.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamKind {
    /// Cable length of a bond, meters.
    BondLength(usize),
    /// Slide travel of the phase shifter inside a bond, meters.
    ShifterTravel(usize),
    Amplitude(usize),
    /// Radians; periodic on `[-pi, pi]`.
    Phase(usize),
}

impl ParamKind {
    pub fn is_periodic(self) -> bool {
        matches!(self, ParamKind::Phase(_))
    }

    pub fn wavefront_param(self) -> Option<WavefrontParam> {
        match self {
            ParamKind::Amplitude(l) => Some(WavefrontParam::Amplitude(l)),
            ParamKind::Phase(l) => Some(WavefrontParam::Phase(l)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub kind: ParamKind,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Parameter {
    pub fn new(kind: ParamKind, value: f64, lower: f64, upper: f64) -> Self {
        Parameter {
            kind,
            value,
            lower,
            upper,
        }
    }

    /// Phase parameter spanning the full circle.
    pub fn phase(lead: usize, value: f64) -> Self {
        Parameter::new(ParamKind::Phase(lead), wrap_phase(value), -PI, PI)
    }

    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Ordered tunable parameters with their bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    entries: Vec<Parameter>,
}

impl ParameterVector {
    pub fn new(entries: Vec<Parameter>, graph: &MetricGraph, wavefront: &Wavefront) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParameters("no tunable parameters".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for (i, p) in entries.iter().enumerate() {
            if !seen.insert(p.kind) {
                return Err(Error::InvalidParameters(format!("parameter {:?} listed twice", p.kind)));
            }
            if !(p.lower <= p.value && p.value <= p.upper) || !p.lower.is_finite() || !p.upper.is_finite() {
                return Err(Error::InvalidParameters(format!(
                    "parameter {i} ({:?}) value {} outside [{}, {}]",
                    p.kind, p.value, p.lower, p.upper
                )));
            }
            match p.kind {
                ParamKind::BondLength(b) | ParamKind::ShifterTravel(b) if b >= graph.bonds().len() => {
                    return Err(Error::InvalidParameters(format!(
                        "parameter {i} references missing bond {b}"
                    )));
                }
                ParamKind::BondLength(_) if !(p.lower > 0.0) => {
                    return Err(Error::InvalidParameters(format!(
                        "bond length bounds of parameter {i} must be positive"
                    )));
                }
                ParamKind::ShifterTravel(b) => {
                    if graph.bond(b).insert.is_none() {
                        return Err(Error::InvalidParameters(format!("bond {b} has no phase shifter")));
                    }
                    let (lo, hi) = (shifter::TRAVEL_MIN_MM / 1000.0, shifter::TRAVEL_MAX_MM / 1000.0);
                    if p.lower < lo - 1e-15 || p.upper > hi + 1e-15 {
                        return Err(Error::InvalidParameters(format!(
                            "shifter travel bounds [{}, {}] m exceed the slide's [{lo}, {hi}] m",
                            p.lower, p.upper
                        )));
                    }
                }
                ParamKind::Amplitude(l) | ParamKind::Phase(l) if l >= wavefront.lead_count() => {
                    return Err(Error::InvalidParameters(format!(
                        "parameter {i} references missing lead {l}"
                    )));
                }
                ParamKind::Amplitude(_) if !(p.lower > 0.0) => {
                    return Err(Error::InvalidParameters(format!(
                        "amplitude lower bound of parameter {i} must be positive"
                    )));
                }
                ParamKind::Phase(_) if p.lower != -PI || p.upper != PI => {
                    return Err(Error::InvalidParameters(format!(
                        "phase parameter {i} must span [-pi, pi]"
                    )));
                }
                _ => {}
            }
        }
        Ok(ParameterVector { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Parameter] {
        &self.entries
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|p| p.value).collect()
    }

    /// Copies of the graph and wavefront with `values` applied.
    pub fn apply(
        &self,
        values: &[f64],
        graph: &MetricGraph,
        wavefront: &Wavefront,
    ) -> Result<(MetricGraph, Wavefront)> {
        if values.len() != self.entries.len() {
            return Err(Error::DimensionMismatch {
                expected: self.entries.len(),
                found: values.len(),
            });
        }
        let mut graph = graph.clone();
        let mut wavefront = wavefront.clone();
        for (p, &v) in self.entries.iter().zip(values) {
            match p.kind {
                ParamKind::BondLength(b) => graph.set_bond_length(b, v)?,
                ParamKind::ShifterTravel(b) => graph.set_insert_length(b, shifter::length_for_travel(v))?,
                ParamKind::Amplitude(l) => wavefront.set_amplitude(l, v)?,
                ParamKind::Phase(l) => wavefront.set_phase(l, v),
            }
        }
        Ok((graph, wavefront))
    }

    /// Vertices whose forward voltage the gradient reads.
    pub fn forward_vertices(&self, graph: &MetricGraph) -> Vec<usize> {
        let mut v = Vec::new();
        for p in &self.entries {
            if let ParamKind::BondLength(b) | ParamKind::ShifterTravel(b) = p.kind {
                v.push(graph.bond(b).n);
                v.push(graph.bond(b).m);
            }
        }
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Vertices whose adjoint voltage the gradient reads.
    pub fn adjoint_vertices(&self, graph: &MetricGraph) -> Vec<usize> {
        let mut v = self.forward_vertices(graph);
        for p in &self.entries {
            if let ParamKind::Amplitude(l) | ParamKind::Phase(l) = p.kind {
                v.push(graph.lead_vertex(l));
            }
        }
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Nonzero entries of `dM/dp` for one bond parameter: `(n,n)`, `(m,m)` share
/// `diagonal`; `(n,m)`, `(m,n)` share `off_diagonal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemSensitivity {
    pub bond: usize,
    pub n: usize,
    pub m: usize,
    pub diagonal: Complex64,
    pub off_diagonal: Complex64,
}

impl SystemSensitivity {
    pub fn entries(&self) -> [(usize, usize, Complex64); 4] {
        [
            (self.n, self.n, self.diagonal),
            (self.m, self.m, self.diagonal),
            (self.n, self.m, self.off_diagonal),
            (self.m, self.n, self.off_diagonal),
        ]
    }

    /// `(dM/dp) x` as a dense vector.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; x.len()];
        for (i, j, v) in self.entries() {
            out[i] += v * x[j];
        }
        out
    }
}

fn phase_sensitivity(graph: &MetricGraph, k: Wavenumber, bond: usize, dtheta: Complex64) -> Result<SystemSensitivity> {
    let (sin, cos) = bond_trig(graph, bond, k)?;
    let csc = sin.inv();
    let cot = cos * csc;
    let b = graph.bond(bond);
    Ok(SystemSensitivity {
        bond,
        n: b.n,
        m: b.m,
        diagonal: csc * csc * dtheta,
        off_diagonal: -csc * cot * dtheta,
    })
}

/// `dM/dL` for a bond's cable length.
pub fn system_sensitivity(graph: &MetricGraph, k: Wavenumber, bond: usize) -> Result<SystemSensitivity> {
    phase_sensitivity(graph, k, bond, k.value())
}

/// `dM/dd` for the shifter travel inside a bond.
pub fn shifter_sensitivity(graph: &MetricGraph, k: Wavenumber, bond: usize) -> Result<SystemSensitivity> {
    let insert = graph
        .bond(bond)
        .insert
        .ok_or_else(|| Error::InvalidParameters(format!("bond {bond} has no phase shifter")))?;
    let k_insert = insert_wavenumber(k.value(), graph.refractive_index(), insert.index);
    phase_sensitivity(graph, k, bond, k_insert * shifter::LENGTH_PER_TRAVEL)
}

/// The single nonzero entry of `db/dp` for a wavefront parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSensitivity {
    pub vertex: usize,
    pub value: Complex64,
}

pub fn source_sensitivity(graph: &MetricGraph, wavefront: &Wavefront, param: WavefrontParam) -> SourceSensitivity {
    match param {
        WavefrontParam::Amplitude(l) => SourceSensitivity {
            vertex: graph.lead_vertex(l),
            value: Complex64::new(0.0, 2.0) * Complex64::from_polar(1.0, wavefront.phase(l)),
        },
        WavefrontParam::Phase(l) => SourceSensitivity {
            vertex: graph.lead_vertex(l),
            value: -2.0 * wavefront.input(l),
        },
    }
}

pub fn solve_adjoint(system: &SystemMatrix, adjoint_source: &[Complex64]) -> Result<FieldSolution> {
    solve_with(&DenseLu, system, adjoint_source, FieldKind::Adjoint)
}

fn bond_term<F: FieldAccess + ?Sized, G: FieldAccess + ?Sized>(s: &SystemSensitivity, phi: &F, psi: &G) -> f64 {
    let (pn, pm) = (phi.voltage(s.n), phi.voltage(s.m));
    let (qn, qm) = (psi.voltage(s.n), psi.voltage(s.m));
    let bilinear = s.diagonal * (qn * pn + qm * pm) + s.off_diagonal * (qn * pm + qm * pn);
    -2.0 * bilinear.re
}

/// `dg/dp = dg/dp|explicit + 2 Re{ Psi^T (db/dp - dM/dp Phi) }`.
///
/// Reads only the field entries that the sparsity of `dM/dp` and `db/dp`
/// designate, plus the lead voltages the objective itself depends on.
pub fn gradient<F, G>(
    objective: &Objective,
    phi: &F,
    psi: &G,
    params: &ParameterVector,
    graph: &MetricGraph,
    wavefront: &Wavefront,
    k: Wavenumber,
) -> Result<Vec<f64>>
where
    F: FieldAccess + ?Sized,
    G: FieldAccess + ?Sized,
{
    params
        .entries()
        .iter()
        .map(|p| -> Result<f64> {
            let d = match p.kind {
                ParamKind::BondLength(b) => bond_term(&system_sensitivity(graph, k, b)?, phi, psi),
                ParamKind::ShifterTravel(b) => bond_term(&shifter_sensitivity(graph, k, b)?, phi, psi),
                ParamKind::Amplitude(_) | ParamKind::Phase(_) => {
                    let wp = p.kind.wavefront_param().expect("wavefront parameter");
                    let src = source_sensitivity(graph, wavefront, wp);
                    objective.explicit_partial(phi, wavefront, wp)? + 2.0 * (psi.voltage(src.vertex) * src.value).re
                }
            };
            if !d.is_finite() {
                return Err(Error::InvalidParameters(format!(
                    "non-finite gradient for {:?}",
                    p.kind
                )));
            }
            Ok(d)
        })
        .collect()
}

/// Whether actuation snaps shifter travel to whole motor steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Actuation {
    pub quantize_shifter: bool,
}

/// Forward field at one parameter point together with the configuration it
/// was computed for.
#[derive(Debug, Clone)]
pub struct ForwardState {
    pub graph: MetricGraph,
    pub wavefront: Wavefront,
    pub system: SystemMatrix,
    pub phi: FieldSolution,
}

#[derive(Debug, Clone)]
pub struct GradientEvaluation {
    pub value: ObjectiveValue,
    pub gradient: Vec<f64>,
    pub forward: ForwardState,
    pub psi: FieldSolution,
}

/// Digital twin of a network: base configuration, objective and tunables at
/// a fixed operating frequency.
#[derive(Debug, Clone)]
pub struct Twin<S = DenseLu> {
    graph: MetricGraph,
    wavefront: Wavefront,
    objective: Objective,
    params: ParameterVector,
    frequency: f64,
    k: Wavenumber,
    actuation: Actuation,
    solver: S,
}

impl Twin<DenseLu> {
    pub fn new(
        graph: MetricGraph,
        wavefront: Wavefront,
        spec: ObjectiveSpec,
        params: ParameterVector,
        frequency: f64,
    ) -> Result<Self> {
        Twin::with_solver(graph, wavefront, spec, params, frequency, DenseLu)
    }
}

impl<S: LinearSolver> Twin<S> {
    pub fn with_solver(
        graph: MetricGraph,
        wavefront: Wavefront,
        spec: ObjectiveSpec,
        params: ParameterVector,
        frequency: f64,
        solver: S,
    ) -> Result<Self> {
        let k = wavenumber(frequency, graph.refractive_index())?;
        let objective = Objective::new(spec, &graph)?;
        objective.check_wavefront(&wavefront)?;
        // re-validate against this graph
        let params = ParameterVector::new(params.entries().to_vec(), &graph, &wavefront)?;
        Ok(Twin {
            graph,
            wavefront,
            objective,
            params,
            frequency,
            k,
            actuation: Actuation::default(),
            solver,
        })
    }

    pub fn with_actuation(mut self, actuation: Actuation) -> Self {
        self.actuation = actuation;
        self
    }

    pub fn graph(&self) -> &MetricGraph {
        &self.graph
    }

    pub fn wavefront(&self) -> &Wavefront {
        &self.wavefront
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn params(&self) -> &ParameterVector {
        &self.params
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn wavenumber(&self) -> Wavenumber {
        self.k
    }

    pub fn solver(&self) -> &S {
        &self.solver
    }

    /// Parameter values the hardware would actually realize.
    pub fn realize(&self, values: &[f64]) -> Vec<f64> {
        self.params
            .entries()
            .iter()
            .zip(values)
            .map(|(p, &v)| match p.kind {
                ParamKind::ShifterTravel(_) if self.actuation.quantize_shifter => shifter::quantize_travel(v),
                ParamKind::Phase(_) => wrap_phase(v),
                _ => v,
            })
            .collect()
    }

    pub fn forward(&self, values: &[f64]) -> Result<ForwardState> {
        let realized = self.realize(values);
        let (graph, wavefront) = self.params.apply(&realized, &self.graph, &self.wavefront)?;
        let system = assemble_system(&graph, self.k)?;
        let b = driving_source(&graph, &wavefront)?;
        let phi = solve_with(&self.solver, &system, &b, FieldKind::Forward)?;
        Ok(ForwardState {
            graph,
            wavefront,
            system,
            phi,
        })
    }

    pub fn value(&self, values: &[f64]) -> Result<ObjectiveValue> {
        let state = self.forward(values)?;
        self.objective.evaluate(&state.phi, &state.wavefront)
    }

    /// Objective and full gradient from exactly two linear solves.
    pub fn evaluate(&self, values: &[f64]) -> Result<GradientEvaluation> {
        let forward = self.forward(values)?;
        let value = self.objective.evaluate(&forward.phi, &forward.wavefront)?;
        let source = self.objective.adjoint_source(&forward.phi, &forward.wavefront)?;
        let psi = solve_with(&self.solver, &forward.system, &source, FieldKind::Adjoint)?;
        let gradient = gradient(
            &self.objective,
            &forward.phi,
            &psi,
            &self.params,
            &forward.graph,
            &forward.wavefront,
            self.k,
        )?;
        Ok(GradientEvaluation {
            value,
            gradient,
            forward,
            psi,
        })
    }

    /// Gradient by solving one perturbed system per parameter,
    /// `U = M^-1 (db/dp - dM/dp Phi)`, without the adjoint field.
    pub fn direct_gradient(&self, values: &[f64]) -> Result<Vec<f64>> {
        let ForwardState {
            graph,
            wavefront,
            system,
            phi,
            ..
        } = self.forward(values)?;
        let dg_dphi = self.objective.adjoint_source(&phi, &wavefront)?;
        self.params
            .entries()
            .iter()
            .map(|p| -> Result<f64> {
                let (rhs, explicit) = match p.kind {
                    ParamKind::BondLength(b) => {
                        let s = system_sensitivity(&graph, self.k, b)?;
                        (s.apply(&phi.voltages).into_iter().map(|v| -v).collect::<Vec<_>>(), 0.0)
                    }
                    ParamKind::ShifterTravel(b) => {
                        let s = shifter_sensitivity(&graph, self.k, b)?;
                        (s.apply(&phi.voltages).into_iter().map(|v| -v).collect(), 0.0)
                    }
                    ParamKind::Amplitude(_) | ParamKind::Phase(_) => {
                        let wp = p.kind.wavefront_param().expect("wavefront parameter");
                        let src = source_sensitivity(&graph, &wavefront, wp);
                        let mut rhs = vec![ZERO; graph.vertex_count()];
                        rhs[src.vertex] = src.value;
                        (rhs, self.objective.explicit_partial(&phi, &wavefront, wp)?)
                    }
                };
                let u = self.solver.solve(&system, &rhs)?;
                let coupling: Complex64 = dg_dphi.iter().zip(&u).map(|(a, b)| a * b).sum();
                Ok(explicit + 2.0 * coupling.re)
            })
            .collect()
    }
}

/// The twin as an optimization problem over its parameter vector.
impl<S: LinearSolver> Problem for Twin<S> {
    fn bounds(&self) -> Vec<Bound> {
        self.params
            .entries()
            .iter()
            .map(|p| Bound {
                lower: p.lower,
                upper: p.upper,
                periodic: p.kind.is_periodic(),
            })
            .collect()
    }

    fn value(&mut self, x: &[f64]) -> Result<f64> {
        Ok(Twin::value(self, x)?.value)
    }

    fn value_and_gradient(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let eval = self.evaluate(x)?;
        Ok((eval.value.value, eval.gradient))
    }

    fn realized(&self, x: &[f64]) -> Vec<f64> {
        self.realize(x)
    }
}
