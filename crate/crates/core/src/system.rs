//! System-matrix assembly and the forward problem.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::graph::MetricGraph;
use crate::linalg::{mat_vec, norm2, LuFactors};
use crate::wave::{Wavefront, Wavenumber};

/// Bonds with `|sin(kL)|` at or below this are rejected as resonant.
pub const RESONANCE_EPSILON: f64 = 1e-12;

/// Relative residual accepted from a linear solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Dense, exactly symmetric `M = H(k) + i W^T W`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrix {
    dim: usize,
    entries: Vec<Complex64>,
    wavenumber: Wavenumber,
}

impl SystemMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn wavenumber(&self) -> Wavenumber {
        self.wavenumber
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        mat_vec(&self.entries, self.dim, x)
    }

    /// Largest `|M_ij - M_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).norm());
            }
        }
        worst
    }
}

/// `(sin, cos)` of a bond's electrical phase, with the resonance guard applied.
pub(crate) fn bond_trig(graph: &MetricGraph, bond: usize, k: Wavenumber) -> Result<(Complex64, Complex64)> {
    let theta = graph.bond(bond).phase(k, graph.refractive_index());
    let sin = theta.sin();
    let sin_abs = sin.norm();
    if !(sin_abs > RESONANCE_EPSILON) {
        return Err(Error::NearResonantBond { bond, sin_abs });
    }
    Ok((sin, theta.cos()))
}

pub fn assemble_system(graph: &MetricGraph, k: Wavenumber) -> Result<SystemMatrix> {
    let dim = graph.vertex_count();
    let mut entries = vec![ZERO; dim * dim];
    for (id, bond) in graph.bonds().iter().enumerate() {
        let (sin, cos) = bond_trig(graph, id, k)?;
        let cot = cos / sin;
        let csc = sin.inv();
        entries[bond.n * dim + bond.n] -= cot;
        entries[bond.m * dim + bond.m] -= cot;
        entries[bond.n * dim + bond.m] = csc;
        entries[bond.m * dim + bond.n] = csc;
    }
    for &v in graph.lead_vertices() {
        entries[v * dim + v] += I;
    }
    Ok(SystemMatrix {
        dim,
        entries,
        wavenumber: k,
    })
}

/// `b = 2i W^T I`.
pub fn driving_source(graph: &MetricGraph, wavefront: &Wavefront) -> Result<Vec<Complex64>> {
    check_wavefront(graph, wavefront)?;
    let mut b = vec![ZERO; graph.vertex_count()];
    for (lead, &v) in graph.lead_vertices().iter().enumerate() {
        b[v] = 2.0 * I * wavefront.input(lead);
    }
    Ok(b)
}

pub(crate) fn check_wavefront(graph: &MetricGraph, wavefront: &Wavefront) -> Result<()> {
    if wavefront.lead_count() != graph.lead_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.lead_count(),
            found: wavefront.lead_count(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Forward,
    Adjoint,
}

/// Read access to vertex voltages.
///
/// The gradient and objective code only ever read fields through this trait,
/// which lets the instrument emulator hand them sparse probe readings.
pub trait FieldAccess {
    fn voltage(&self, vertex: usize) -> Complex64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSolution {
    pub voltages: Vec<Complex64>,
    pub wavenumber: Wavenumber,
    pub kind: FieldKind,
}

impl FieldAccess for FieldSolution {
    fn voltage(&self, vertex: usize) -> Complex64 {
        self.voltages[vertex]
    }
}

/// Backend for `M x = b`.
pub trait LinearSolver: Sync {
    fn solve(&self, system: &SystemMatrix, rhs: &[Complex64]) -> Result<Vec<Complex64>>;
}

/// Dense LU with partial pivoting plus one step of iterative refinement when
/// the residual is not already at tolerance.
#[derive(Debug, Clone, Copy, Default)]
pub struct DenseLu;

impl LinearSolver for DenseLu {
    fn solve(&self, system: &SystemMatrix, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        if rhs.len() != system.dim() {
            return Err(Error::DimensionMismatch {
                expected: system.dim(),
                found: rhs.len(),
            });
        }
        let lu = LuFactors::factor(system.entries(), system.dim())?;
        let mut x = lu.solve(rhs)?;
        let scale = norm2(rhs);
        let residual =
            |x: &[Complex64]| -> Vec<Complex64> { system.apply(x).iter().zip(rhs).map(|(ax, b)| b - ax).collect() };
        let r = residual(&x);
        if norm2(&r) > RESIDUAL_TOLERANCE * scale {
            let dx = lu.solve(&r)?;
            x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
            if norm2(&residual(&x)) > RESIDUAL_TOLERANCE * scale {
                return Err(Error::SingularSystem {
                    pivot_ratio: lu.pivot_ratio(),
                });
            }
        }
        Ok(x)
    }
}

pub fn solve_forward(system: &SystemMatrix, source: &[Complex64]) -> Result<FieldSolution> {
    solve_with(&DenseLu, system, source, FieldKind::Forward)
}

pub(crate) fn solve_with<S: LinearSolver + ?Sized>(
    solver: &S,
    system: &SystemMatrix,
    source: &[Complex64],
    kind: FieldKind,
) -> Result<FieldSolution> {
    let voltages = solver.solve(system, source)?;
    Ok(FieldSolution {
        voltages,
        wavenumber: system.wavenumber(),
        kind,
    })
}

/// Outgoing amplitude on each lead, `O = phi - I`.
pub fn scattering_outputs(
    solution: &FieldSolution,
    graph: &MetricGraph,
    wavefront: &Wavefront,
) -> Result<Vec<Complex64>> {
    if solution.kind != FieldKind::Forward {
        return Err(Error::InvalidParameters(
            "scattering outputs need a forward field".into(),
        ));
    }
    check_wavefront(graph, wavefront)?;
    Ok(graph
        .lead_vertices()
        .iter()
        .enumerate()
        .map(|(lead, &v)| solution.voltages[v] - wavefront.input(lead))
        .collect())
}

/// Field at position `x` (meters from vertex `n`) along a bond.
pub fn bond_field(solution: &FieldSolution, graph: &MetricGraph, bond: usize, x: f64) -> Result<Complex64> {
    let b = graph
        .bonds()
        .get(bond)
        .ok_or_else(|| Error::InvalidParameters(format!("no bond {bond}")))?;
    let total = b.total_length();
    if !(0.0..=total).contains(&x) {
        return Err(Error::InvalidParameters(format!(
            "position {x} m outside bond {bond} of length {total} m"
        )));
    }
    let k = solution.wavenumber;
    let (sin_total, _) = bond_trig(graph, bond, k)?;
    let n_r = graph.refractive_index();
    let theta_total = b.phase(k, n_r);
    let theta_x = b.phase_at(k, n_r, x);
    let phi_n = solution.voltages[b.n];
    let phi_m = solution.voltages[b.m];
    Ok((phi_n * (theta_total - theta_x).sin() + phi_m * theta_x.sin()) / sin_total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBudget {
    pub input: f64,
    pub outgoing: f64,
    pub absorbed: f64,
}

pub fn power_budget(solution: &FieldSolution, graph: &MetricGraph, wavefront: &Wavefront) -> Result<PowerBudget> {
    let outputs = scattering_outputs(solution, graph, wavefront)?;
    let input = wavefront.input_power();
    let outgoing: f64 = outputs.iter().map(|o| o.norm_sqr()).sum();
    Ok(PowerBudget {
        input,
        outgoing,
        absorbed: input - outgoing,
    })
}

/// Lead-to-lead response: column `beta` holds the outgoing amplitudes for a
/// unit injection on lead `beta`. Returned row-major, `N x N`.
pub fn scattering_matrix(graph: &MetricGraph, k: Wavenumber, exec: Execution) -> Result<Vec<Complex64>> {
    let system = assemble_system(graph, k)?;
    let lu = LuFactors::factor(system.entries(), system.dim())?;
    let leads = graph.lead_count();
    let columns = exec.map_range(leads, |beta| -> Result<Vec<Complex64>> {
        let mut b = vec![ZERO; graph.vertex_count()];
        b[graph.lead_vertex(beta)] = 2.0 * I;
        let phi = lu.solve(&b)?;
        Ok((0..leads)
            .map(|alpha| {
                let out = phi[graph.lead_vertex(alpha)];
                if alpha == beta {
                    out - 1.0
                } else {
                    out
                }
            })
            .collect())
    });
    let mut s = vec![ZERO; leads * leads];
    for (beta, column) in columns.into_iter().enumerate() {
        for (alpha, value) in column?.into_iter().enumerate() {
            s[alpha * leads + beta] = value;
        }
    }
    Ok(s)
}
