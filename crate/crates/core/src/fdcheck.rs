//! Central finite-difference check of the adjoint gradient.

use crate::adjoint::Twin;
use crate::error::Result;
use crate::exec::Execution;
use crate::system::LinearSolver;

/// Components smaller than this fraction of the largest adjoint component
/// are compared against that scale instead of their own magnitude.
pub const GRADIENT_SCALE_FLOOR: f64 = 1e-4;

/// Rounding allowance of a difference quotient, in units of
/// `eps * max(|g|, 1) / h`: about 40 ulps of evaluation noise times the
/// stencil's amplification of 1.5. Discrepancies below it are not counted.
pub const ROUNDING_ULPS: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(p+h) - f(p-h)) / 2h`, error `O(h^2)`.
    Central,
    /// Richardson-extrapolated central difference, error `O(h^4)`.
    Central4,
}

/// Step rule `h = base * max(1, |p|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRule {
    pub base: f64,
    pub stencil: Stencil,
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule {
            base: 1e-5,
            stencil: Stencil::Central4,
        }
    }
}

impl StepRule {
    /// Plain central differences with a fixed step.
    pub fn central(h: f64) -> Self {
        StepRule {
            base: h,
            stencil: Stencil::Central,
        }
    }

    pub fn step(&self, value: f64) -> f64 {
        self.base * value.abs().max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdEntry {
    pub adjoint: f64,
    pub numeric: f64,
    pub step: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub entries: Vec<FdEntry>,
    pub max_relative_error: f64,
}

impl FdReport {
    pub fn worst(&self) -> Option<(usize, &FdEntry)> {
        self.entries
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.relative_error.total_cmp(&b.1.relative_error))
    }
}

/// `|a - b| / max(|a|, |b|, scale)`; zero when both vanish.
pub fn relative_error(a: f64, b: f64, scale: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(scale);
    if denom == 0.0 {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

/// Compares the adjoint gradient at `values` against finite differences of
/// the full pipeline (re-assemble, re-solve, re-evaluate). Mismatches are
/// reported, never raised; only solver failures return an error.
pub fn fd_check<S: LinearSolver>(twin: &Twin<S>, values: &[f64], rule: StepRule, exec: Execution) -> Result<FdReport> {
    let base = twin.evaluate(values)?;
    let g_scale = base.value.value.abs().max(1.0);
    let adjoint = base.gradient;
    let numeric = exec.map_range(values.len(), |i| -> Result<(f64, f64)> {
        let h = rule.step(values[i]);
        let mut x = values.to_vec();
        let mut at = |offset: f64| -> Result<f64> {
            x[i] = values[i] + offset;
            Ok(twin.value(&x)?.value)
        };
        let d1 = (at(h)? - at(-h)?) / (2.0 * h);
        let d = match rule.stencil {
            Stencil::Central => d1,
            Stencil::Central4 => {
                let d2 = (at(2.0 * h)? - at(-2.0 * h)?) / (4.0 * h);
                (4.0 * d1 - d2) / 3.0
            }
        };
        Ok((d, h))
    });
    let scale = GRADIENT_SCALE_FLOOR * adjoint.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let mut entries = Vec::with_capacity(values.len());
    for (a, n) in adjoint.into_iter().zip(numeric) {
        let (numeric, step) = n?;
        let noise = ROUNDING_ULPS * f64::EPSILON * g_scale / step;
        let excess = ((a - numeric).abs() - noise).max(0.0);
        entries.push(FdEntry {
            adjoint: a,
            numeric,
            step,
            relative_error: relative_error(excess, 0.0, scale.max(a.abs()).max(numeric.abs())),
        });
    }
    let max_relative_error = entries.iter().map(|e| e.relative_error).fold(0.0, f64::max);
    Ok(FdReport {
        entries,
        max_relative_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjoint::{ParamKind, Parameter, ParameterVector};
    use crate::graph::{Bond, MetricGraph};
    use crate::objective::ObjectiveSpec;
    use crate::wave::Wavefront;
    use num_complex::Complex64;

    fn two_port_twin() -> Twin {
        let g = MetricGraph::new(2, vec![Bond::new(0, 1, 0.27)], vec![0, 1], Complex64::new(1.0, 0.0085)).unwrap();
        let w = Wavefront::new(vec![1.0, 0.0], vec![0.3, 0.0]).unwrap();
        let params = ParameterVector::new(
            vec![
                Parameter::new(ParamKind::BondLength(0), 0.27, 0.2, 0.3),
                Parameter::new(ParamKind::Amplitude(0), 1.0, 0.001, 3.0),
                Parameter::phase(0, 0.3),
            ],
            &g,
            &w,
        )
        .unwrap();
        let spec = ObjectiveSpec::Tmt {
            injected: vec![0],
            targeted: vec![1],
        };
        Twin::new(g, w, spec, params, 2.1e9).unwrap()
    }

    #[test]
    fn quadratic_transmission_objective_on_two_port() {
        let twin = two_port_twin();
        let report = fd_check(
            &twin,
            &twin.params().values(),
            StepRule::default(),
            Execution::Sequential,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-7, "{report:?}");
    }

    #[test]
    fn large_steps_show_quadratic_error_growth() {
        let twin = two_port_twin();
        let x = twin.params().values();
        let err = |h: f64| {
            let r = fd_check(&twin, &x, StepRule::central(h), Execution::Sequential).unwrap();
            (r.entries[0].adjoint - r.entries[0].numeric).abs()
        };
        let (e1, e2) = (err(0.0027), err(0.0027 / 2.0));
        // halving h divides the truncation error by ~4
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
        // and dominates rounding noise
        assert!(e1 > 1e-8, "e1 {e1}");
    }

    #[test]
    fn parallel_and_sequential_reports_match() {
        let twin = two_port_twin();
        let x = twin.params().values();
        let a = fd_check(&twin, &x, StepRule::default(), Execution::Sequential).unwrap();
        let b = fd_check(&twin, &x, StepRule::default(), Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1, 1e-4) - 0.1 / 1.1).abs() < 1e-15);
        assert!((relative_error(1e-12, 0.0, 1e-9) - 1e-3).abs() < 1e-15);
    }
}
