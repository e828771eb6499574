//! Conservative convex separable approximation with moving asymptotes.
//!
//! Works on `f = -sign * g` in scaled coordinates, so it always minimizes.
//! Each outer step solves the separable subproblem in closed form and raises
//! the damping `rho` until the approximation is conservative at the trial
//! point, which makes every accepted step non-worsening.

use crate::error::{Error, Result};

use super::{Bound, MethodMemory, OptimizationState, OptimizerConfig, Problem};

const INITIAL_SPREAD: f64 = 0.5;
const ASYMPTOTE_GROW: f64 = 1.2;
const ASYMPTOTE_SHRINK: f64 = 0.7;
const RHO_INITIAL: f64 = 1.0;
const RHO_MIN: f64 = 1e-5;
const MAX_INNER: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct MmaMemory {
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Scaled iterates `y_{k-1}` and `y_{k-2}`.
    history: Vec<Vec<f64>>,
    rho: f64,
}

impl MmaMemory {
    pub(crate) fn new(n: usize) -> Self {
        MmaMemory {
            lower: vec![0.0; n],
            upper: vec![0.0; n],
            history: Vec::new(),
            rho: RHO_INITIAL,
        }
    }
}

fn scaled_box(b: &Bound, y: f64) -> (f64, f64) {
    if b.periodic {
        (y - 0.5, y + 0.5)
    } else {
        (b.lower / b.range(), b.upper / b.range())
    }
}

pub(crate) fn trial<P: Problem + ?Sized>(
    cfg: &OptimizerConfig,
    state: &mut OptimizationState,
    problem: &mut P,
) -> Result<Vec<f64>> {
    let sense = cfg.sense.signum();
    let bounds = state.bounds.clone();
    let n = state.x.len();
    let y: Vec<f64> = state.x.iter().zip(&bounds).map(|(x, b)| x / b.range()).collect();
    let df: Vec<f64> = state
        .gradient
        .iter()
        .zip(&bounds)
        .map(|(g, b)| -sense * g * b.range())
        .collect();
    let f0 = -sense * state.value;
    let MethodMemory::Mma(mem) = &mut state.memory else {
        unreachable!("memory matches method");
    };

    for j in 0..n {
        let (lo, hi) = scaled_box(&bounds[j], y[j]);
        let span = hi - lo;
        if mem.history.len() < 2 {
            mem.lower[j] = y[j] - INITIAL_SPREAD * span;
            mem.upper[j] = y[j] + INITIAL_SPREAD * span;
        } else {
            let osc = (y[j] - mem.history[0][j]) * (mem.history[0][j] - mem.history[1][j]);
            let gamma = if osc < 0.0 {
                ASYMPTOTE_SHRINK
            } else if osc > 0.0 {
                ASYMPTOTE_GROW
            } else {
                1.0
            };
            let prev = mem.history[0][j];
            mem.lower[j] = y[j] - gamma * (prev - mem.lower[j]);
            mem.upper[j] = y[j] + gamma * (mem.upper[j] - prev);
        }
        mem.lower[j] = mem.lower[j].clamp(y[j] - 10.0 * span, y[j] - 0.01 * span);
        mem.upper[j] = mem.upper[j].clamp(y[j] + 0.01 * span, y[j] + 10.0 * span);
    }

    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];
    for j in 0..n {
        let (lo, hi) = scaled_box(&bounds[j], y[j]);
        let span = hi - lo;
        let move_limit = cfg.max_step.min(0.5 * span);
        alpha[j] = lo
            .max(mem.lower[j] + 0.1 * (y[j] - mem.lower[j]))
            .max(y[j] - move_limit);
        beta[j] = hi
            .min(mem.upper[j] - 0.1 * (mem.upper[j] - y[j]))
            .min(y[j] + move_limit);
    }

    for _ in 0..MAX_INNER {
        let rho = mem.rho;
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        let mut y_new = vec![0.0; n];
        for j in 0..n {
            let (u, l) = (mem.upper[j], mem.lower[j]);
            let (plus, minus) = (df[j].max(0.0), (-df[j]).max(0.0));
            p[j] = (u - y[j]).powi(2) * (1.001 * plus + 0.001 * minus + rho);
            q[j] = (y[j] - l).powi(2) * (0.001 * plus + 1.001 * minus + rho);
            let (sp, sq) = (p[j].sqrt(), q[j].sqrt());
            y_new[j] = ((sp * l + sq * u) / (sp + sq)).clamp(alpha[j], beta[j]);
        }
        let largest = y_new.iter().zip(&y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if largest < cfg.min_step {
            return Err(Error::LineSearchStall);
        }
        let mut approx = f0;
        let mut w = 0.0;
        for j in 0..n {
            let (u, l) = (mem.upper[j], mem.lower[j]);
            approx += p[j] / (u - y_new[j]) + q[j] / (y_new[j] - l) - p[j] / (u - y[j]) - q[j] / (y[j] - l);
            w += (u - l) * (y_new[j] - y[j]).powi(2) / ((u - y_new[j]) * (y_new[j] - l));
        }
        let x_new: Vec<f64> = y_new.iter().zip(&bounds).map(|(v, b)| v * b.range()).collect();
        let x_new: Vec<f64> = x_new
            .iter()
            .zip(&bounds)
            .map(|(&v, b)| if b.periodic { v } else { v.clamp(b.lower, b.upper) })
            .collect();
        let f_new = -sense * problem.value(&x_new)?;
        if f_new <= approx && f_new <= f0 {
            mem.rho = (0.1 * mem.rho).max(RHO_MIN);
            mem.history.insert(0, y);
            mem.history.truncate(2);
            return Ok(x_new);
        }
        let raise = if w > 0.0 { (f_new - approx).max(0.0) / w } else { 0.0 };
        mem.rho = (10.0 * rho).min(1.1 * (rho + raise)).max(2.0 * rho);
    }
    Err(Error::LineSearchStall)
}
