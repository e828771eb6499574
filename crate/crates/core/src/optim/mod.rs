//! Bound-constrained gradient ascent/descent.
//!
//! Both methods work in range-scaled coordinates `y = x / (upper - lower)` so
//! that bond lengths, amplitudes and phases share one step size. Periodic
//! coordinates (phases) are never clamped; the problem wraps them when it
//! applies them.

mod mma;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Sense;

pub use mma::MmaMemory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ProjectedGradient,
    Mma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: Method,
    /// Maximum number of optimizer steps; the trace also holds the start point.
    pub max_iterations: usize,
    /// Stop when every `|dg|` over the last `window` iterations is below this.
    pub tolerance: f64,
    pub window: usize,
    /// Stop when the projected, range-scaled gradient norm drops below this.
    pub gradient_tolerance: f64,
    pub armijo: f64,
    pub shrink: f64,
    /// Largest move of any scaled coordinate on the first trial step.
    pub initial_step: f64,
    /// Largest move of any scaled coordinate on any trial step.
    pub max_step: f64,
    /// Backtracking gives up once no scaled coordinate moves by more than this.
    pub min_step: f64,
    pub sense: Sense,
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn new(sense: Sense) -> Self {
        OptimizerConfig {
            method: Method::ProjectedGradient,
            max_iterations: 5000,
            tolerance: 1e-8,
            window: 25,
            gradient_tolerance: 1e-10,
            armijo: 1e-4,
            shrink: 0.5,
            initial_step: 0.05,
            max_step: 0.25,
            min_step: 1e-13,
            sense,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if self.window < 1 {
            return bad("convergence window must be at least 1");
        }
        if !(self.gradient_tolerance >= 0.0) {
            return bad("gradient tolerance must be non-negative");
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("armijo constant must lie in (0, 1)");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink factor must lie in (0, 1)");
        }
        if !(self.initial_step > 0.0 && self.max_step >= self.initial_step && self.min_step > 0.0) {
            return bad("step sizes must satisfy 0 < initial_step <= max_step and min_step > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lower: f64,
    pub upper: f64,
    pub periodic: bool,
}

impl Bound {
    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }

    fn project(&self, x: f64) -> f64 {
        if self.periodic {
            x
        } else {
            x.clamp(self.lower, self.upper)
        }
    }
}

/// Something the optimizer can query. `&mut self` lets instrument emulators
/// keep measurement state between calls.
pub trait Problem {
    fn bounds(&self) -> Vec<Bound>;

    fn value(&mut self, x: &[f64]) -> Result<f64>;

    fn value_and_gradient(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Parameter values as realized by the hardware, recorded in traces.
    fn realized(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub value: f64,
    pub gradient_norm: f64,
    /// Euclidean length of the accepted move in scaled coordinates.
    pub step: f64,
    pub params: Vec<f64>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl IterationRecord {
    /// Equality ignoring wall-clock time.
    pub fn same_numbers(&self, other: &IterationRecord) -> bool {
        self.iteration == other.iteration
            && self.value.to_bits() == other.value.to_bits()
            && self.gradient_norm.to_bits() == other.gradient_norm.to_bits()
            && self.step.to_bits() == other.step.to_bits()
            && self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.value).collect()
    }

    /// Bit-for-bit equality of everything but wall-clock time.
    pub fn same_numbers(&self, other: &IterationTrace) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| a.same_numbers(b))
    }

    /// Whether no accepted iteration worsened the objective.
    pub fn is_monotone(&self, sense: Sense) -> bool {
        self.records.windows(2).all(|w| sense.improves(w[1].value, w[0].value))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum MethodMemory {
    ProjectedGradient {
        previous: Option<(Vec<f64>, Vec<f64>)>,
        eta: Option<f64>,
    },
    Mma(MmaMemory),
}

/// Current iterate plus the method's internal memory.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationState {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iteration: usize,
    pub last_step: f64,
    bounds: Vec<Bound>,
    memory: MethodMemory,
}

impl OptimizationState {
    pub fn bounds(&self) -> &[Bound] {
        &self.bounds
    }

    /// Norm of the range-scaled ascent direction with components pointing out
    /// of active bounds removed.
    pub fn projected_gradient_norm(&self, sense: Sense) -> f64 {
        projected_direction(&self.x, &self.gradient, &self.bounds, sense)
            .iter()
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt()
    }
}

fn projected_direction(x: &[f64], gradient: &[f64], bounds: &[Bound], sense: Sense) -> Vec<f64> {
    x.iter()
        .zip(gradient)
        .zip(bounds)
        .map(|((&xi, &gi), b)| {
            let d = sense.signum() * gi * b.range();
            if b.periodic {
                d
            } else if (xi <= b.lower && d < 0.0) || (xi >= b.upper && d > 0.0) {
                0.0
            } else {
                d
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Objective changes stayed below tolerance over the window.
    ObjectiveConverged,
    GradientConverged,
    /// No improving step exists above the minimum step size.
    Stalled,
    MaxIterations,
}

impl StopReason {
    pub fn is_converged(self) -> bool {
        !matches!(self, StopReason::MaxIterations)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: IterationTrace,
    pub stop: StopReason,
    pub state: OptimizationState,
}

impl RunOutcome {
    pub fn final_value(&self) -> f64 {
        self.state.value
    }

    /// Objective after at most `iterations` optimizer steps. Traces are
    /// monotone, so this is also the best value up to that point.
    pub fn value_at(&self, iterations: usize) -> Option<f64> {
        self.trace
            .records
            .iter()
            .take_while(|r| r.iteration <= iterations)
            .last()
            .map(|r| r.value)
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Optimizer { config })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Evaluates the starting point, after projecting it into the bounds.
    pub fn start<P: Problem + ?Sized>(&self, problem: &mut P, x0: &[f64]) -> Result<OptimizationState> {
        let bounds = problem.bounds();
        if bounds.len() != x0.len() {
            return Err(Error::DimensionMismatch {
                expected: bounds.len(),
                found: x0.len(),
            });
        }
        let x: Vec<f64> = x0.iter().zip(&bounds).map(|(&v, b)| b.project(v)).collect();
        let (value, gradient) = problem.value_and_gradient(&x)?;
        let memory = match self.config.method {
            Method::ProjectedGradient => MethodMemory::ProjectedGradient {
                previous: None,
                eta: None,
            },
            Method::Mma => MethodMemory::Mma(MmaMemory::new(x.len())),
        };
        Ok(OptimizationState {
            x,
            value,
            gradient,
            iteration: 0,
            last_step: 0.0,
            bounds,
            memory,
        })
    }

    /// One accepted update. The new point never worsens the objective.
    pub fn step<P: Problem + ?Sized>(&self, state: &mut OptimizationState, problem: &mut P) -> Result<()> {
        if state.gradient.len() != state.x.len() {
            return Err(Error::DimensionMismatch {
                expected: state.x.len(),
                found: state.gradient.len(),
            });
        }
        let direction = projected_direction(&state.x, &state.gradient, &state.bounds, self.config.sense);
        if direction.iter().all(|d| *d == 0.0) {
            state.iteration += 1;
            state.last_step = 0.0;
            return Ok(());
        }
        let x_new = match self.config.method {
            Method::ProjectedGradient => self.projected_gradient_trial(state, problem, &direction)?,
            Method::Mma => mma::trial(&self.config, state, problem)?,
        };
        let (value, gradient) = problem.value_and_gradient(&x_new)?;
        let step = x_new
            .iter()
            .zip(&state.x)
            .zip(&state.bounds)
            .map(|((a, b), bd)| ((a - b) / bd.range()).powi(2))
            .sum::<f64>()
            .sqrt();
        if let MethodMemory::ProjectedGradient { previous, .. } = &mut state.memory {
            *previous = Some((state.x.clone(), direction));
        }
        state.x = x_new;
        state.value = value;
        state.gradient = gradient;
        state.iteration += 1;
        state.last_step = step;
        Ok(())
    }

    fn projected_gradient_trial<P: Problem + ?Sized>(
        &self,
        state: &mut OptimizationState,
        problem: &mut P,
        direction: &[f64],
    ) -> Result<Vec<f64>> {
        let cfg = &self.config;
        let dmax = direction.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let MethodMemory::ProjectedGradient { previous, eta } = &mut state.memory else {
            unreachable!("memory matches method");
        };
        // Barzilai-Borwein estimate from the last accepted move
        let mut trial = match (previous.as_ref(), *eta) {
            (Some((x_prev, d_prev)), Some(eta_prev)) => {
                let mut ss = 0.0;
                let mut sy = 0.0;
                for (((xi, xp), (di, dp)), b) in state
                    .x
                    .iter()
                    .zip(x_prev)
                    .zip(direction.iter().zip(d_prev))
                    .zip(&state.bounds)
                {
                    let s = (xi - xp) / b.range();
                    ss += s * s;
                    sy += s * (di - dp);
                }
                if sy < 0.0 {
                    ss / -sy
                } else {
                    eta_prev * 2.0
                }
            }
            _ => cfg.initial_step / dmax,
        };
        trial = trial.min(cfg.max_step / dmax);
        let sense = cfg.sense.signum();
        loop {
            let x_new: Vec<f64> = state
                .x
                .iter()
                .zip(direction)
                .zip(&state.bounds)
                .map(|((&xi, &di), b)| b.project(xi + trial * di * b.range()))
                .collect();
            let mut largest = 0.0f64;
            let mut predicted = 0.0;
            for (((a, b), d), bd) in x_new.iter().zip(&state.x).zip(direction).zip(&state.bounds) {
                let s = (a - b) / bd.range();
                largest = largest.max(s.abs());
                predicted += d * s;
            }
            if largest < cfg.min_step {
                return Err(Error::LineSearchStall);
            }
            let value = problem.value(&x_new)?;
            if sense * (value - state.value) >= cfg.armijo * predicted {
                *eta = Some(trial);
                return Ok(x_new);
            }
            trial *= cfg.shrink;
        }
    }

    /// Runs until convergence, stall, or `max_iterations` steps.
    pub fn run<P: Problem + ?Sized>(&self, problem: &mut P, x0: &[f64]) -> Result<RunOutcome> {
        let clock = Instant::now();
        let mut state = self.start(problem, x0).map_err(|e| e.at_iteration(0))?;
        let mut trace = IterationTrace::default();
        trace.records.push(self.record(&state, problem, clock.elapsed()));
        let mut stop = StopReason::MaxIterations;
        if state.projected_gradient_norm(self.config.sense) < self.config.gradient_tolerance {
            stop = StopReason::GradientConverged;
        }
        while stop == StopReason::MaxIterations && state.iteration < self.config.max_iterations {
            match self.step(&mut state, problem) {
                Ok(()) => {}
                Err(Error::LineSearchStall) => {
                    stop = StopReason::Stalled;
                    break;
                }
                Err(e) => return Err(e.at_iteration(state.iteration + 1)),
            }
            trace.records.push(self.record(&state, problem, clock.elapsed()));
            if let Some(reason) = self.converged(&trace, &state) {
                stop = reason;
            }
        }
        Ok(RunOutcome { trace, stop, state })
    }

    /// Trace entry for the current state.
    pub fn record<P: Problem + ?Sized>(
        &self,
        state: &OptimizationState,
        problem: &P,
        elapsed: Duration,
    ) -> IterationRecord {
        IterationRecord {
            iteration: state.iteration,
            value: state.value,
            gradient_norm: state.projected_gradient_norm(self.config.sense),
            step: state.last_step,
            params: problem.realized(&state.x),
            elapsed,
        }
    }

    fn converged(&self, trace: &IterationTrace, state: &OptimizationState) -> Option<StopReason> {
        if state.projected_gradient_norm(self.config.sense) < self.config.gradient_tolerance {
            return Some(StopReason::GradientConverged);
        }
        let w = self.config.window;
        if trace.len() > w {
            let tail = &trace.records[trace.len() - w - 1..];
            if tail
                .windows(2)
                .all(|p| (p[1].value - p[0].value).abs() < self.config.tolerance)
            {
                return Some(StopReason::ObjectiveConverged);
            }
        }
        None
    }
}
