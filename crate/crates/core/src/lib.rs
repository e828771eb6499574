//! Wave scattering on networks of coaxial cables: a frequency-domain digital
//! twin, adjoint gradients, bound-constrained optimizers and an emulated
//! measurement loop.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod error;
pub mod exec;
pub mod fdcheck;
pub mod graph;
pub mod instrument;
pub mod linalg;
pub mod objective;
pub mod optim;
pub mod scenario;
pub mod system;
pub mod trace;
pub mod wave;

pub use adjoint::{ParamKind, Parameter, ParameterVector, Twin};
pub use error::{Error, Result};
pub use exec::Execution;
pub use graph::{Bond, LineInsert, MetricGraph};
pub use objective::{Modality, Objective, ObjectiveSpec, Sense};
pub use optim::{Method, Optimizer, OptimizerConfig, RunOutcome, StopReason};
pub use wave::{wavenumber, Wavefront, Wavenumber};
