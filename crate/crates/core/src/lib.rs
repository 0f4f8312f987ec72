//! Simulation of repeated learning loops in which a model's own predictions
//! flow back into its training data, together with the density, moment, and
//! normality diagnostics used to watch the residual distribution evolve.

// `!(x > 0.0)` is used on purpose throughout so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod data;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod regress;
pub mod sim;

pub use data::{Dataset, GeneratorTag};
pub use density::EmpiricalDistribution;
pub use diagnostics::DiagnosticsReport;
pub use error::{Error, Result};
pub use regress::TrainedModel;
pub use sim::{LoopConfig, LoopState, ProbeConfig, Setting};
