//! Gradient-noise experiments for SGD and heavy-ball momentum on synthetic
//! objectives. See `examples/` for one program per measurement.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod noise;
pub mod optimizers;
pub mod problems;
pub mod rng;
pub mod smoothing;
pub mod stats;
pub mod sweep;

pub use error::{Error, Result};
pub use optimizers::{run, Algorithm, ExitReason, OptimizerConfig, Trace, TraceOptions};
pub use problems::{Objective, ObjectiveKind, ProblemConfig};
pub use rng::RngStream;
pub use sweep::{StopKind, StopRule};
