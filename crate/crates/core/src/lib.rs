//! Simulated DNN inference serving under a latency SLO.
//!
//! A profiler decides whether a DNN gains more from batching or from running
//! several co-located instances. The chosen knob is then tuned in closed loop:
//! a bracketing search over batch sizes, or additive instance changes seeded
//! by a low-rank completion of the latency-versus-instances matrix. A
//! Clipper-style AIMD batcher serves as the baseline. Everything runs against
//! an analytic GPU model, so results are deterministic for a given seed.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod catalog;
pub mod cli;
pub mod domain;
pub mod error;
pub mod harness;
pub mod matcomp;
pub mod perfmodel;
pub mod profiler;
pub mod scaler;

pub use catalog::Catalog;
pub use domain::{DnnProfile, JobSpec, Knob, KnobKind, LatencyWindow, MetricsRecord};
pub use error::{Error, Result};
pub use harness::{run_job, run_scenario, ControllerKind, JobTrace, RunConfig, RunEnv, Scenario};
pub use perfmodel::GpuModel;
pub use profiler::{Approach, ProfileReport};
