//! Workload analytics and pipeline simulation for RLVR training jobs.
//!
//! The crate is organised bottom-up:
//!
//! * [`trace`] reads, writes and validates per-sample trace files and groups
//!   them into the concurrently-arriving workload of each training step.
//! * [`stats`] computes the characterization battery: summaries, CDFs,
//!   cross-step similarity, prompt clustering, trends and correlation.
//! * [`generator`] samples benchmark workloads and tool latencies from a
//!   trace, and synthesizes traces from parametric recipes.
//! * [`balancer`] assigns requests to ranks (FCFS, LPT, prompt-group LPT).
//! * [`simcore`] prices a single step: rollout with a KV-capacity model,
//!   inference and mini-batched training.
//! * [`pipeline`] composes steps into synchronous or staleness-bounded
//!   asynchronous runs and drives parameter sweeps.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise.

pub mod balancer;
pub mod error;
pub mod generator;
pub mod par;
pub mod pipeline;
pub mod simcore;
pub mod stats;
pub mod trace;

pub use error::{Error, Result};
pub use trace::{TaskType, Trace, TraceRecord, WorkloadStep};
