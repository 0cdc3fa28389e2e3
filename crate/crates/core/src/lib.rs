//! Deterministic logical-time simulator for local SGD with overlapped Rand-K
//! sparse model averaging and a delay-corrected merge, plus the blocking and
//! overwrite baselines, bound evaluation, and an experiment driver.

pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod mask;
pub mod metrics;
pub mod objective;
pub mod rng;
pub mod suite;
pub mod theory;
pub mod timing;
pub mod vector;

pub use config::{load_config, validate_config, ConfigIssue, ExperimentConfig, ResolvedConfig};
pub use engine::{Method, RoundOutcome, RoundSchedule, Simulator, WorkerState};
pub use error::{Error, Result};
pub use mask::Mask;
pub use metrics::{DriftDiagnostics, MetricsRecord};
pub use rng::{RngStream, StreamKey};
pub use timing::{build_plan, TimingAggregates, TimingPlan};
pub use vector::ModelVector;
