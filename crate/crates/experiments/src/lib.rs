//! Twin experiments for ensemble-based implicit sampling: configuration,
//! synthetic data, forward-model adapters, run orchestration and the
//! persisted artifacts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod models;
mod persist;
pub mod runner;
pub mod synthetic;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{ExperimentError, Result};
pub use runner::{oracle_report, run, RunOutcome, RunSummary};
pub use synthetic::{generate_synthetic_data, SyntheticData};
