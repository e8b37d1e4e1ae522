//! Trace-driven replacement for live execution.
//!
//! A trace fixes, for every query and arm, the runtime and plan the DBMS
//! would have produced. The online loop replays it batch by batch, so every
//! run is an exact, repeatable function of (trace, config, seed).

mod config;
mod report;
mod run;
pub mod synth;
mod trace;

pub use config::{ColdStart, ConfigError, RunConfig};
pub use report::{
    to_json_pretty, write_file, write_report, Curve, ReportError, RunSummary, StoreSummary,
    CURVE_FILE, SUMMARY_FILE,
};
pub use run::{
    best_arm_agreement, expensive_admissions, populate_store, run_online, Admission,
    AgreementBasis, Counters, CurveRow, DecisionLine, RunOutput, RunReport,
};
pub use trace::{
    default_environment, load_trace, oracle_runtime, parse_trace, template_best_arms, EntryDoc,
    Trace, TraceEntry, TraceError, TraceLine,
};

use crate::kg::KgError;
use crate::model::ModelError;
use crate::policy::PolicyError;
use crate::scaler::ScalerError;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("batch size {batch_size} exceeds the {entries} trace entries")]
    BatchLargerThanTrace { batch_size: usize, entries: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Store(#[from] KgError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Scaler(#[from] ScalerError),
}
