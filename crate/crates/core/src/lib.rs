//! Knowledge-graph backed learned query optimisation.

pub mod check;
pub mod column;
pub mod embed;
pub mod kg;
pub mod model;
pub mod plan;
pub mod policy;
pub mod scaler;
pub mod sim;
pub mod sql;

pub use column::ColumnRef;
pub use embed::{ColumnUniverse, FeatureMatrix};
pub use plan::{OperatorKind, PlanTree};
pub use scaler::LogMinMaxScaler;
pub use sql::ParsedQuery;

use kg::KgError;
use sim::{ConfigError, ReportError, SimError, TraceError};

/// Process exit status for each error class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    Usage = 1,
    Data = 2,
    Internal = 3,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Store(#[from] KgError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn trace_class(e: &TraceError) -> ExitClass {
    match e {
        TraceError::Io { .. } => ExitClass::Usage,
        _ => ExitClass::Data,
    }
}

fn store_class(e: &KgError) -> ExitClass {
    match e {
        KgError::Io(_) => ExitClass::Usage,
        _ => ExitClass::Data,
    }
}

impl Error {
    pub fn class(&self) -> ExitClass {
        match self {
            Error::Config(_) | Error::Io { .. } => ExitClass::Usage,
            Error::Trace(e) => trace_class(e),
            Error::Store(e) => store_class(e),
            Error::Report(ReportError::Io { .. }) => ExitClass::Usage,
            Error::Report(_) => ExitClass::Data,
            Error::Model(model::ModelError::Checkpoint(_)) => ExitClass::Data,
            Error::Model(_) => ExitClass::Internal,
            Error::Sim(e) => match e {
                SimError::Config(_) | SimError::BatchLargerThanTrace { .. } => ExitClass::Usage,
                SimError::Trace(e) => trace_class(e),
                SimError::Store(e) => store_class(e),
                SimError::Shape(_)
                | SimError::Model(_)
                | SimError::Policy(_)
                | SimError::Scaler(_) => ExitClass::Internal,
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class() as i32
    }
}
