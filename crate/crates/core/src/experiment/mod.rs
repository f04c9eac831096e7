//! Experiment configs, the four runner operations and their output files.

pub mod config;
pub mod output;
pub mod runner;
pub mod svg;

use serde::Serialize;

use crate::error::RedsError;

pub use config::{ExperimentConfig, NamedFeature, SCHEMA_VERSION};
pub use output::RunManifest;
pub use runner::{compare, oracle, run, strip, with_workers};

/// Process exit code for an error: 2 for bad configs or inputs, 3 when no
/// seed has a feasible direction, 4 for I/O failures, 1 otherwise.
pub fn exit_code(err: &RedsError) -> i32 {
    match err {
        RedsError::InvalidConfig(_) | RedsError::InvalidInput(_) | RedsError::Json(_) => 2,
        RedsError::EmptySubspace(_) => 3,
        RedsError::Io(_) => 4,
        _ => 1,
    }
}

/// The machine-readable error record printed on failure.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub message: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub advisory: Option<String>,
}

impl ErrorRecord {
    pub fn from_error(err: &RedsError) -> Self {
        let error = match err {
            RedsError::InvalidInput(_) => "invalid-input",
            RedsError::InvalidConfig(_) => "invalid-config",
            RedsError::Evaluation { .. } => "evaluation",
            RedsError::SingularMatrix(_) => "singular-matrix",
            RedsError::EmptySubspace(_) => "empty-subspace",
            RedsError::Unsupported(_) => "unsupported",
            RedsError::InsufficientData(_) => "insufficient-data",
            RedsError::DegenerateAttribute(_) => "degenerate-attribute",
            RedsError::Io(_) => "io",
            RedsError::Json(_) => "json",
        };
        let advisory = matches!(err, RedsError::EmptySubspace(_)).then(|| {
            "every seed has an empty truncated nullspace; lower beta_f on the fixed features \
             to relax the constraint"
                .to_string()
        });
        Self { error, message: err.to_string(), exit_code: exit_code(err), advisory }
    }
}
