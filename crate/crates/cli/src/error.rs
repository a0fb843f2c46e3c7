use std::path::Path;

use alimony_core::data::DataError;
use alimony_core::hurdle::HurdleError;
use serde::Serialize;

/// Every failure maps to one exit code and prints as one JSON line.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("input file not found: {path}")]
    InputNotFound { path: String },
    #[error("model artifact not found: {path}")]
    ModelNotFound { path: String },
    #[error("invalid model artifact: {0}")]
    Artifact(String),
    #[error(transparent)]
    SchemaMismatch(HurdleError),
    #[error(transparent)]
    Data(DataError),
    #[error(transparent)]
    Training(HurdleError),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
    #[error("service error: {0}")]
    Service(String),
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    exit_code: i32,
    message: String,
}

impl CliError {
    pub fn input_missing(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::InputNotFound {
                path: path.display().to_string(),
            }
        } else {
            CliError::Output {
                path: path.display().to_string(),
                message: e.to_string(),
            }
        }
    }

    pub fn output(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Output {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn code(&self) -> (&'static str, i32) {
        match self {
            CliError::Config(_) => ("invalid_config", 3),
            CliError::InputNotFound { .. } => ("input_not_found", 4),
            CliError::ModelNotFound { .. } => ("model_artifact_not_found", 5),
            CliError::Artifact(_) => ("invalid_model_artifact", 6),
            CliError::SchemaMismatch(_) => ("schema_mismatch", 7),
            CliError::Data(_) => ("invalid_data", 8),
            CliError::Training(_) => ("training_failed", 9),
            CliError::Output { .. } => ("io_error", 10),
            CliError::Service(_) => ("service_error", 11),
        }
    }

    pub fn json_line(&self) -> String {
        let (error, exit_code) = self.code();
        let line = ErrorLine {
            error,
            exit_code,
            message: self.to_string(),
        };
        serde_json::to_string(&line).expect("error line serializes")
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e)
    }
}

impl From<HurdleError> for CliError {
    fn from(e: HurdleError) -> Self {
        match e {
            HurdleError::SchemaMismatch { .. } => CliError::SchemaMismatch(e),
            HurdleError::ArtifactFormat(_) | HurdleError::ArtifactVersion { .. } | HurdleError::ArtifactCorrupt(_) => {
                CliError::Artifact(e.to_string())
            }
            HurdleError::Data(d) => CliError::Data(d),
            other => CliError::Training(other),
        }
    }
}
