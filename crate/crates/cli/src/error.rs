use std::path::Path;

use thiserror::Error;

use happimeter_core::featurize::FeaturizeError;
use happimeter_core::forest::ForestError;
use happimeter_core::sim::SimError;
use happimeter_server::config::ConfigError;
use happimeter_server::csvio::BundleError;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config or input rows.
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    /// 0 success, 1 validation/config, 2 IO, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<BundleError> for CliError {
    fn from(e: BundleError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read { .. } => CliError::Io(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<FeaturizeError> for CliError {
    fn from(e: FeaturizeError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<ForestError> for CliError {
    fn from(e: ForestError) -> Self {
        CliError::Internal(e.to_string())
    }
}
