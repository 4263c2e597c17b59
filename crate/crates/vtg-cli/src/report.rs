//! Error taxonomy with exit codes, and JSON report emission.

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use vtg_core::grounding_model::ModelError;
use vtg_core::ste_embedding::SteError;
use vtg_core::time_tokenizer::TimeTokenError;
use vtg_core::token_compression::CompressionError;
use vtg_core::vtg_data::DataError;
use vtg_core::vtg_metrics::MetricsError;

/// Everything a subcommand can fail with. Config, I/O, and validation
/// problems exit 1; broken internal invariants exit 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("validation: {0}")]
    Validation(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Internal(_) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Validation(_) => "validation",
            CliError::Internal(_) => "internal",
        }
    }

    /// One-line machine-readable error for stderr.
    pub fn structured(&self) -> String {
        #[derive(Serialize)]
        struct Structured<'a> {
            error: &'a str,
            kind: &'a str,
            exit_code: i32,
        }
        let msg = self.to_string();
        serde_json::to_string(&Structured {
            error: &msg,
            kind: self.kind(),
            exit_code: self.exit_code(),
        })
        .expect("error serialization is infallible")
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(format!("json: {e}"))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<TimeTokenError> for CliError {
    fn from(e: TimeTokenError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SteError> for CliError {
    fn from(e: SteError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<CompressionError> for CliError {
    fn from(e: CompressionError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(msg) => CliError::Config(msg),
            ModelError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

/// Creates `out_dir` if needed and writes `{name}.json` (pretty, trailing
/// newline). Returns the report path.
pub fn write_report<T: Serialize>(
    out_dir: &Path,
    name: &str,
    report: &T,
) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", out_dir.display())))?;
    let path = out_dir.join(format!("{name}.json"));
    let mut body = serde_json::to_string_pretty(report)?;
    body.push('\n');
    std::fs::write(&path, body)
        .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
    Ok(path)
}
