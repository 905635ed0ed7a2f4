use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot write output: {0}")]
    Write(#[from] std::io::Error),

    #[error("{path}: line {line}, column {column}, at `{field}`: {message}")]
    Parse {
        path: PathBuf,
        field: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error(transparent)]
    Model(#[from] geocache::Error),

    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),

    #[error("json output failed: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn scenario(msg: impl Into<String>) -> CliError {
    CliError::Scenario(msg.into())
}

/// Machine-readable error object written to stderr on failure.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
}

impl CliError {
    pub fn report(&self) -> ErrorReport {
        let mut report = ErrorReport {
            kind: self.kind(),
            message: self.to_string(),
            field: None,
            line: None,
            column: None,
            hint: None,
        };
        match self {
            CliError::Parse {
                field,
                line,
                column,
                ..
            } => {
                report.field = Some(field.clone());
                report.line = Some(*line);
                report.column = Some(*column);
            }
            CliError::Model(geocache::Error::UnsupportedDimension { .. }) => {
                report.hint = Some("run `geocache simulate` to estimate the pmf instead".into());
            }
            _ => {}
        }
        report
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Read { .. } => "io",
            CliError::Write(_) | CliError::Csv(_) | CliError::Json(_) => "output",
            CliError::Parse { .. } => "config-parse",
            CliError::Scenario(_) => "invalid-scenario",
            CliError::Model(e) => e.kind(),
            CliError::Usage(_) => "usage",
        }
    }

    pub fn is_broken_pipe(&self) -> bool {
        let io = match self {
            CliError::Write(e) => Some(e),
            CliError::Csv(e) => match e.kind() {
                csv::ErrorKind::Io(e) => Some(e),
                _ => None,
            },
            CliError::Json(e) => return e.io_error_kind() == Some(std::io::ErrorKind::BrokenPipe),
            _ => None,
        };
        io.is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe)
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}
