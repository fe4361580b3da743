use std::io;

use thiserror::Error;

/// Errors produced anywhere in the training stack.
#[derive(Debug, Error)]
pub enum ScnError {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("state error: {0}")]
    State(String),
    #[error("parse error at {record}: {message}")]
    Parse { record: String, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ScnError>;

impl ScnError {
    pub(crate) fn shape(op: &'static str, left: impl Into<String>, right: impl Into<String>) -> Self {
        ScnError::Shape {
            op,
            left: left.into(),
            right: right.into(),
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        ScnError::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        ScnError::Numeric(msg.into())
    }

    pub(crate) fn parse(record: impl Into<String>, message: impl Into<String>) -> Self {
        ScnError::Parse {
            record: record.into(),
            message: message.into(),
        }
    }
}
