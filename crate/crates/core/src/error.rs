use std::io;

use thiserror::Error;

/// Errors raised anywhere in the emphasis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("rank error: {0}")]
    Rank(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("mask selects no positions")]
    DegenerateMask,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("index {index} out of range for table of size {size}")]
    OutOfRange { index: usize, size: usize },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("training integrity error: {0}")]
    TrainingIntegrity(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("load error in section {section}: {msg}")]
    Load { section: String, msg: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn load(section: &str, msg: impl Into<String>) -> Self {
        Error::Load {
            section: section.to_string(),
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
