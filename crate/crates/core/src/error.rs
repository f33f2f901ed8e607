use std::io;

use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("displacement intensity is concentrated on a half-line; phi has no interior minimum")]
    OneSided,

    #[error("bracket search exceeded |t| = {cap} while solving {what}")]
    BracketOverflow { what: &'static str, cap: f64 },

    #[error("lambda = {lambda} is not a root of phi (phi = {phi:e})")]
    NotARoot { lambda: f64, phi: f64 },

    #[error("out of domain: {0}")]
    OutOfDomain(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("population {count} exceeds cap {cap}")]
    PopulationCap { count: usize, cap: usize },

    #[error("unsupported model for {0}")]
    UnsupportedModel(&'static str),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("csv error at line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(line: usize, msg: impl Into<String>) -> Self {
        Error::Config { line, msg: msg.into() }
    }

    /// Process exit status for the CLI: 2 config, 3 analytic precondition, 4 resource cap.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Csv { .. } | Error::InvalidModel(_) | Error::Io(_) => 2,
            Error::PopulationCap { .. } => 4,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
