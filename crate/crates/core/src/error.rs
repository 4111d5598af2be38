use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("input contains no frames")]
    EmptyInput,

    #[error("degenerate frame: zero spread along axis {axis}")]
    DegenerateFrame { axis: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("insufficient data: need at least {needed} frames, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("insufficient evaluation sample: need at least {needed}, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    #[error("candidate permutation count exceeds the cap of {cap}; raise the probability threshold")]
    CandidateExplosion { cap: usize },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("regime {regime} collapsed (total responsibility {mass:.3e})")]
    RegimeDeath { regime: usize, mass: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::EmptyInput => "empty_input",
            Error::DegenerateFrame { .. } => "degenerate_frame",
            Error::Numeric(_) => "numeric",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::InsufficientSample { .. } => "insufficient_sample",
            Error::CandidateExplosion { .. } => "candidate_explosion",
            Error::ContractViolation(_) => "contract_violation",
            Error::RegimeDeath { .. } => "regime_death",
            Error::Config(_) => "config",
            Error::Format(_) => "format",
        }
    }
}
