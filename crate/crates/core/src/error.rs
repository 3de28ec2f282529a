use std::io;

use thiserror::Error;

/// Errors surfaced by the solvers, the simulator and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("family {family} expects {expected} parameter(s), got {got}")]
    FamilyArity {
        family: String,
        expected: usize,
        got: usize,
    },
    #[error("parameter {value} outside [0, 1]")]
    ParameterRange { value: f64 },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("zero-probability output {y} under the given belief and policy")]
    ZeroProbabilityOutput { y: usize },
    #[error("message {0} has zero posterior mass")]
    ZeroMass(u64),
    #[error("estimated message carries all posterior mass; cannot condition on the alternative")]
    DegenerateHypothesis,
    #[error("channel admits no state-synchronizing input")]
    MissingSyncInput,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("all {0} episodes were truncated")]
    AllTruncated(usize),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short category name reported by the CLI next to a nonzero exit status.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidChannel(_)
            | Error::FamilyArity { .. }
            | Error::ParameterRange { .. }
            | Error::MissingSyncInput => "channel",
            Error::InvalidConfig(_) | Error::InvalidArgument(_) | Error::IndexOutOfRange(_) => {
                "config"
            }
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => "io",
            _ => "runtime",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "channel" => 3,
            "io" => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
