use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the controller, simulator or harness.
#[derive(Error, Debug)]
pub enum Error {
    #[error("no samples")]
    NoSamples,

    #[error("invalid quantile {0}: must lie in (0, 1]")]
    InvalidQuantile(f64),

    #[error("invalid baseline throughput {0}")]
    InvalidBaseline(f64),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid profile `{id}`: {reason}")]
    InvalidProfile { id: String, reason: String },

    #[error("invalid job {job_id}: {reason}")]
    InvalidJob { job_id: u32, reason: String },

    #[error("MTL {requested} out of range [1, {max}]")]
    MtlOutOfRange { requested: i64, max: u32 },

    #[error("rank {rank} infeasible for a {rows}x{cols} matrix")]
    RankInfeasible {
        rank: usize,
        rows: usize,
        cols: usize,
    },

    #[error("row {0} has no observed entries")]
    EmptyRow(usize),

    #[error("invalid latency matrix: {0}")]
    InvalidMatrix(String),

    #[error("unknown dnn `{0}`")]
    UnknownDnn(String),

    #[error("zero duration")]
    ZeroDuration,

    #[error("scenario has no jobs")]
    EmptyScenario,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("backend failure: {0}")]
    Backend(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input (files, flags, schema) rather
    /// than a failure while running.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Json { .. }
                | Error::UnknownDnn(_)
                | Error::InvalidProfile { .. }
                | Error::InvalidJob { .. }
                | Error::EmptyScenario
                | Error::ZeroDuration
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
