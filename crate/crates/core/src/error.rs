use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure at epoch {epoch}, step {step}: loss = {loss}")]
    NonFinite { epoch: usize, step: usize, loss: f64 },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("{path}: row {row}: {msg}")]
    Parse { path: PathBuf, row: usize, msg: String },

    #[error("plan hash mismatch: manifest has {found}, plan is {expected}")]
    PlanMismatch { expected: String, found: String },

    #[error("{0} already holds an experiment; resume it or choose another directory")]
    ExistingExperiment(PathBuf),

    #[error("missing artifacts: {}", .0.join(", "))]
    MissingArtifacts(Vec<String>),

    #[error("all columns masked; no completed runs to estimate from")]
    AllMasked,

    #[error("no valid records")]
    NoValidRecords,

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("dataset too large for oracle: N = {n} > max_N = {max_n}")]
    TooLarge { n: usize, max_n: usize },

    #[error("training failed for {condition}: {source}")]
    Training {
        condition: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
