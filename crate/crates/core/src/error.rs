use std::path::PathBuf;

use thiserror::Error;

use crate::model::SubTask;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure talking to a remote text-generation endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("transport error after {attempts} attempt(s){}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
pub struct TransportError {
    pub status: Option<u16>,
    pub attempts: u32,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: invalid field `{field}`: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    #[error("unknown task label `{0}`")]
    UnknownTask(String),

    #[error("invalid template `{id}`: {message}")]
    Template { id: String, message: String },

    #[error("reward undefined for eval-only task {0}")]
    EvalOnlyTask(SubTask),

    #[error("answer must be non-empty")]
    EmptyAnswer,

    #[error("text contains a reserved tag `{0}`")]
    ReservedTag(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {min} items, got {got}")]
    TooFew { min: usize, got: usize },

    #[error("item {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("task mismatch: template is {template}, sample is {sample}")]
    TaskMismatch { template: SubTask, sample: SubTask },

    #[error("no templates available for task {0}")]
    NoTemplates(SubTask),

    #[error("record `{0}` has no reasoning")]
    MissingReasoning(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("state {0} was not issued by this environment or was already consumed")]
    StaleState(u64),

    #[error("expected group of {expected} responses, got {got}")]
    GroupSize { expected: usize, got: usize },

    #[error("no sample with id `{0}` in the dataset")]
    UnknownSample(String),

    #[error("scripted policy needs the current sample to answer")]
    MissingSample,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Transport(#[from] TransportError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at(index: usize, err: Error) -> Self {
        Error::AtIndex {
            index,
            source: Box::new(err),
        }
    }

    /// True when the root cause is a transport failure.
    pub fn is_transport(&self) -> bool {
        match self {
            Error::Transport(_) => true,
            Error::AtIndex { source, .. } => source.is_transport(),
            _ => false,
        }
    }
}
