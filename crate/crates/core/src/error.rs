use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed data: {0}")]
    Format(String),

    #[error("corpus contains no turns")]
    EmptyCorpus,

    #[error("dialogue {dialogue:?}: {message}")]
    InvalidDialogue { dialogue: String, message: String },

    #[error("dialogue {dialogue:?}, turn {turn}: speakers must alternate starting with the user")]
    AlternationViolation { dialogue: String, turn: usize },

    #[error("duplicate dialogue id {0:?}")]
    DuplicateId(String),

    #[error("label {0:?} is not in the vocabulary")]
    UnknownLabel(String),

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("node {0} not found in graph")]
    NodeNotFound(String),

    #[error("width mismatch: expected {expected}, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("reference set is empty")]
    EmptyReferenceSet,

    #[error("input is empty")]
    EmptyInput,

    #[error("need at least two samples per group, got {0} and {1}")]
    InsufficientSamples(usize, usize),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("graph has no agent decision nodes")]
    NoAgentNodes,

    #[error("training diverged at epoch {epoch} (non-finite parameters)")]
    Divergence {
        epoch: usize,
        last_finite: Box<crate::policy::PolicyModel>,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input data or configuration rather than
    /// by a bug or the environment.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Divergence { .. } => false,
            Error::Stage { source, .. } => source.is_data_error(),
            _ => true,
        }
    }
}

/// Attaches a pipeline stage name to errors.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
