use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: u64, reason: String },

    #[error("dimension mismatch at {location}: {reason}")]
    DimensionMismatch { location: String, reason: String },

    #[error("label out of range at {location}: label {label} >= n_classes {n_classes}")]
    LabelOutOfRange {
        location: String,
        label: u64,
        n_classes: usize,
    },

    #[error("non-finite value at {location}")]
    NonFinite { location: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("chromosome length {actual} does not match {kind} (expected {expected})")]
    LengthMismatch {
        kind: String,
        expected: usize,
        actual: usize,
    },

    #[error("chromosome kind mismatch: {0} vs {1}")]
    KindMismatch(String, String),

    #[error("cannot parse chromosome: {0}")]
    ParseChromosome(String),

    #[error("degenerate training set: {0}")]
    DegenerateDataset(String),

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("empty test set")]
    EmptyTestSet,

    #[error("step {step} outside schedule range [{start}, {end}]")]
    StepOutOfRange { step: u64, start: u64, end: u64 },

    #[error("fitness evaluation {eval_index} failed for {chromosome}: {source}")]
    Fitness {
        eval_index: usize,
        chromosome: String,
        #[source]
        source: Box<Error>,
    },

    #[error("missing reference report: {0}")]
    MissingReport(String),

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
