use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("triplet has no seed slot")]
    EmptyTriplet,

    #[error("unknown sample id {0}")]
    UnknownSample(usize),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error(
        "could not draw a victim-correct seed for class {class} after {attempts} attempts; \
         distractor_strength or victim_noise is too large"
    )]
    SeedResamplingExhausted { class: usize, attempts: usize },

    #[error("correlation undefined: {0} has zero rank variance")]
    UndefinedCorrelation(&'static str),

    #[error("k-NN recall needs more than k={k} generated points, got {n}")]
    TooFewPoints { k: usize, n: usize },

    #[error("class {class}, generation {generation}, triplet {triplet}: {source}")]
    Attack {
        class: usize,
        generation: usize,
        triplet: usize,
        #[source]
        source: Box<Error>,
    },

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
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
