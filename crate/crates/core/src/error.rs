//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A required column is missing from a CSV header.
    #[error("{path}: column `{column}` not found in CSV header")]
    MissingColumn { path: PathBuf, column: String },

    /// A sample cell failed to parse as a finite number.
    #[error("{path}: non-numeric or non-finite sample `{value}` at data row {row}")]
    NonNumericSample {
        path: PathBuf,
        row: usize,
        value: String,
    },

    /// A recording file contained a header but no samples.
    #[error("{0}: file contains no samples")]
    EmptyFile(PathBuf),

    /// An emotion outside the six modeled classes.
    #[error("emotion `{0}` is outside the six modeled classes")]
    UnsupportedEmotion(String),

    /// A filter frequency that cannot be realized at the given sampling rate.
    #[error("invalid filter frequency: {0}")]
    InvalidFrequency(String),

    /// A discretized filter section with a pole on or outside the unit circle.
    #[error("unstable filter design: pole magnitude {0} >= 1")]
    UnstableFilter(f64),

    /// Welch segment longer than the signal it should be cut from.
    #[error("Welch segment length {segment} exceeds signal length {signal}")]
    SegmentTooLong { segment: usize, signal: usize },

    /// A requested spectral band that exceeds the PSD frequency grid.
    #[error("band [{lo}, {hi}] Hz exceeds the PSD grid (max {max} Hz)")]
    BandOutsideGrid { lo: f64, hi: f64, max: f64 },

    /// Too few rows to fit an estimator.
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    /// Training labels contain a single class.
    #[error("training data contains a single class")]
    SingleClassTraining,

    /// Fewer features than the selection stages require.
    #[error("selection needs at least {needed} features, got {got}")]
    InsufficientFeatures { needed: usize, got: usize },

    /// Column count differs between fit and transform/predict.
    #[error("expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// NaN or infinity in a training or prediction matrix.
    #[error("non-finite value in input matrix")]
    NonFiniteInput,

    /// Probability request on a model that has no probability output.
    #[error("model `{0}` does not produce class probabilities")]
    UnsupportedProbability(String),

    /// Ensemble weights that do not line up with the member list.
    #[error("{got} weights supplied for {members} ensemble members")]
    WeightMismatch { members: usize, got: usize },

    /// Personalized split with no (subject, emotion) group of sufficient size.
    #[error("no (subject, emotion) group has at least {0} epochs")]
    NoEligibleGroups(usize),

    /// Generalized split over too few subjects.
    #[error("generalized split needs at least {needed} subjects, got {got}")]
    TooFewSubjects { needed: usize, got: usize },

    /// Metric inputs of different lengths.
    #[error("label sequences differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// A model name that does not resolve against the registry.
    #[error("unknown model name `{0}`")]
    UnknownModel(String),

    /// A malformed ingest schema or run configuration.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// CSV parse failure.
    #[error(transparent)]
    Csv(#[from] csv::Error),

    /// JSON encode/decode failure.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
