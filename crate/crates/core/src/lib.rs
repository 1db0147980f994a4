//! ECG-only binary emotion classification.
//!
//! The pipeline turns raw single-lead ECG exports into a positive/negative
//! affect decision per 10-second epoch:
//!
//! ```text
//! CSV exports -> ingest -> dsp (notch, band-limit, baseline, epoch)
//!             -> features (time / frequency / HRV, 22 values)
//!             -> selection (ExtraTrees importance -> ANOVA-F filter)
//!             -> models / ensemble (23 classifiers + soft voting)
//!             -> eval (personalized or generalized protocol, metrics)
//! ```
//!
//! Normalization and feature selection are always fitted on training rows
//! only and applied unchanged to test rows. The `synth` module generates
//! seeded synthetic ECG with known ground truth, which the test suites use
//! as their oracle.

pub mod dsp;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod matrix;
pub mod models;
pub mod selection;
pub mod synth;

mod rngutil;

pub use error::{Error, Result};
pub use features::{FeatureTable, FeatureVector, FEATURE_NAMES, N_FEATURES};
pub use ingest::{BinaryLabel, EcgRecording, Emotion, IngestSchema};
pub use matrix::Matrix;
