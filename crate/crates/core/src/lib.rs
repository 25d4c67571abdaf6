//! Core library for running subjective face-video quality studies and
//! benchmarking quality predictors against the resulting opinion scores.
//!
//! The crate is organised bottom-up:
//!
//! - [`domain`]: shared record types, the 0.1-step rating grid, manifest
//!   validation and the sparse score matrix.
//! - [`scoring`]: outlier detection, subject rejection, per-subject z-scores,
//!   rescaling to `[0, 100]` and MOS aggregation.
//! - [`metrics`]: SRCC, PLCC, KRCC (tau-b) and level accuracy.
//! - [`features`]: per-frame brightness, contrast, colorfulness and sharpness.
//! - [`harness`]: dataset splits, predictor evaluation, group analyses, a
//!   linear feature baseline and a synthetic study simulator.

pub mod domain;
pub mod features;
pub mod harness;
pub mod metrics;
pub mod scoring;

pub use domain::{
    MosEntry, MosTable, OutlierMask, Platform, QualityLevel, RatingEvent, Score, ScoreMatrix,
    SessionKind, SubjectProfile, SubjectStatus, VideoRecord,
};
pub use scoring::{run_pipeline, ScoredStudy, ScoringConfig};
