//! Benchmarking and analysis on top of a scored study.

mod baseline;
mod evaluate;
mod groups;
mod simulate;
mod split;

use thiserror::Error;

pub use baseline::{fit_baseline, predict_baseline, LinearBaseline, RIDGE_LAMBDA};
pub use evaluate::{
    eval_entry, evaluate, evaluate_with_groups, read_predictions_csv, report_csv, PredictionSet,
    PLCC_NOTE,
};
pub use groups::{
    group_analysis, histograms_csv, GroupAnalysis, GroupKey, GroupSummary, HistogramSpec,
};
pub use simulate::{simulate_study, write_latent_csv, SimulatedStudy, SimulationParams};
pub use split::{split_dataset, DatasetSplit, SplitName, SplitSpec};

use crate::metrics::MetricError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("invalid split spec: {0}")]
    InvalidSplit(String),
    #[error("need at least 2 ids with both a prediction and a MOS, got {0}")]
    InsufficientOverlap(usize),
    #[error("unknown grouping key {0}")]
    UnknownGroupKey(String),
    #[error("need at least {needed} training videos, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("missing features for video {0}")]
    MissingFeatures(String),
    #[error("invalid simulation params: {0}")]
    InvalidParams(String),
    #[error("prediction for unknown video {0}")]
    UnknownVideo(String),
    #[error("least squares solve failed")]
    Singular,
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
