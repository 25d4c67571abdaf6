//! Raw ratings to MOS.
//!
//! The pipeline runs once, in this order: per-video outlier detection on the
//! raw scores, rejection of subjects with too many outliers, per-subject
//! z-scores over the surviving scores, a linear rescale onto `[0, 100]`, and
//! per-video averaging.

mod normalize;
mod outliers;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use normalize::{
    compute_mos, mos_to_level, rescale, subject_stats, subject_stats_for, z_scores, CellValues,
    ExcludedSubject, MosOutcome, SubjectStatsError, SubjectStatsOutcome,
};
pub use outliers::{
    detect_outliers, detect_outliers_with_stats, distribution_stats, kurtosis, reject_subjects,
    subject_outlier_ratios, Kurtosis, SubjectOutlierRatio,
};

use crate::domain::{
    MatrixError, MosTable, RatingEvent, Score, ScoreMatrix, SessionKind, SubjectStats,
    ValidatedManifest,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub gaussian_sigma_mult: f64,
    pub nongaussian_sigma_mult: f64,
    pub subject_outlier_limit: f64,
    pub kurtosis_gaussian_range: [f64; 2],
    pub min_ratings_for_outlier_test: usize,
    pub sigma_floor: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            gaussian_sigma_mult: 2.0,
            nongaussian_sigma_mult: 20f64.sqrt(),
            subject_outlier_limit: 0.05,
            kurtosis_gaussian_range: [2.0, 4.0],
            min_ratings_for_outlier_test: 4,
            sigma_floor: 1e-9,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<(), ScoringError> {
        let bad = |msg: &str| Err(ScoringError::InvalidConfig(msg.to_string()));
        if !(self.gaussian_sigma_mult > 0.0 && self.nongaussian_sigma_mult > 0.0) {
            return bad("sigma multipliers must be > 0");
        }
        if !(self.subject_outlier_limit > 0.0 && self.subject_outlier_limit < 1.0) {
            return bad("subject_outlier_limit must lie in (0, 1)");
        }
        let [lo, hi] = self.kurtosis_gaussian_range;
        if !(lo < hi) {
            return bad("kurtosis_gaussian_range lower bound must be below upper bound");
        }
        if !(self.sigma_floor >= 0.0) {
            return bad("sigma_floor must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("invalid scoring config: {0}")]
    InvalidConfig(String),
    #[error("degenerate distribution (n = {n} or zero variance)")]
    DegenerateDistribution { n: usize },
    #[error("score matrix is empty")]
    EmptyMatrix,
    #[error("no formal ratings")]
    NoFormalRatings,
    #[error("no stats row for subject {0}")]
    MissingStats(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Assemble,
    DetectOutliers,
    RejectSubjects,
    SubjectStats,
    ZScores,
    Rescale,
    ComputeMos,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Assemble => "assemble",
            Stage::DetectOutliers => "detect_outliers",
            Stage::RejectSubjects => "reject_subjects",
            Stage::SubjectStats => "subject_stats",
            Stage::ZScores => "z_scores",
            Stage::Rescale => "rescale",
            Stage::ComputeMos => "compute_mos",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{stage}: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: ScoringError,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<ScoringError>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError {
            stage,
            source: e.into(),
        })
    }
}

/// Where every input score ended up. The buckets are disjoint and sum to
/// `total`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreAccounting {
    pub total: usize,
    pub surviving: usize,
    /// Masked cells of subjects that were kept.
    pub masked: usize,
    /// Every cell of a rejected subject, masked or not.
    pub rejected_subject: usize,
    /// Unmasked cells of subjects excluded as degenerate.
    pub excluded_subject: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredStudy {
    /// Input matrix with the outlier mask attached.
    pub matrix: ScoreMatrix,
    pub rejected_subjects: BTreeSet<String>,
    pub excluded_subjects: Vec<ExcludedSubject>,
    pub subject_outliers: Vec<SubjectOutlierRatio>,
    pub subject_stats: Vec<SubjectStats>,
    pub mos_table: MosTable,
    pub unscorable_videos: Vec<String>,
    /// Masked cells over all cells.
    pub outlier_fraction: f64,
    /// Rescaled scores that fell outside `[0, 100]` (kept, not clipped).
    pub out_of_range_rescaled: usize,
    pub accounting: ScoreAccounting,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierCell {
    pub video_id: String,
    pub subject_id: String,
    pub raw_score: Score,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n_videos: usize,
    pub n_subjects: usize,
    pub n_scores: usize,
    pub n_outliers: usize,
    pub outlier_fraction: f64,
    pub accounting: ScoreAccounting,
    pub rejected_subjects: Vec<String>,
    pub excluded_subjects: Vec<ExcludedSubject>,
    pub subject_outliers: Vec<SubjectOutlierRatio>,
    pub unscorable_videos: Vec<String>,
    pub out_of_range_rescaled: usize,
    pub config: ScoringConfig,
}

impl ScoredStudy {
    pub fn outlier_cells(&self) -> Vec<OutlierCell> {
        let m = &self.matrix;
        m.outlier_mask()
            .iter()
            .map(|(v, s)| OutlierCell {
                video_id: m.videos()[v].clone(),
                subject_id: m.subjects()[s].clone(),
                raw_score: m.get(v, s).expect("mask cells carry scores"),
            })
            .collect()
    }

    pub fn report(&self, cfg: &ScoringConfig) -> PipelineReport {
        PipelineReport {
            n_videos: self.matrix.videos().len(),
            n_subjects: self.matrix.subjects().len(),
            n_scores: self.matrix.n_scores(),
            n_outliers: self.matrix.outlier_mask().len(),
            outlier_fraction: self.outlier_fraction,
            accounting: self.accounting,
            rejected_subjects: self.rejected_subjects.iter().cloned().collect(),
            excluded_subjects: self.excluded_subjects.clone(),
            subject_outliers: self.subject_outliers.clone(),
            unscorable_videos: self.unscorable_videos.clone(),
            out_of_range_rescaled: self.out_of_range_rescaled,
            config: cfg.clone(),
        }
    }
}

/// Score the formal ratings in `events` against `manifest`. Every manifest
/// video gets a matrix row; rows left without surviving scores are listed in
/// [`ScoredStudy::unscorable_videos`].
pub fn run_pipeline(
    events: &[RatingEvent],
    manifest: &ValidatedManifest,
    cfg: &ScoringConfig,
) -> Result<ScoredStudy, PipelineError> {
    cfg.validate().at(Stage::Assemble)?;
    if !events.iter().any(|e| e.session_kind == SessionKind::Formal) {
        return Err(ScoringError::NoFormalRatings).at(Stage::Assemble);
    }
    let matrix =
        ScoreMatrix::from_events_with_videos(manifest.sorted_ids(), events).at(Stage::Assemble)?;
    score_matrix(matrix, cfg)
}

/// The pipeline proper, starting from an assembled matrix. Any mask already
/// on `matrix` is replaced.
pub fn score_matrix(matrix: ScoreMatrix, cfg: &ScoringConfig) -> Result<ScoredStudy, PipelineError> {
    cfg.validate().at(Stage::Assemble)?;
    let mask = detect_outliers(&matrix, cfg).at(Stage::DetectOutliers)?;
    let matrix = matrix.with_mask(mask).at(Stage::DetectOutliers)?;
    let mask = matrix.outlier_mask();

    let rejected = reject_subjects(&matrix, mask, cfg);
    let subject_outliers = subject_outlier_ratios(&matrix, mask);

    let SubjectStatsOutcome { stats, excluded } = subject_stats(&matrix, &rejected, cfg);
    let mut skip: BTreeSet<String> = rejected.clone();
    skip.extend(excluded.iter().map(|e| e.subject_id.clone()));

    let z = z_scores(&matrix, &skip, &stats).at(Stage::ZScores)?;
    let rescaled = z.map(rescale);
    let out_of_range_rescaled = rescaled
        .iter()
        .filter(|&(_, _, x)| !(0.0..=100.0).contains(&x))
        .count();
    let MosOutcome { table, unscorable } = compute_mos(&matrix, &rescaled);

    let accounting = account(&matrix, &rejected, &skip, rescaled.len());
    let total = matrix.n_scores();
    let outlier_fraction = if total == 0 {
        0.0
    } else {
        mask.len() as f64 / total as f64
    };

    Ok(ScoredStudy {
        rejected_subjects: rejected,
        excluded_subjects: excluded,
        subject_outliers,
        subject_stats: stats,
        mos_table: table,
        unscorable_videos: unscorable,
        outlier_fraction,
        out_of_range_rescaled,
        accounting,
        matrix,
    })
}

fn account(
    matrix: &ScoreMatrix,
    rejected: &BTreeSet<String>,
    skip: &BTreeSet<String>,
    surviving: usize,
) -> ScoreAccounting {
    let mut acc = ScoreAccounting {
        total: matrix.n_scores(),
        surviving,
        ..Default::default()
    };
    for (v, s, _) in matrix.cells() {
        let id = &matrix.subjects()[s];
        if rejected.contains(id) {
            acc.rejected_subject += 1;
        } else if matrix.is_masked(v, s) {
            acc.masked += 1;
        } else if skip.contains(id) {
            acc.excluded_subject += 1;
        }
    }
    acc
}
