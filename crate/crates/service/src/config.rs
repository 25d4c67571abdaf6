use facevq_core::domain::{QualityLevel, Score, VideoRecord};
use facevq_core::ScoringConfig;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

/// Qualification gate: pass iff at least `min_within` test ratings fall within
/// `tolerance` raw-scale units of their anchors. `max_attempts` counts the
/// first try.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PassRule {
    pub min_within: usize,
    pub tolerance: f64,
    pub max_attempts: u32,
}

impl Default for PassRule {
    fn default() -> Self {
        Self {
            min_within: 12,
            tolerance: 1.0,
            max_attempts: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub batch_size: usize,
    pub max_batches_per_half_day: usize,
    pub test_set_size: usize,
    pub test_pass_rule: PassRule,
    pub shuffle_seed: u64,
    /// Thresholds used by per-batch screening.
    pub scoring: ScoringConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            batch_size: 500,
            max_batches_per_half_day: 2,
            test_set_size: 15,
            test_pass_rule: PassRule::default(),
            shuffle_seed: 0,
            scoring: ScoringConfig::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        let bad = |m: &str| Err(ServiceError::InvalidStudy(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.test_set_size == 0 {
            return bad("test_set_size must be >= 1");
        }
        if self.max_batches_per_half_day == 0 {
            return bad("max_batches_per_half_day must be >= 1");
        }
        let rule = &self.test_pass_rule;
        if rule.min_within == 0 || rule.min_within > self.test_set_size {
            return bad("test_pass_rule.min_within must be in 1..=test_set_size");
        }
        if !(rule.tolerance.is_finite() && rule.tolerance >= 0.0) {
            return bad("test_pass_rule.tolerance must be finite and >= 0");
        }
        if rule.max_attempts == 0 {
            return bad("test_pass_rule.max_attempts must be >= 1");
        }
        self.scoring
            .validate()
            .map_err(|e| ServiceError::InvalidStudy(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingExemplar {
    pub video_id: String,
    pub level: QualityLevel,
    pub criteria: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestAnchor {
    pub video_id: String,
    pub anchor: Score,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateStudyRequest {
    pub study_id: String,
    pub manifest: Vec<VideoRecord>,
    #[serde(default)]
    pub config: StudyConfig,
    #[serde(default)]
    pub training: Option<Vec<TrainingExemplar>>,
    #[serde(default)]
    pub test_set: Vec<TestAnchor>,
    /// Videos used only for training and testing; never part of a batch.
    #[serde(default)]
    pub reference_videos: Vec<VideoRecord>,
}
