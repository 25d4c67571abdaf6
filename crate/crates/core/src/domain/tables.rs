use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Five-band quality categorisation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityLevel {
    Bad,
    Poor,
    Fair,
    Good,
    Excellent,
}

impl QualityLevel {
    pub const ALL: [QualityLevel; 5] = [
        QualityLevel::Bad,
        QualityLevel::Poor,
        QualityLevel::Fair,
        QualityLevel::Good,
        QualityLevel::Excellent,
    ];

    /// Left-closed bins of width 20 on the MOS scale; values beyond either
    /// end fall into the outermost bands.
    pub fn from_mos(mos: f64) -> Self {
        if mos < 20.0 {
            QualityLevel::Bad
        } else if mos < 40.0 {
            QualityLevel::Poor
        } else if mos < 60.0 {
            QualityLevel::Fair
        } else if mos < 80.0 {
            QualityLevel::Good
        } else {
            QualityLevel::Excellent
        }
    }

    /// Level of a raw 0-5 slider value, one unit per band.
    pub fn from_raw(raw: f64) -> Self {
        Self::from_mos(raw * 20.0)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QualityLevel::Bad => "bad",
            QualityLevel::Poor => "poor",
            QualityLevel::Fair => "fair",
            QualityLevel::Good => "good",
            QualityLevel::Excellent => "excellent",
        }
    }
}

impl fmt::Display for QualityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectStats {
    pub subject_id: String,
    pub mu: f64,
    pub sigma: f64,
    pub n: usize,
}

/// Per-video raw score distribution used by outlier detection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    pub video_id: String,
    pub mean: f64,
    pub stddev: f64,
    /// Non-excess kurtosis `m4 / m2^2`; absent for degenerate samples.
    pub kurtosis_beta2: Option<f64>,
    pub n: usize,
    pub is_gaussian: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosEntry {
    pub video_id: String,
    pub mos: f64,
    #[serde(rename = "stddev")]
    pub stddev_rescaled: f64,
    pub n_raters: usize,
    pub level: QualityLevel,
}

/// Per-video MOS, kept sorted by `video_id`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<MosEntry>", into = "Vec<MosEntry>")]
pub struct MosTable {
    entries: Vec<MosEntry>,
}

impl MosTable {
    pub fn new(mut entries: Vec<MosEntry>) -> Self {
        entries.sort_by(|a, b| a.video_id.cmp(&b.video_id));
        Self { entries }
    }

    pub fn entries(&self) -> &[MosEntry] {
        &self.entries
    }

    pub fn get(&self, video_id: &str) -> Option<&MosEntry> {
        self.entries
            .binary_search_by(|e| e.video_id.as_str().cmp(video_id))
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mos_map(&self) -> BTreeMap<&str, f64> {
        self.entries
            .iter()
            .map(|e| (e.video_id.as_str(), e.mos))
            .collect()
    }
}

impl From<Vec<MosEntry>> for MosTable {
    fn from(entries: Vec<MosEntry>) -> Self {
        MosTable::new(entries)
    }
}

impl From<MosTable> for Vec<MosEntry> {
    fn from(table: MosTable) -> Self {
        table.entries
    }
}

/// Low-level visual statistics of a frame or a whole video.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameFeatures {
    pub brightness: f64,
    pub contrast: f64,
    pub colorfulness: f64,
    pub sharpness: f64,
}

impl FrameFeatures {
    pub fn as_array(&self) -> [f64; 4] {
        [self.brightness, self.contrast, self.colorfulness, self.sharpness]
    }
}

/// Correlations are `None` when undefined (constant input or fewer than two
/// samples).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub srcc: Option<f64>,
    pub plcc: Option<f64>,
    pub krcc: Option<f64>,
    pub level_accuracy: Option<f64>,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_id: String,
    pub predictor_name: String,
    pub note: String,
    pub overall: EvalEntry,
    /// Keyed by `"<grouping key>=<group label>"`, sorted.
    pub subgroups: BTreeMap<String, EvalEntry>,
    /// Ids in the evaluated subset that have no prediction.
    pub missing_predictions: Vec<String>,
}
