use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Tiktok,
    Youtube,
    Other,
}

impl Platform {
    pub fn as_str(self) -> &'static str {
        match self {
            Platform::Tiktok => "tiktok",
            Platform::Youtube => "youtube",
            Platform::Other => "other",
        }
    }
}

/// Face attribute labels a manifest may carry. Values are taken as given.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Gender,
    Race,
    AgeGroup,
    Emotion,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::Gender,
        Attribute::Race,
        Attribute::AgeGroup,
        Attribute::Emotion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::Gender => "gender",
            Attribute::Race => "race",
            Attribute::AgeGroup => "age_group",
            Attribute::Emotion => "emotion",
        }
    }
}

/// One face video and the metadata the analyses group on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub media_uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames_dir: Option<String>,
    pub platform: Platform,
    pub category: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<Attribute, String>,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub duration_s: f64,
}

impl VideoRecord {
    pub fn attribute(&self, attribute: Attribute) -> Option<&str> {
        self.attributes.get(&attribute).map(String::as_str)
    }

    /// Local filesystem path of the media, if `media_uri` is not a remote URL.
    pub fn local_media_path(&self) -> Option<&Path> {
        if let Some(rest) = self.media_uri.strip_prefix("file://") {
            return Some(Path::new(rest));
        }
        if self.media_uri.contains("://") {
            return None;
        }
        Some(Path::new(&self.media_uri))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestViolation {
    pub video_id: String,
    pub message: String,
}

impl ManifestViolation {
    fn new(video_id: &str, message: impl Into<String>) -> Self {
        Self {
            video_id: video_id.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ManifestViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.video_id, self.message)
    }
}

/// A manifest whose records satisfy every invariant. Unreadable local media
/// is reported in `warnings` without failing validation.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidatedManifest {
    records: Vec<VideoRecord>,
    index: BTreeMap<String, usize>,
    pub warnings: Vec<ManifestViolation>,
}

impl ValidatedManifest {
    pub fn records(&self) -> &[VideoRecord] {
        &self.records
    }

    pub fn get(&self, video_id: &str) -> Option<&VideoRecord> {
        self.index.get(video_id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, video_id: &str) -> bool {
        self.index.contains_key(video_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Video ids in ascending order.
    pub fn sorted_ids(&self) -> Vec<String> {
        self.index.keys().cloned().collect()
    }

    pub fn into_records(self) -> Vec<VideoRecord> {
        self.records
    }
}

pub fn validate_manifest(
    records: &[VideoRecord],
) -> Result<ValidatedManifest, Vec<ManifestViolation>> {
    if records.is_empty() {
        return Err(vec![ManifestViolation::new("", "manifest is empty")]);
    }
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = BTreeSet::new();
    let mut index = BTreeMap::new();

    for (i, record) in records.iter().enumerate() {
        let id = record.video_id.as_str();
        if id.is_empty() {
            violations.push(ManifestViolation::new(id, "video_id must be nonempty"));
        }
        if !seen.insert(id) {
            violations.push(ManifestViolation::new(id, format!("duplicate id {id}")));
        } else {
            index.insert(id.to_string(), i);
        }
        if !(record.fps.is_finite() && record.fps > 0.0) {
            violations.push(ManifestViolation::new(id, "fps must be > 0"));
        }
        if !(record.duration_s.is_finite() && record.duration_s > 0.0) {
            violations.push(ManifestViolation::new(id, "duration_s must be > 0"));
        }
        if record.width == 0 {
            violations.push(ManifestViolation::new(id, "width must be > 0"));
        }
        if record.height == 0 {
            violations.push(ManifestViolation::new(id, "height must be > 0"));
        }
        if record.media_uri.is_empty() {
            violations.push(ManifestViolation::new(id, "media_uri must be nonempty"));
        } else if let Some(path) = record.local_media_path() {
            if !path.is_file() {
                warnings.push(ManifestViolation::new(
                    id,
                    format!("media_uri {} is not a readable file", record.media_uri),
                ));
            }
        }
    }

    if violations.is_empty() {
        Ok(ValidatedManifest {
            records: records.to_vec(),
            index,
            warnings,
        })
    } else {
        Err(violations)
    }
}

#[cfg(test)]
pub(crate) fn test_record(id: &str) -> VideoRecord {
    VideoRecord {
        video_id: id.to_string(),
        media_uri: format!("https://example.org/{id}.mp4"),
        frames_dir: None,
        platform: Platform::Tiktok,
        category: "vlog".to_string(),
        attributes: BTreeMap::new(),
        fps: 30.0,
        width: 720,
        height: 1280,
        duration_s: 8.0,
    }
}
