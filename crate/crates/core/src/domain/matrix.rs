use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{RatingEvent, Score, SessionKind};

/// Cells `(video index, subject index)` excluded as outliers.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OutlierMask(BTreeSet<(usize, usize)>);

impl OutlierMask {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, video: usize, subject: usize) -> bool {
        self.0.insert((video, subject))
    }

    pub fn contains(&self, video: usize, subject: usize) -> bool {
        self.0.contains(&(video, subject))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.iter().copied()
    }
}

impl FromIterator<(usize, usize)> for OutlierMask {
    fn from_iter<T: IntoIterator<Item = (usize, usize)>>(iter: T) -> Self {
        Self(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatrixError {
    #[error("duplicate formal rating by subject {subject_id} for video {video_id}")]
    DuplicateRating { subject_id: String, video_id: String },
    #[error("rating references unknown video {0}")]
    UnknownVideo(String),
    #[error("cell ({video}, {subject}) is out of bounds")]
    OutOfBounds { video: usize, subject: usize },
    #[error("masked cell ({video}, {subject}) has no score")]
    MaskWithoutScore { video: usize, subject: usize },
    #[error("duplicate id {0} in matrix axis")]
    DuplicateAxisId(String),
}

/// Sparse videos x subjects table of raw scores with an outlier mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixWire", into = "MatrixWire")]
pub struct ScoreMatrix {
    videos: Vec<String>,
    subjects: Vec<String>,
    scores: BTreeMap<(usize, usize), Score>,
    outlier_mask: OutlierMask,
}

impl ScoreMatrix {
    pub fn new(videos: Vec<String>, subjects: Vec<String>) -> Result<Self, MatrixError> {
        for axis in [&videos, &subjects] {
            let mut seen = BTreeSet::new();
            for id in axis {
                if !seen.insert(id) {
                    return Err(MatrixError::DuplicateAxisId(id.clone()));
                }
            }
        }
        Ok(Self {
            videos,
            subjects,
            scores: BTreeMap::new(),
            outlier_mask: OutlierMask::new(),
        })
    }

    /// Assemble from the formal ratings in `events`. Both axes are sorted by
    /// id, so the result does not depend on event order.
    pub fn from_events(events: &[RatingEvent]) -> Result<Self, MatrixError> {
        let videos: BTreeSet<&str> = formal(events).map(|e| e.video_id.as_str()).collect();
        Self::from_events_with_videos(videos.into_iter().map(str::to_string).collect(), events)
    }

    /// Assemble with a fixed video axis (sorted). Videos without ratings get
    /// empty rows; ratings for videos outside the axis are an error.
    pub fn from_events_with_videos(
        mut videos: Vec<String>,
        events: &[RatingEvent],
    ) -> Result<Self, MatrixError> {
        videos.sort();
        let subjects: BTreeSet<&str> = formal(events).map(|e| e.subject_id.as_str()).collect();
        let subjects: Vec<String> = subjects.into_iter().map(str::to_string).collect();
        let mut matrix = Self::new(videos, subjects)?;
        let video_pos: BTreeMap<&str, usize> =
            matrix.videos.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
        let subject_pos: BTreeMap<&str, usize> =
            matrix.subjects.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut cells = Vec::new();
        for event in formal(events) {
            let v = *video_pos
                .get(event.video_id.as_str())
                .ok_or_else(|| MatrixError::UnknownVideo(event.video_id.clone()))?;
            let s = subject_pos[event.subject_id.as_str()];
            cells.push((v, s, event.raw_score));
        }
        for (v, s, score) in cells {
            matrix.insert(v, s, score)?;
        }
        Ok(matrix)
    }

    pub fn insert(&mut self, video: usize, subject: usize, score: Score) -> Result<(), MatrixError> {
        if video >= self.videos.len() || subject >= self.subjects.len() {
            return Err(MatrixError::OutOfBounds { video, subject });
        }
        if self.scores.insert((video, subject), score).is_some() {
            return Err(MatrixError::DuplicateRating {
                subject_id: self.subjects[subject].clone(),
                video_id: self.videos[video].clone(),
            });
        }
        Ok(())
    }

    pub fn with_mask(mut self, mask: OutlierMask) -> Result<Self, MatrixError> {
        if let Some((video, subject)) = mask.iter().find(|cell| !self.scores.contains_key(cell)) {
            return Err(MatrixError::MaskWithoutScore { video, subject });
        }
        self.outlier_mask = mask;
        Ok(self)
    }

    pub fn videos(&self) -> &[String] {
        &self.videos
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn video_index(&self, id: &str) -> Option<usize> {
        self.videos.iter().position(|v| v == id)
    }

    pub fn subject_index(&self, id: &str) -> Option<usize> {
        self.subjects.iter().position(|s| s == id)
    }

    pub fn get(&self, video: usize, subject: usize) -> Option<Score> {
        self.scores.get(&(video, subject)).copied()
    }

    pub fn outlier_mask(&self) -> &OutlierMask {
        &self.outlier_mask
    }

    pub fn is_masked(&self, video: usize, subject: usize) -> bool {
        self.outlier_mask.contains(video, subject)
    }

    pub fn n_scores(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// All cells in (video, subject) order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, Score)> + '_ {
        self.scores.iter().map(|(&(v, s), &score)| (v, s, score))
    }

    /// Cells of one video row, in subject order.
    pub fn video_cells(&self, video: usize) -> impl Iterator<Item = (usize, Score)> + '_ {
        self.scores
            .range((video, 0)..(video + 1, 0))
            .map(|(&(_, s), &score)| (s, score))
    }

    /// Per-subject list of `(video, score)` cells, indexed by subject.
    pub fn by_subject(&self) -> Vec<Vec<(usize, Score)>> {
        let mut rows = vec![Vec::new(); self.subjects.len()];
        for (v, s, score) in self.cells() {
            rows[s].push((v, score));
        }
        rows
    }
}

fn formal(events: &[RatingEvent]) -> impl Iterator<Item = &RatingEvent> {
    events.iter().filter(|e| e.session_kind == SessionKind::Formal)
}

#[derive(Serialize, Deserialize)]
struct MatrixWire {
    videos: Vec<String>,
    subjects: Vec<String>,
    cells: Vec<(usize, usize, Score)>,
    outlier_mask: OutlierMask,
}

impl From<ScoreMatrix> for MatrixWire {
    fn from(m: ScoreMatrix) -> Self {
        let cells = m.cells().collect();
        MatrixWire {
            videos: m.videos,
            subjects: m.subjects,
            cells,
            outlier_mask: m.outlier_mask,
        }
    }
}

impl TryFrom<MatrixWire> for ScoreMatrix {
    type Error = MatrixError;

    fn try_from(wire: MatrixWire) -> Result<Self, Self::Error> {
        let mut m = ScoreMatrix::new(wire.videos, wire.subjects)?;
        for (v, s, score) in wire.cells {
            m.insert(v, s, score)?;
        }
        m.with_mask(wire.outlier_mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn ev(subject: &str, video: &str, tenths: u32, kind: SessionKind) -> RatingEvent {
        RatingEvent {
            subject_id: subject.into(),
            video_id: video.into(),
            batch_id: 0,
            raw_score: Score::from_tenths(tenths).unwrap(),
            submitted_at: Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
            replays: 0,
            session_kind: kind,
        }
    }

    #[test]
    fn assembles_formal_only() {
        let events = vec![
            ev("b", "v2", 10, SessionKind::Formal),
            ev("a", "v1", 20, SessionKind::Formal),
            ev("a", "v9", 30, SessionKind::Testing),
        ];
        let m = ScoreMatrix::from_events(&events).unwrap();
        assert_eq!(m.videos(), ["v1", "v2"]);
        assert_eq!(m.subjects(), ["a", "b"]);
        assert_eq!(m.get(1, 1).unwrap().tenths(), 10);
        assert_eq!(m.n_scores(), 2);
    }

    #[test]
    fn duplicate_and_unknown() {
        let events = vec![
            ev("a", "v1", 20, SessionKind::Formal),
            ev("a", "v1", 30, SessionKind::Formal),
        ];
        assert!(matches!(
            ScoreMatrix::from_events(&events),
            Err(MatrixError::DuplicateRating { .. })
        ));
        let err =
            ScoreMatrix::from_events_with_videos(vec!["v0".into()], &events[..1]).unwrap_err();
        assert_eq!(err, MatrixError::UnknownVideo("v1".into()));
    }

    #[test]
    fn mask_must_cover_scores() {
        let m = ScoreMatrix::from_events(&[ev("a", "v1", 20, SessionKind::Formal)]).unwrap();
        let bad: OutlierMask = [(0, 1)].into_iter().collect();
        assert!(m.clone().with_mask(bad).is_err());
        let good: OutlierMask = [(0, 0)].into_iter().collect();
        let masked = m.with_mask(good).unwrap();
        assert!(masked.is_masked(0, 0));
        let text = serde_json::to_string(&masked).unwrap();
        assert_eq!(serde_json::from_str::<ScoreMatrix>(&text).unwrap(), masked);
        assert!(serde_json::from_str::<ScoreMatrix>(
            r#"{"videos":["v"],"subjects":["s"],"cells":[],"outlier_mask":[[0,0]]}"#
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn assembly_is_permutation_invariant(
            cells in proptest::collection::btree_map((0usize..6, 0usize..5), 0u32..=50, 1..25),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut events: Vec<RatingEvent> = cells
                .iter()
                .map(|(&(v, s), &t)| ev(&format!("s{s}"), &format!("v{v}"), t, SessionKind::Formal))
                .collect();
            let base = ScoreMatrix::from_events(&events).unwrap();
            events.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(ScoreMatrix::from_events(&events).unwrap(), base);
        }
    }
}
