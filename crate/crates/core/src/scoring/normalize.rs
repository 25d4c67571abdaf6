use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::outliers::mean_and_sample_sd;
use super::{ScoringConfig, ScoringError};
use crate::domain::{MosEntry, MosTable, QualityLevel, ScoreMatrix, SubjectStats};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SubjectStatsError {
    #[error("n < 2 (subject has {n} usable scores)")]
    TooFewScores { n: usize },
    #[error("degenerate subject: sigma {sigma} is at or below the floor")]
    Degenerate { sigma: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcludedSubject {
    pub subject_id: String,
    pub reason: String,
}

/// Mean and sample standard deviation of one subject's surviving scores.
pub fn subject_stats_for(
    subject_id: &str,
    scores: &[f64],
    cfg: &ScoringConfig,
) -> Result<SubjectStats, SubjectStatsError> {
    let n = scores.len();
    if n < 2 {
        return Err(SubjectStatsError::TooFewScores { n });
    }
    let (mu, sigma) = mean_and_sample_sd(scores);
    if sigma <= cfg.sigma_floor {
        return Err(SubjectStatsError::Degenerate { sigma });
    }
    Ok(SubjectStats {
        subject_id: subject_id.to_string(),
        mu,
        sigma,
        n,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SubjectStatsOutcome {
    pub stats: Vec<SubjectStats>,
    pub excluded: Vec<ExcludedSubject>,
}

/// Statistics over the unmasked scores of every subject not in `rejected`.
/// Subjects that cannot be normalised are reported in `excluded`.
pub fn subject_stats(
    matrix: &ScoreMatrix,
    rejected: &BTreeSet<String>,
    cfg: &ScoringConfig,
) -> SubjectStatsOutcome {
    let mut outcome = SubjectStatsOutcome::default();
    for (s, cells) in matrix.by_subject().into_iter().enumerate() {
        let id = &matrix.subjects()[s];
        if rejected.contains(id) || cells.is_empty() {
            continue;
        }
        let surviving: Vec<f64> = cells
            .iter()
            .filter(|&&(v, _)| !matrix.is_masked(v, s))
            .map(|&(_, score)| score.value())
            .collect();
        match subject_stats_for(id, &surviving, cfg) {
            Ok(stats) => outcome.stats.push(stats),
            Err(e) => outcome.excluded.push(ExcludedSubject {
                subject_id: id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    outcome
}

/// Values keyed by `(video index, subject index)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CellValues(BTreeMap<(usize, usize), f64>);

impl CellValues {
    pub fn get(&self, video: usize, subject: usize) -> Option<f64> {
        self.0.get(&(video, subject)).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.0.iter().map(|(&(v, s), &x)| (v, s, x))
    }

    pub fn video_values(&self, video: usize) -> impl Iterator<Item = f64> + '_ {
        self.0
            .range((video, 0)..(video + 1, 0))
            .map(|(_, &x)| x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> CellValues {
        CellValues(self.0.iter().map(|(&k, &x)| (k, f(x))).collect())
    }
}

/// `z = (r - mu) / sigma` for every unmasked cell of every subject outside
/// `excluded`. Such a subject without a stats row is an error.
pub fn z_scores(
    matrix: &ScoreMatrix,
    excluded: &BTreeSet<String>,
    stats: &[SubjectStats],
) -> Result<CellValues, ScoringError> {
    let by_id: BTreeMap<&str, &SubjectStats> =
        stats.iter().map(|st| (st.subject_id.as_str(), st)).collect();
    let mut rows: Vec<Option<&SubjectStats>> = Vec::with_capacity(matrix.subjects().len());
    for id in matrix.subjects() {
        rows.push(by_id.get(id.as_str()).copied());
    }
    let mut out = BTreeMap::new();
    for (v, s, score) in matrix.cells() {
        let id = &matrix.subjects()[s];
        if excluded.contains(id) || matrix.is_masked(v, s) {
            continue;
        }
        let st = rows[s].ok_or_else(|| ScoringError::MissingStats(id.clone()))?;
        out.insert((v, s), (score.value() - st.mu) / st.sigma);
    }
    Ok(CellValues(out))
}

/// Linear map of `[-3, 3]` onto `[0, 100]`. Values outside are not clipped.
pub fn rescale(z: f64) -> f64 {
    100.0 * (z + 3.0) / 6.0
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MosOutcome {
    pub table: MosTable,
    /// Videos with no surviving rescaled score.
    pub unscorable: Vec<String>,
}

pub fn mos_to_level(mos: f64) -> QualityLevel {
    QualityLevel::from_mos(mos)
}

/// Average the rescaled z-scores of each video row.
pub fn compute_mos(matrix: &ScoreMatrix, rescaled: &CellValues) -> MosOutcome {
    let mut entries = Vec::new();
    let mut unscorable = Vec::new();
    for (v, video_id) in matrix.videos().iter().enumerate() {
        let values: Vec<f64> = rescaled.video_values(v).collect();
        if values.is_empty() {
            unscorable.push(video_id.clone());
            continue;
        }
        let (mos, sd) = mean_and_sample_sd(&values);
        entries.push(MosEntry {
            video_id: video_id.clone(),
            mos,
            stddev_rescaled: sd,
            n_raters: values.len(),
            level: mos_to_level(mos),
        });
    }
    MosOutcome {
        table: MosTable::new(entries),
        unscorable,
    }
}
