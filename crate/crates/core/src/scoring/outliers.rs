use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ScoringConfig, ScoringError};
use crate::domain::{DistributionStats, OutlierMask, ScoreMatrix};

/// Non-excess kurtosis of a sample and the Gaussianity call it implies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kurtosis {
    pub beta2: f64,
    pub is_gaussian: bool,
}

/// `beta2 = m4 / m2^2` from population central moments. Fails with
/// [`ScoringError::DegenerateDistribution`] for fewer than two samples or a
/// spread at or below `cfg.sigma_floor`.
pub fn kurtosis(samples: &[f64], cfg: &ScoringConfig) -> Result<Kurtosis, ScoringError> {
    let n = samples.len();
    if n < 2 {
        return Err(ScoringError::DegenerateDistribution { n });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let (m2, m4) = samples.iter().fold((0.0, 0.0), |(m2, m4), &x| {
        let d2 = (x - mean) * (x - mean);
        (m2 + d2, m4 + d2 * d2)
    });
    let m2 = m2 / n as f64;
    let m4 = m4 / n as f64;
    if m2.sqrt() <= cfg.sigma_floor {
        return Err(ScoringError::DegenerateDistribution { n });
    }
    let beta2 = m4 / (m2 * m2);
    let [lo, hi] = cfg.kurtosis_gaussian_range;
    Ok(Kurtosis {
        beta2,
        is_gaussian: (lo..=hi).contains(&beta2),
    })
}

pub(crate) fn mean_and_sample_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

pub fn distribution_stats(video_id: &str, samples: &[f64], cfg: &ScoringConfig) -> DistributionStats {
    let (mean, stddev) = mean_and_sample_sd(samples);
    let k = kurtosis(samples, cfg).ok();
    DistributionStats {
        video_id: video_id.to_string(),
        mean,
        stddev,
        kurtosis_beta2: k.map(|k| k.beta2),
        n: samples.len(),
        is_gaussian: k.is_some_and(|k| k.is_gaussian),
    }
}

/// Single pass over every video row using statistics of the raw, unmasked
/// scores. Any mask already attached to `matrix` is ignored.
pub fn detect_outliers(
    matrix: &ScoreMatrix,
    cfg: &ScoringConfig,
) -> Result<OutlierMask, ScoringError> {
    Ok(detect_outliers_with_stats(matrix, cfg)?.0)
}

pub fn detect_outliers_with_stats(
    matrix: &ScoreMatrix,
    cfg: &ScoringConfig,
) -> Result<(OutlierMask, Vec<DistributionStats>), ScoringError> {
    if matrix.is_empty() {
        return Err(ScoringError::EmptyMatrix);
    }
    let mut mask = OutlierMask::new();
    let mut all_stats = Vec::with_capacity(matrix.videos().len());
    for (v, video_id) in matrix.videos().iter().enumerate() {
        let row: Vec<(usize, f64)> = matrix
            .video_cells(v)
            .map(|(s, score)| (s, score.value()))
            .collect();
        let values: Vec<f64> = row.iter().map(|&(_, x)| x).collect();
        if values.is_empty() {
            continue;
        }
        let stats = distribution_stats(video_id, &values, cfg);
        let testable = values.len() >= cfg.min_ratings_for_outlier_test
            && stats.kurtosis_beta2.is_some()
            && stats.stddev > cfg.sigma_floor;
        if testable {
            let k = if stats.is_gaussian {
                cfg.gaussian_sigma_mult
            } else {
                cfg.nongaussian_sigma_mult
            };
            let limit = k * stats.stddev;
            for &(s, x) in &row {
                if (x - stats.mean).abs() > limit {
                    mask.insert(v, s);
                }
            }
        }
        all_stats.push(stats);
    }
    Ok((mask, all_stats))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectOutlierRatio {
    pub subject_id: String,
    pub masked: usize,
    pub total: usize,
    pub ratio: f64,
}

pub fn subject_outlier_ratios(matrix: &ScoreMatrix, mask: &OutlierMask) -> Vec<SubjectOutlierRatio> {
    let mut counts = vec![(0usize, 0usize); matrix.subjects().len()];
    for (v, s, _) in matrix.cells() {
        counts[s].1 += 1;
        if mask.contains(v, s) {
            counts[s].0 += 1;
        }
    }
    matrix
        .subjects()
        .iter()
        .zip(counts)
        .filter(|(_, (_, total))| *total > 0)
        .map(|(id, (masked, total))| SubjectOutlierRatio {
            subject_id: id.clone(),
            masked,
            total,
            ratio: masked as f64 / total as f64,
        })
        .collect()
}

/// Subjects whose masked share of their own scores is strictly greater than
/// `cfg.subject_outlier_limit`.
pub fn reject_subjects(
    matrix: &ScoreMatrix,
    mask: &OutlierMask,
    cfg: &ScoringConfig,
) -> BTreeSet<String> {
    subject_outlier_ratios(matrix, mask)
        .into_iter()
        .filter(|r| r.ratio > cfg.subject_outlier_limit)
        .map(|r| r.subject_id)
        .collect()
}
