//! Agreement between predicted scores and MOS: SRCC with average ranks,
//! plain PLCC, Kendall tau-b and exact-match level accuracy. Undefined
//! correlations are returned as [`MetricError::Undefined`], never as NaN.

use std::cmp::Ordering;

use thiserror::Error;

use crate::domain::QualityLevel;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("length mismatch: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("undefined correlation: constant series")]
    Undefined,
}

fn check_pair(p: &[f64], t: &[f64]) -> Result<(), MetricError> {
    if p.len() != t.len() {
        return Err(MetricError::LengthMismatch(p.len(), t.len()));
    }
    if p.len() < 2 {
        return Err(MetricError::TooShort {
            needed: 2,
            got: p.len(),
        });
    }
    if let Some(i) = p
        .iter()
        .zip(t)
        .position(|(a, b)| !a.is_finite() || !b.is_finite())
    {
        return Err(MetricError::NonFinite(i));
    }
    Ok(())
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(p: &[f64], t: &[f64]) -> Result<f64, MetricError> {
    let n = p.len() as f64;
    let mp = p.iter().sum::<f64>() / n;
    let mt = t.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in p.iter().zip(t) {
        let (dx, dy) = (a - mp, b - mt);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::Undefined);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation on raw values, without any nonlinear mapping.
pub fn plcc(p: &[f64], t: &[f64]) -> Result<f64, MetricError> {
    check_pair(p, t)?;
    pearson(p, t)
}

/// Spearman correlation: Pearson on average ranks.
pub fn srcc(p: &[f64], t: &[f64]) -> Result<f64, MetricError> {
    check_pair(p, t)?;
    pearson(&average_ranks(p), &average_ranks(t))
}

fn tie_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` ascending and returns the number of strictly inverted pairs.
fn count_inversions(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = count_inversions(&mut v[..mid], buf) + count_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall tau-b in O(n log n) (Knight's algorithm).
pub fn krcc(p: &[f64], t: &[f64]) -> Result<f64, MetricError> {
    check_pair(p, t)?;
    let n = p.len() as u64;
    let n0 = n * (n - 1) / 2;

    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| match p[a].total_cmp(&p[b]) {
        Ordering::Equal => t[a].total_cmp(&t[b]),
        other => other,
    });
    let xs: Vec<f64> = order.iter().map(|&i| p[i]).collect();
    let joint: Vec<(f64, f64)> = order.iter().map(|&i| (p[i], t[i])).collect();
    let n1 = tie_pairs(&xs);
    let n3 = tie_pairs(&joint);

    let mut ys: Vec<f64> = order.iter().map(|&i| t[i]).collect();
    let mut buf = Vec::with_capacity(ys.len());
    let swaps = count_inversions(&mut ys, &mut buf);
    let n2 = tie_pairs(&ys);

    if n1 == n0 || n2 == n0 {
        return Err(MetricError::Undefined);
    }
    let numer = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    let denom = ((n0 - n1) as f64).sqrt() * ((n0 - n2) as f64).sqrt();
    Ok((numer / denom).clamp(-1.0, 1.0))
}

pub fn level_accuracy(
    predicted: &[QualityLevel],
    truth: &[QualityLevel],
) -> Result<f64, MetricError> {
    if predicted.len() != truth.len() {
        return Err(MetricError::LengthMismatch(predicted.len(), truth.len()));
    }
    if predicted.is_empty() {
        return Err(MetricError::TooShort { needed: 1, got: 0 });
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / predicted.len() as f64)
}
