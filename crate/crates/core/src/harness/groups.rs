use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::domain::{Attribute, MosTable, ValidatedManifest, VideoRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupKey {
    Platform,
    Category,
    Attribute(Attribute),
}

impl GroupKey {
    pub fn name(self) -> &'static str {
        match self {
            GroupKey::Platform => "platform",
            GroupKey::Category => "category",
            GroupKey::Attribute(a) => a.as_str(),
        }
    }

    /// Group label of `record`; absent attributes map to `"unknown"`.
    pub fn label(self, record: &VideoRecord) -> String {
        match self {
            GroupKey::Platform => record.platform.as_str().to_string(),
            GroupKey::Category => record.category.clone(),
            GroupKey::Attribute(a) => record.attribute(a).unwrap_or("unknown").to_string(),
        }
    }

    /// Comma-separated list of keys.
    pub fn parse_list(list: &str) -> Result<Vec<GroupKey>, HarnessError> {
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl FromStr for GroupKey {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "platform" => Ok(GroupKey::Platform),
            "category" => Ok(GroupKey::Category),
            other => Attribute::ALL
                .into_iter()
                .find(|a| a.as_str() == other)
                .map(GroupKey::Attribute)
                .ok_or_else(|| HarnessError::UnknownGroupKey(other.to_string())),
        }
    }
}

/// Equal-width, left-closed bins over `[lo, hi]`; the last bin also closes
/// on `hi`. Values outside the range are clamped into the end bins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: 100.0,
            width: 5.0,
        }
    }
}

impl HistogramSpec {
    pub fn n_bins(&self) -> usize {
        ((self.hi - self.lo) / self.width).ceil() as usize
    }

    pub fn bin(&self, x: f64) -> usize {
        let i = ((x - self.lo) / self.width).floor();
        (i.max(0.0) as usize).min(self.n_bins() - 1)
    }

    pub fn edges(&self, bin: usize) -> (f64, f64) {
        let lo = self.lo + bin as f64 * self.width;
        (lo, (lo + self.width).min(self.hi))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub key: String,
    pub group: String,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation; 0 for a single video.
    pub stddev: f64,
    pub counts: Vec<u64>,
    /// MOS values clamped into an end bin.
    pub n_clamped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupAnalysis {
    pub histogram: HistogramSpec,
    pub groups: Vec<GroupSummary>,
    /// MOS videos absent from the manifest, left out of every group.
    pub unmatched_videos: Vec<String>,
}

fn summarize(key: &str, group: &str, values: &mut [f64], spec: &HistogramSpec) -> GroupSummary {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    };
    let stddev = if n > 1 {
        (values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut counts = vec![0u64; spec.n_bins()];
    let mut n_clamped = 0;
    for &x in values.iter() {
        if x < spec.lo || x > spec.hi {
            n_clamped += 1;
        }
        counts[spec.bin(x)] += 1;
    }
    GroupSummary {
        key: key.to_string(),
        group: group.to_string(),
        n,
        mean,
        median,
        stddev,
        counts,
        n_clamped,
    }
}

/// MOS histograms and summary statistics per group, for each grouping key.
/// Output is ordered by key (in the given order) then by group label.
pub fn group_analysis(
    mos: &MosTable,
    manifest: &ValidatedManifest,
    keys: &[GroupKey],
    spec: &HistogramSpec,
) -> GroupAnalysis {
    let mut unmatched = Vec::new();
    let mut matched = Vec::new();
    for entry in mos.entries() {
        match manifest.get(&entry.video_id) {
            Some(record) => matched.push((record, entry.mos)),
            None => unmatched.push(entry.video_id.clone()),
        }
    }
    let mut groups = Vec::new();
    for &key in keys {
        let mut buckets: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (record, mos) in &matched {
            buckets.entry(key.label(record)).or_default().push(*mos);
        }
        for (label, mut values) in buckets {
            groups.push(summarize(key.name(), &label, &mut values, spec));
        }
    }
    GroupAnalysis {
        histogram: *spec,
        groups,
        unmatched_videos: unmatched,
    }
}

/// Rows `group,bin_lo,bin_hi,count` with `group` written as `key=label`.
pub fn histograms_csv(analysis: &GroupAnalysis) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["group", "bin_lo", "bin_hi", "count"])?;
    for g in &analysis.groups {
        for (bin, count) in g.counts.iter().enumerate() {
            let (lo, hi) = analysis.histogram.edges(bin);
            w.write_record([
                format!("{}={}", g.key, g.group),
                lo.to_string(),
                hi.to_string(),
                count.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
