use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{GroupKey, HarnessError};
use crate::domain::{EvalEntry, EvalReport, MosTable, QualityLevel, ValidatedManifest};
use crate::metrics::{krcc, level_accuracy, plcc, srcc};

/// Recorded in every report so readers do not compare against logistic-fitted
/// PLCC numbers by accident.
pub const PLCC_NOTE: &str =
    "PLCC is computed on raw predictions without any nonlinear (logistic) mapping";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub predictor_name: String,
    pub scores: BTreeMap<String, f64>,
}

impl PredictionSet {
    pub fn new(predictor_name: impl Into<String>) -> Self {
        Self {
            predictor_name: predictor_name.into(),
            scores: BTreeMap::new(),
        }
    }

    /// Every key must name a manifest video.
    pub fn check_against(&self, manifest: &ValidatedManifest) -> Result<(), HarnessError> {
        match self.scores.keys().find(|id| !manifest.contains(id)) {
            Some(id) => Err(HarnessError::UnknownVideo(id.clone())),
            None => Ok(()),
        }
    }
}

#[derive(Deserialize)]
struct PredictionRow {
    video_id: String,
    score: f64,
}

/// Read `video_id,score` rows (with header).
pub fn read_predictions_csv<R: Read>(
    reader: R,
    predictor_name: &str,
) -> Result<PredictionSet, HarnessError> {
    let mut set = PredictionSet::new(predictor_name);
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: PredictionRow = row?;
        set.scores.insert(row.video_id, row.score);
    }
    Ok(set)
}

/// Metrics over `(prediction, mos)` pairs. Correlations need two or more
/// pairs and non-constant inputs; otherwise they are `None`.
pub fn eval_entry(pairs: &[(f64, f64)]) -> EvalEntry {
    let p: Vec<f64> = pairs.iter().map(|&(p, _)| p).collect();
    let t: Vec<f64> = pairs.iter().map(|&(_, t)| t).collect();
    let levels = |v: &[f64]| -> Vec<QualityLevel> {
        v.iter().copied().map(QualityLevel::from_mos).collect()
    };
    EvalEntry {
        srcc: srcc(&p, &t).ok(),
        plcc: plcc(&p, &t).ok(),
        krcc: krcc(&p, &t).ok(),
        level_accuracy: level_accuracy(&levels(&p), &levels(&t)).ok(),
        n: pairs.len(),
    }
}

struct Joined {
    pairs: Vec<(String, f64, f64)>,
    missing: Vec<String>,
}

fn join(predictions: &PredictionSet, mos: &MosTable, subset: Option<&[String]>) -> Joined {
    let ids: Vec<String> = match subset {
        Some(ids) => {
            let mut ids: Vec<String> = ids
                .iter()
                .filter(|id| mos.get(id).is_some())
                .cloned()
                .collect();
            ids.sort();
            ids.dedup();
            ids
        }
        None => mos.entries().iter().map(|e| e.video_id.clone()).collect(),
    };
    let mut pairs = Vec::new();
    let mut missing = Vec::new();
    for id in ids {
        let target = mos.get(&id).expect("filtered to MOS ids").mos;
        match predictions.scores.get(&id) {
            Some(&p) => pairs.push((id, p, target)),
            None => missing.push(id),
        }
    }
    Joined { pairs, missing }
}

/// Evaluate `predictions` against `mos` over `subset` (all MOS ids when
/// `None`). Ids without a prediction are listed, never imputed.
pub fn evaluate(
    predictions: &PredictionSet,
    mos: &MosTable,
    subset: Option<&[String]>,
    dataset_id: &str,
) -> Result<EvalReport, HarnessError> {
    evaluate_with_groups(predictions, mos, subset, None, &[], dataset_id)
}

pub fn evaluate_with_groups(
    predictions: &PredictionSet,
    mos: &MosTable,
    subset: Option<&[String]>,
    manifest: Option<&ValidatedManifest>,
    groups: &[GroupKey],
    dataset_id: &str,
) -> Result<EvalReport, HarnessError> {
    let joined = join(predictions, mos, subset);
    if joined.pairs.len() < 2 {
        return Err(HarnessError::InsufficientOverlap(joined.pairs.len()));
    }
    let all: Vec<(f64, f64)> = joined.pairs.iter().map(|&(_, p, t)| (p, t)).collect();

    let mut subgroups = BTreeMap::new();
    if let Some(manifest) = manifest {
        for key in groups {
            let mut buckets: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
            for (id, p, t) in &joined.pairs {
                let label = manifest
                    .get(id)
                    .map(|r| key.label(r))
                    .unwrap_or_else(|| "unknown".to_string());
                buckets.entry(label).or_default().push((*p, *t));
            }
            for (label, pairs) in buckets {
                subgroups.insert(format!("{}={}", key.name(), label), eval_entry(&pairs));
            }
        }
    }

    Ok(EvalReport {
        dataset_id: dataset_id.to_string(),
        predictor_name: predictions.predictor_name.clone(),
        note: PLCC_NOTE.to_string(),
        overall: eval_entry(&all),
        subgroups,
        missing_predictions: joined.missing,
    })
}

/// `scope,n,srcc,plcc,krcc,level_accuracy`; undefined values are empty.
pub fn report_csv(report: &EvalReport) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scope", "n", "srcc", "plcc", "krcc", "level_accuracy"])?;
    let fmt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let rows = std::iter::once(("overall", &report.overall))
        .chain(report.subgroups.iter().map(|(k, v)| (k.as_str(), v)));
    for (scope, e) in rows {
        w.write_record([
            scope.to_string(),
            e.n.to_string(),
            fmt(e.srcc),
            fmt(e.plcc),
            fmt(e.krcc),
            fmt(e.level_accuracy),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
