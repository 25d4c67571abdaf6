use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{HarnessError, PredictionSet};
use crate::domain::{FrameFeatures, MosTable};
use crate::metrics::srcc;

pub const RIDGE_LAMBDA: f64 = 1e-6;
const MIN_TRAIN: usize = 6;
const RANK_TOL: f64 = 1e-10;

/// Affine model of MOS on `[brightness, contrast, colorfulness, sharpness]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearBaseline {
    pub weights: [f64; 4],
    pub intercept: f64,
    /// True when the design matrix was rank deficient and ridge was used.
    pub ridge: bool,
    pub n_train: usize,
    pub training_srcc: Option<f64>,
}

impl LinearBaseline {
    pub fn predict_one(&self, f: &FrameFeatures) -> f64 {
        self.intercept
            + self
                .weights
                .iter()
                .zip(f.as_array())
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }
}

/// Ordinary least squares over videos that have both features and a MOS
/// (restricted to `train_ids` when given). Falls back to ridge with
/// [`RIDGE_LAMBDA`] on the feature weights when the design is rank deficient.
pub fn fit_baseline(
    features: &BTreeMap<String, FrameFeatures>,
    mos: &MosTable,
    train_ids: Option<&[String]>,
) -> Result<LinearBaseline, HarnessError> {
    let rows: Vec<(&FrameFeatures, f64)> = match train_ids {
        Some(ids) => ids
            .iter()
            .filter_map(|id| Some((features.get(id)?, mos.get(id)?.mos)))
            .collect(),
        None => features
            .iter()
            .filter_map(|(id, f)| Some((f, mos.get(id)?.mos)))
            .collect(),
    };
    let n = rows.len();
    if n < MIN_TRAIN {
        return Err(HarnessError::TooFewSamples {
            needed: MIN_TRAIN,
            got: n,
        });
    }

    let x = DMatrix::from_fn(n, 5, |i, j| {
        if j == 0 {
            1.0
        } else {
            rows[i].0.as_array()[j - 1]
        }
    });
    let y = DVector::from_iterator(n, rows.iter().map(|&(_, m)| m));

    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let min_sv = svd.singular_values.min();
    let full_rank = max_sv > 0.0 && min_sv > RANK_TOL * max_sv;

    let beta = if full_rank {
        svd.solve(&y, 0.0).map_err(|_| HarnessError::Singular)?
    } else {
        let mut gram = x.transpose() * &x;
        for j in 1..5 {
            gram[(j, j)] += RIDGE_LAMBDA;
        }
        let rhs = x.transpose() * &y;
        gram.lu().solve(&rhs).ok_or(HarnessError::Singular)?
    };

    let mut model = LinearBaseline {
        weights: [beta[1], beta[2], beta[3], beta[4]],
        intercept: beta[0],
        ridge: !full_rank,
        n_train: n,
        training_srcc: None,
    };
    let fitted: Vec<f64> = rows.iter().map(|(f, _)| model.predict_one(f)).collect();
    let targets: Vec<f64> = rows.iter().map(|&(_, m)| m).collect();
    model.training_srcc = srcc(&fitted, &targets).ok();
    Ok(model)
}

/// Predict every video in `ids` (all featured videos when `None`).
pub fn predict_baseline(
    model: &LinearBaseline,
    features: &BTreeMap<String, FrameFeatures>,
    ids: Option<&[String]>,
    predictor_name: &str,
) -> Result<PredictionSet, HarnessError> {
    let mut set = PredictionSet::new(predictor_name);
    match ids {
        Some(ids) => {
            for id in ids {
                let f = features
                    .get(id)
                    .ok_or_else(|| HarnessError::MissingFeatures(id.clone()))?;
                set.scores.insert(id.clone(), model.predict_one(f));
            }
        }
        None => {
            for (id, f) in features {
                set.scores.insert(id.clone(), model.predict_one(f));
            }
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{MosEntry, QualityLevel};
    use rand::{Rng, SeedableRng};

    fn data(
        n: usize,
        seed: u64,
        target: impl Fn(&FrameFeatures) -> f64,
    ) -> (BTreeMap<String, FrameFeatures>, MosTable) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut feats = BTreeMap::new();
        let mut entries = Vec::new();
        for i in 0..n {
            let f = FrameFeatures {
                brightness: rng.random(),
                contrast: rng.random::<f64>() * 0.3,
                colorfulness: rng.random::<f64>() * 0.5,
                sharpness: rng.random::<f64>() * 2.0,
            };
            let id = format!("v{i:03}");
            let mos = target(&f);
            entries.push(MosEntry {
                video_id: id.clone(),
                mos,
                stddev_rescaled: 0.0,
                n_raters: 1,
                level: QualityLevel::from_mos(mos),
            });
            feats.insert(id, f);
        }
        (feats, MosTable::new(entries))
    }

    #[test]
    fn recovers_exact_linear_truth() {
        let (feats, mos) = data(40, 1, |f| 10.0 + 50.0 * f.brightness);
        let m = fit_baseline(&feats, &mos, None).unwrap();
        assert!(!m.ridge);
        assert!((m.intercept - 10.0).abs() < 1e-6);
        assert!((m.weights[0] - 50.0).abs() < 1e-6);
        for w in &m.weights[1..] {
            assert!(w.abs() < 1e-6);
        }
        assert_eq!(m.training_srcc, Some(1.0));
    }

    #[test]
    fn residuals_orthogonal_to_features() {
        let mut noise = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let offsets: Vec<f64> = (0..30).map(|_| noise.random::<f64>() * 10.0).collect();
        let (feats, clean) = data(30, 2, |f| 20.0 + 30.0 * f.contrast - 5.0 * f.sharpness);
        let mos = MosTable::new(
            clean
                .entries()
                .iter()
                .zip(&offsets)
                .map(|(e, o)| MosEntry { mos: e.mos + o, ..e.clone() })
                .collect(),
        );
        let m = fit_baseline(&feats, &mos, None).unwrap();
        let mut dots = [0.0; 5];
        for (id, f) in &feats {
            let r = mos.get(id).unwrap().mos - m.predict_one(f);
            dots[0] += r;
            for (d, x) in dots[1..].iter_mut().zip(f.as_array()) {
                *d += r * x;
            }
        }
        for d in dots {
            assert!(d.abs() < 1e-8, "dot = {d}");
        }
    }

    #[test]
    fn constant_features_take_ridge_path() {
        let mut feats = BTreeMap::new();
        let mut entries = Vec::new();
        for i in 0..8 {
            let id = format!("v{i}");
            feats.insert(
                id.clone(),
                FrameFeatures {
                    brightness: 0.5,
                    contrast: 0.1,
                    colorfulness: 0.2,
                    sharpness: 1.0,
                },
            );
            entries.push(MosEntry {
                video_id: id,
                mos: 40.0 + i as f64,
                stddev_rescaled: 0.0,
                n_raters: 1,
                level: QualityLevel::Fair,
            });
        }
        let m = fit_baseline(&feats, &MosTable::new(entries), None).unwrap();
        assert!(m.ridge);
        assert!(m.intercept.is_finite());
        // with no usable signal, every prediction sits at the mean target
        let p = m.predict_one(&feats["v0"]);
        assert!((p - 43.5).abs() < 1e-3, "p = {p}");
    }

    #[test]
    fn too_few_samples() {
        let (feats, mos) = data(5, 3, |f| f.brightness);
        assert!(matches!(
            fit_baseline(&feats, &mos, None),
            Err(HarnessError::TooFewSamples { needed: 6, got: 5 })
        ));
    }

    #[test]
    fn prediction_properties() {
        let (feats, mos) = data(20, 4, |f| 5.0 + 3.0 * f.colorfulness + 7.0 * f.sharpness);
        let m = fit_baseline(&feats, &mos, None).unwrap();
        let zero = FrameFeatures {
            brightness: 0.0,
            contrast: 0.0,
            colorfulness: 0.0,
            sharpness: 0.0,
        };
        assert_eq!(m.predict_one(&zero), m.intercept);

        let set = predict_baseline(&m, &feats, None, "ols").unwrap();
        for (id, f) in &feats {
            assert_eq!(set.scores[id], m.predict_one(f));
        }

        let base = feats["v000"];
        let bumped = FrameFeatures {
            sharpness: base.sharpness * 2.0,
            ..base
        };
        let delta = m.predict_one(&bumped) - m.predict_one(&base);
        assert!((delta - m.weights[3] * base.sharpness).abs() < 1e-9);

        let ids = ["v000".to_string(), "nope".to_string()];
        assert!(matches!(
            predict_baseline(&m, &feats, Some(&ids), "ols"),
            Err(HarnessError::MissingFeatures(id)) if id == "nope"
        ));
    }
}
