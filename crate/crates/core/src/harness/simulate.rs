use std::io::Write;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::domain::{
    quantize_score, Attribute, Platform, RatingEvent, SessionKind, VideoRecord,
};

/// Synthetic study: latent quality per video, honest raters with their own
/// gain, bias and noise, plus raters who answer uniformly at random.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationParams {
    pub n_videos: usize,
    /// Honest subjects.
    pub n_subjects: usize,
    pub n_adversarial: usize,
    /// Latent qualities are drawn uniformly from this raw-scale range.
    pub quality_range: [f64; 2],
    /// Per-subject gain, uniform over this range.
    pub gain_range: [f64; 2],
    /// Per-subject bias, normal with this standard deviation.
    pub bias_sd: f64,
    pub noise_sd: f64,
    /// Videos per batch; `None` puts every rating in batch 0.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for SimulationParams {
    fn default() -> Self {
        Self {
            n_videos: 200,
            n_subjects: 50,
            n_adversarial: 0,
            quality_range: [1.0, 4.0],
            gain_range: [0.8, 1.2],
            bias_sd: 0.3,
            noise_sd: 0.2,
            batch_size: None,
            seed: 0,
        }
    }
}

impl SimulationParams {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidParams(m.to_string()));
        if self.n_videos < 2 {
            return bad("n_videos must be >= 2");
        }
        if self.n_subjects + self.n_adversarial < 2 {
            return bad("need at least 2 subjects");
        }
        if !(self.noise_sd >= 0.0 && self.bias_sd >= 0.0) {
            return bad("noise_sd and bias_sd must be >= 0");
        }
        for (name, [lo, hi]) in [("quality_range", self.quality_range), ("gain_range", self.gain_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(&format!("{name} must be an ordered finite interval"));
            }
        }
        if self.batch_size == Some(0) {
            return bad("batch_size must be >= 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedStudy {
    /// `(video_id, latent quality)` in video order.
    pub latent: Vec<(String, f64)>,
    pub manifest: Vec<VideoRecord>,
    pub events: Vec<RatingEvent>,
    pub honest_subjects: Vec<String>,
    pub adversarial_subjects: Vec<String>,
}

fn sim_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 1, 6, 0, 0, 0).unwrap()
}

fn clamp_to_grid(x: f64) -> crate::domain::Score {
    quantize_score(x.clamp(0.0, 5.0)).expect("clamped into range")
}

fn uniform(lo: f64, hi: f64) -> Uniform<f64> {
    Uniform::new_inclusive(lo, hi).expect("validated interval")
}

pub fn simulate_study(params: &SimulationParams) -> Result<SimulatedStudy, HarnessError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let quality = uniform(params.quality_range[0], params.quality_range[1]);
    let gain = uniform(params.gain_range[0], params.gain_range[1]);
    let bias = Normal::new(0.0, params.bias_sd).expect("validated sd");
    let noise = Normal::new(0.0, params.noise_sd).expect("validated sd");
    let guess = uniform(0.0, 5.0);

    let latent: Vec<(String, f64)> = (0..params.n_videos)
        .map(|j| (format!("v{j:05}"), quality.sample(&mut rng)))
        .collect();
    let honest: Vec<(String, f64, f64)> = (0..params.n_subjects)
        .map(|i| (format!("s{i:03}"), gain.sample(&mut rng), bias.sample(&mut rng)))
        .collect();
    let adversarial: Vec<String> = (0..params.n_adversarial).map(|i| format!("a{i:03}")).collect();

    let manifest = latent
        .iter()
        .enumerate()
        .map(|(j, (id, _))| {
            let mut attributes = std::collections::BTreeMap::new();
            attributes.insert(
                Attribute::Gender,
                if rng.random::<bool>() { "female" } else { "male" }.to_string(),
            );
            VideoRecord {
                video_id: id.clone(),
                media_uri: format!("sim://video/{id}"),
                frames_dir: None,
                platform: if j % 2 == 0 {
                    Platform::Tiktok
                } else {
                    Platform::Youtube
                },
                category: "simulated".to_string(),
                attributes,
                fps: 30.0,
                width: 1080,
                height: 1920,
                duration_s: 10.0,
            }
        })
        .collect();

    let mut events = Vec::with_capacity(params.n_videos * (honest.len() + adversarial.len()));
    let epoch = sim_epoch();
    for (j, (video_id, q)) in latent.iter().enumerate() {
        let batch_id = params.batch_size.map_or(0, |b| (j / b) as u32);
        let mut push = |subject_id: &str, score| {
            events.push(RatingEvent {
                subject_id: subject_id.to_string(),
                video_id: video_id.clone(),
                batch_id,
                raw_score: score,
                submitted_at: epoch + Duration::seconds(events_len_hint(j)),
                replays: 0,
                session_kind: SessionKind::Formal,
            });
        };
        for (id, g, b) in &honest {
            push(id, clamp_to_grid(g * q + b + noise.sample(&mut rng)));
        }
        for id in &adversarial {
            push(id, clamp_to_grid(guess.sample(&mut rng)));
        }
    }

    Ok(SimulatedStudy {
        latent,
        manifest,
        events,
        honest_subjects: honest.into_iter().map(|(id, _, _)| id).collect(),
        adversarial_subjects: adversarial,
    })
}

// one video every 20 seconds of simulated wall time
fn events_len_hint(video: usize) -> i64 {
    video as i64 * 20
}

/// `video_id,latent_quality` rows.
pub fn write_latent_csv<W: Write>(writer: W, study: &SimulatedStudy) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["video_id", "latent_quality"])?;
    for (id, q) in &study.latent {
        w.write_record([id.clone(), q.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::validate_manifest;
    use crate::metrics::srcc;
    use crate::scoring::{run_pipeline, ScoringConfig};

    fn recovered_srcc(study: &SimulatedStudy) -> (f64, crate::scoring::ScoredStudy) {
        let manifest = validate_manifest(&study.manifest).unwrap();
        let scored = run_pipeline(&study.events, &manifest, &ScoringConfig::default()).unwrap();
        let (p, t): (Vec<f64>, Vec<f64>) = study
            .latent
            .iter()
            .map(|(id, q)| (scored.mos_table.get(id).unwrap().mos, *q))
            .unzip();
        (srcc(&p, &t).unwrap(), scored)
    }

    #[test]
    fn deterministic_under_seed() {
        let p = SimulationParams {
            n_videos: 10,
            n_subjects: 4,
            n_adversarial: 1,
            ..Default::default()
        };
        assert_eq!(simulate_study(&p).unwrap(), simulate_study(&p).unwrap());
        let s = simulate_study(&p).unwrap();
        assert_eq!(s.events.len(), 50);
        assert_eq!(s.adversarial_subjects, vec!["a000".to_string()]);
    }

    #[test]
    fn noiseless_limit_is_exact() {
        let p = SimulationParams {
            n_videos: 60,
            n_subjects: 5,
            gain_range: [1.0, 1.0],
            bias_sd: 0.0,
            noise_sd: 0.0,
            ..Default::default()
        };
        let study = simulate_study(&p).unwrap();
        let (rho, _) = recovered_srcc(&study);
        // quantization to 0.1 can tie nearby latents, so compare against the
        // quantized latent ordering
        let quantized: Vec<f64> = study
            .latent
            .iter()
            .map(|(_, q)| clamp_to_grid(*q).value())
            .collect();
        let latent: Vec<f64> = study.latent.iter().map(|(_, q)| *q).collect();
        assert!((rho - srcc(&quantized, &latent).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn default_study_recovers_latent_order() {
        let study = simulate_study(&SimulationParams::default()).unwrap();
        let (rho, _) = recovered_srcc(&study);
        assert!(rho >= 0.99, "srcc = {rho}");
    }

    #[test]
    fn guesser_is_rejected() {
        let p = SimulationParams {
            n_subjects: 39,
            n_adversarial: 1,
            seed: 17,
            ..Default::default()
        };
        let study = simulate_study(&p).unwrap();
        let (_, scored) = recovered_srcc(&study);
        assert!(scored.rejected_subjects.contains("a000"));
    }

    #[test]
    fn invalid_params() {
        let p = SimulationParams {
            n_videos: 1,
            ..Default::default()
        };
        assert!(simulate_study(&p).is_err());
        let p = SimulationParams {
            noise_sd: -1.0,
            ..Default::default()
        };
        assert!(simulate_study(&p).is_err());
    }
}
