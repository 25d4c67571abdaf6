#![allow(dead_code)]

use std::sync::Arc;

use chrono::{DateTime, TimeZone, Utc};
use facevq_core::domain::{Platform, QualityLevel, Score, VideoRecord};
use facevq_service::state::RatingSubmission;
use facevq_service::store::StoreOptions;
use facevq_service::{CreateStudyRequest, ManualClock, StudyConfig, Store, TestAnchor, TrainingExemplar};

pub fn video(id: &str) -> VideoRecord {
    VideoRecord {
        video_id: id.to_string(),
        media_uri: format!("https://media.example/{id}.mp4"),
        frames_dir: None,
        platform: Platform::Youtube,
        category: "vlog".into(),
        attributes: Default::default(),
        fps: 30.0,
        width: 720,
        height: 1280,
        duration_s: 8.0,
    }
}

pub const CRITERIA: [(QualityLevel, &str); 5] = [
    (QualityLevel::Bad, "The video quality is bad; the face is hard to make out."),
    (QualityLevel::Poor, "The video quality is poor; strong artifacts on the face."),
    (QualityLevel::Fair, "The video quality is fair; visible but tolerable artifacts."),
    (QualityLevel::Good, "The video quality is good; minor artifacts only."),
    (QualityLevel::Excellent, "The video quality is excellent; the face is crisp and clear."),
];

pub fn test_anchor(i: usize) -> Score {
    Score::from_tenths(10 + (i as u32 * 7) % 30).unwrap()
}

pub fn request(study_id: &str, n_videos: usize, batch_size: usize, test_size: usize) -> CreateStudyRequest {
    let manifest = (0..n_videos).map(|i| video(&format!("v{i:04}"))).collect();
    let reference_videos: Vec<VideoRecord> = (0..test_size.max(5)).map(|i| video(&format!("ref{i:02}"))).collect();
    CreateStudyRequest {
        study_id: study_id.to_string(),
        manifest,
        config: StudyConfig {
            batch_size,
            test_set_size: test_size,
            test_pass_rule: facevq_service::PassRule {
                min_within: test_size * 4 / 5,
                ..Default::default()
            },
            shuffle_seed: 11,
            ..Default::default()
        },
        training: Some(
            CRITERIA
                .iter()
                .enumerate()
                .map(|(i, (level, text))| TrainingExemplar {
                    video_id: format!("ref{i:02}"),
                    level: *level,
                    criteria: text.to_string(),
                })
                .collect(),
        ),
        test_set: (0..test_size)
            .map(|i| TestAnchor {
                video_id: format!("ref{i:02}"),
                anchor: test_anchor(i),
            })
            .collect(),
        reference_videos,
    }
}

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 3, 3, 8, 0, 0).unwrap()
}

pub fn open_store(dir: &std::path::Path, clock: Arc<ManualClock>) -> Store {
    Store::open(
        dir,
        clock,
        StoreOptions {
            fsync: false,
            snapshot_every: 0,
        },
    )
    .unwrap()
}

/// Test ratings with the first `hits` within tolerance and the rest 2.0 away.
pub fn test_ratings(store: &Store, study: &str, hits: usize) -> Vec<RatingSubmission> {
    let state = store.state(study).unwrap();
    state
        .setup
        .test_set
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let t = a.anchor.tenths() as f64 / 10.0;
            let score = if i < hits { t } else if t >= 2.5 { t - 2.0 } else { t + 2.0 };
            RatingSubmission {
                subject_id: String::new(),
                video_id: a.video_id.clone(),
                batch_id: None,
                raw_score: (score * 10.0).round() / 10.0,
                replays: 0,
                session_kind: facevq_core::domain::SessionKind::Testing,
                playback_completed: true,
                submitted_at: None,
            }
        })
        .collect()
}

pub fn qualify(store: &Store, study: &str, subject: &str) {
    store.register_subject(study, subject).unwrap();
    store.acknowledge_training(study, subject).unwrap();
    let n = store.state(study).unwrap().setup.test_set.len();
    let r = store.submit_test(study, subject, &test_ratings(store, study, n)).unwrap();
    assert_eq!(r.outcome, "qualified");
}

pub fn formal(subject: &str, video: &str, score: f64) -> RatingSubmission {
    RatingSubmission {
        subject_id: subject.to_string(),
        video_id: video.to_string(),
        batch_id: None,
        raw_score: score,
        replays: 0,
        session_kind: facevq_core::domain::SessionKind::Formal,
        playback_completed: true,
        submitted_at: None,
    }
}

/// Rate the subject's current batch to completion, scoring each video with `score`.
pub fn rate_current_batch(store: &Store, study: &str, subject: &str, score: impl Fn(&str) -> f64) -> u32 {
    use facevq_service::NextItem;
    let mut batch = None;
    loop {
        match store.next_item(study, subject).unwrap() {
            NextItem::Video {
                video_id,
                batch_id,
                progress,
            ..
            } => {
                if batch.is_some_and(|b| b != batch_id) {
                    return batch.unwrap();
                }
                batch = Some(batch_id);
                let ack = store.submit_rating(study, &formal(subject, &video_id, score(&video_id))).unwrap();
                assert_eq!(ack.progress.rated, progress.rated + 1);
            }
            _ => return batch.expect("subject had no video to rate"),
        }
    }
}
