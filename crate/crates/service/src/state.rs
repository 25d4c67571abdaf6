use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Duration, NaiveTime, Utc};
use facevq_core::domain::{
    validate_manifest, write_rating_log, CompletedBatch, RatingEvent, Score, ScoreMatrix,
    SessionKind, SubjectProfile, SubjectStatus, VideoRecord,
};
use facevq_core::scoring::{detect_outliers, reject_subjects, subject_outlier_ratios, SubjectOutlierRatio};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{CreateStudyRequest, StudyConfig, TestAnchor, TrainingExemplar};
use crate::error::ServiceError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Training,
    Testing,
    Formal,
    Done,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub subject_id: String,
    pub batch_id: u32,
    /// Index of the next unrated video in `batch_id`.
    pub cursor: usize,
    pub phase: Phase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub attempt: u32,
    pub within: usize,
    pub required: usize,
    pub passed: bool,
    pub submitted_at: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub profile: SubjectProfile,
    pub session: SessionState,
    pub exhausted: bool,
    pub tests: Vec<TestOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreeningResult {
    pub batch_id: u32,
    pub subjects: Vec<String>,
    pub n_scores: usize,
    pub n_masked: usize,
    pub outlier_ratios: Vec<SubjectOutlierRatio>,
    pub rejected_subjects: Vec<String>,
    pub next_batch_open: Option<u32>,
}

/// Immutable study definition fixed at creation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySetup {
    pub study_id: String,
    pub config: StudyConfig,
    pub manifest: Vec<VideoRecord>,
    #[serde(default)]
    pub reference_videos: Vec<VideoRecord>,
    pub training: Option<Vec<TrainingExemplar>>,
    pub test_set: Vec<TestAnchor>,
    pub batches: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StudyEvent {
    StudyCreated { setup: Box<StudySetup> },
    SubjectRegistered { subject_id: String },
    TrainingAcknowledged { subject_id: String },
    TestSubmitted {
        subject_id: String,
        ratings: Vec<RatingEvent>,
        within: usize,
        passed: bool,
    },
    RatingRecorded { rating: RatingEvent },
    BatchScreened { result: ScreeningResult },
    StudyClosed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub event: StudyEvent,
}

/// A rating as posted by a client. The server stamps `submitted_at`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatingSubmission {
    #[serde(default)]
    pub subject_id: String,
    pub video_id: String,
    #[serde(default)]
    pub batch_id: Option<u32>,
    pub raw_score: f64,
    #[serde(default)]
    pub replays: u32,
    #[serde(default = "formal_kind")]
    pub session_kind: SessionKind,
    #[serde(default)]
    pub playback_completed: bool,
    #[serde(default)]
    pub submitted_at: Option<DateTime<Utc>>,
}

fn formal_kind() -> SessionKind {
    SessionKind::Formal
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub rated: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NextItem {
    Video {
        video_id: String,
        media_url: String,
        batch_id: u32,
        progress: Progress,
    },
    BatchComplete { batch_id: u32 },
    Blocked { reason: String },
    Done,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingAck {
    pub subject_id: String,
    pub video_id: String,
    pub batch_id: u32,
    pub duplicate: bool,
    pub progress: Progress,
}

pub enum Decision<T> {
    /// Already in the log; nothing to append.
    Existing(T),
    Append(StudyEvent),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyState {
    pub setup: StudySetup,
    pub closed: bool,
    /// Batches `0..open_batches` may be served.
    pub open_batches: u32,
    pub subjects: BTreeMap<String, SubjectRecord>,
    /// Formal ratings in log order.
    pub ratings: Vec<RatingEvent>,
    pub screenings: BTreeMap<u32, ScreeningResult>,
    pub last_seq: u64,
    #[serde(skip)]
    rating_index: HashMap<(String, String), usize>,
}

pub fn valid_id(id: &str) -> bool {
    (1..=64).contains(&id.len())
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Sort, shuffle under `seed`, then cut into consecutive batches.
pub fn assign_batches(ids: &[String], batch_size: usize, seed: u64) -> Vec<Vec<String>> {
    let mut ids = ids.to_vec();
    ids.sort();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ids.chunks(batch_size).map(<[String]>::to_vec).collect()
}

/// Start of the fixed UTC half-day window containing `t`.
pub fn half_day_start(t: DateTime<Utc>) -> DateTime<Utc> {
    let day = t.date_naive().and_time(NaiveTime::MIN).and_utc();
    if t - day >= Duration::hours(12) {
        day + Duration::hours(12)
    } else {
        day
    }
}

pub fn build_setup(req: CreateStudyRequest) -> Result<StudySetup, ServiceError> {
    if !valid_id(&req.study_id) {
        return Err(ServiceError::InvalidId(req.study_id));
    }
    req.config.validate()?;
    let manifest = validate_manifest(&req.manifest).map_err(violations)?;
    let mut known: BTreeSet<&str> = manifest.records().iter().map(|r| r.video_id.as_str()).collect();
    if !req.reference_videos.is_empty() {
        validate_manifest(&req.reference_videos).map_err(violations)?;
        for r in &req.reference_videos {
            if !known.insert(&r.video_id) {
                return Err(ServiceError::InvalidStudy(format!(
                    "reference video {} duplicates a manifest id",
                    r.video_id
                )));
            }
        }
    }
    if req.test_set.len() != req.config.test_set_size {
        return Err(ServiceError::InvalidStudy(format!(
            "test_set has {} anchors, test_set_size is {}",
            req.test_set.len(),
            req.config.test_set_size
        )));
    }
    let mut test_ids = BTreeSet::new();
    for a in &req.test_set {
        if !known.contains(a.video_id.as_str()) {
            return Err(ServiceError::UnknownVideo(a.video_id.clone()));
        }
        if !test_ids.insert(&a.video_id) {
            return Err(ServiceError::InvalidStudy(format!("test video {} listed twice", a.video_id)));
        }
    }
    for e in req.training.iter().flatten() {
        if !known.contains(e.video_id.as_str()) {
            return Err(ServiceError::UnknownVideo(e.video_id.clone()));
        }
    }
    let batches = assign_batches(
        &manifest.sorted_ids(),
        req.config.batch_size,
        req.config.shuffle_seed,
    );
    Ok(StudySetup {
        study_id: req.study_id,
        config: req.config,
        manifest: req.manifest,
        reference_videos: req.reference_videos,
        training: req.training,
        test_set: req.test_set,
        batches,
    })
}

fn violations(v: Vec<facevq_core::domain::ManifestViolation>) -> ServiceError {
    let parts: Vec<String> = v
        .iter()
        .map(|x| format!("{}: {}", x.video_id, x.message))
        .collect();
    ServiceError::InvalidStudy(parts.join("; "))
}

fn corrupt(msg: impl Into<String>) -> ServiceError {
    ServiceError::CorruptLog(msg.into())
}

impl StudyState {
    pub fn new(setup: StudySetup) -> Self {
        Self {
            setup,
            closed: false,
            open_batches: 1,
            subjects: BTreeMap::new(),
            ratings: Vec::new(),
            screenings: BTreeMap::new(),
            last_seq: 0,
            rating_index: HashMap::new(),
        }
    }

    /// Fold a complete log. The first record must create the study.
    pub fn replay<'a>(records: impl IntoIterator<Item = &'a LogRecord>) -> Result<Self, ServiceError> {
        let mut records = records.into_iter();
        let first = records.next().ok_or_else(|| corrupt("empty log"))?;
        let StudyEvent::StudyCreated { setup } = &first.event else {
            return Err(corrupt("first record does not create the study"));
        };
        let mut state = Self::new((**setup).clone());
        state.last_seq = first.seq;
        for r in records {
            state.apply(r)?;
        }
        Ok(state)
    }

    /// Rebuild indexes skipped by serialization.
    pub fn reindex(&mut self) {
        self.rating_index = self
            .ratings
            .iter()
            .enumerate()
            .map(|(i, e)| ((e.subject_id.clone(), e.video_id.clone()), i))
            .collect();
    }

    pub fn study_id(&self) -> &str {
        &self.setup.study_id
    }

    pub fn n_batches(&self) -> u32 {
        self.setup.batches.len() as u32
    }

    pub fn subject(&self, id: &str) -> Result<&SubjectRecord, ServiceError> {
        self.subjects
            .get(id)
            .ok_or_else(|| ServiceError::SubjectNotFound(id.to_string()))
    }

    pub fn video(&self, id: &str) -> Option<&VideoRecord> {
        self.setup
            .manifest
            .iter()
            .chain(&self.setup.reference_videos)
            .find(|r| r.video_id == id)
    }

    pub fn apply(&mut self, record: &LogRecord) -> Result<(), ServiceError> {
        if record.seq != self.last_seq + 1 {
            return Err(corrupt(format!(
                "sequence gap: expected {}, found {}",
                self.last_seq + 1,
                record.seq
            )));
        }
        match &record.event {
            StudyEvent::StudyCreated { .. } => return Err(corrupt("study created twice")),
            StudyEvent::SubjectRegistered { subject_id } => {
                let record = SubjectRecord {
                    profile: SubjectProfile::new(subject_id.clone()),
                    session: SessionState {
                        subject_id: subject_id.clone(),
                        batch_id: 0,
                        cursor: 0,
                        phase: Phase::Training,
                    },
                    exhausted: false,
                    tests: Vec::new(),
                };
                if self.subjects.insert(subject_id.clone(), record).is_some() {
                    return Err(corrupt(format!("subject {subject_id} registered twice")));
                }
            }
            StudyEvent::TrainingAcknowledged { subject_id } => {
                let s = self.subject_mut(subject_id)?;
                s.profile
                    .transition(SubjectStatus::Trained)
                    .map_err(|e| corrupt(e.to_string()))?;
                s.session.phase = Phase::Testing;
            }
            StudyEvent::TestSubmitted {
                subject_id,
                within,
                passed,
                ..
            } => {
                let rule = self.setup.config.test_pass_rule.clone();
                let at = record.at;
                let s = self.subject_mut(subject_id)?;
                s.profile.test_attempts += 1;
                s.tests.push(TestOutcome {
                    attempt: s.profile.test_attempts,
                    within: *within,
                    required: rule.min_within,
                    passed: *passed,
                    submitted_at: at,
                });
                if *passed {
                    s.profile
                        .transition(SubjectStatus::Qualified)
                        .map_err(|e| corrupt(e.to_string()))?;
                    s.session.phase = Phase::Formal;
                } else if s.profile.test_attempts >= rule.max_attempts {
                    s.exhausted = true;
                }
            }
            StudyEvent::RatingRecorded { rating } => self.apply_rating(rating)?,
            StudyEvent::BatchScreened { result } => {
                for id in &result.rejected_subjects {
                    let s = self.subject_mut(id)?;
                    s.profile
                        .transition(SubjectStatus::Rejected)
                        .map_err(|e| corrupt(e.to_string()))?;
                    s.session.phase = Phase::Done;
                }
                for r in &result.outlier_ratios {
                    self.subject_mut(&r.subject_id)?.profile.outlier_ratio = r.ratio;
                }
                self.open_batches = self.open_batches.max(result.batch_id + 2).min(self.n_batches());
                self.screenings.insert(result.batch_id, result.clone());
            }
            StudyEvent::StudyClosed => self.closed = true,
        }
        self.last_seq = record.seq;
        Ok(())
    }

    fn apply_rating(&mut self, rating: &RatingEvent) -> Result<(), ServiceError> {
        let batches = &self.setup.batches;
        let s = self
            .subjects
            .get_mut(&rating.subject_id)
            .ok_or_else(|| corrupt(format!("rating from unknown subject {}", rating.subject_id)))?;
        let b = s.session.batch_id;
        let batch = batches
            .get(b as usize)
            .ok_or_else(|| corrupt(format!("subject {} has no batch {b}", rating.subject_id)))?;
        if s.session.phase != Phase::Formal
            || rating.batch_id != b
            || batch.get(s.session.cursor) != Some(&rating.video_id)
        {
            return Err(corrupt(format!(
                "rating {}/{} does not match the subject's session",
                rating.subject_id, rating.video_id
            )));
        }
        if s.profile.status == SubjectStatus::Qualified {
            s.profile
                .transition(SubjectStatus::Active)
                .map_err(|e| corrupt(e.to_string()))?;
        }
        s.session.cursor += 1;
        if s.session.cursor == batch.len() {
            s.profile.completed_batches.push(CompletedBatch {
                batch_id: b,
                finished_at: rating.submitted_at,
            });
            if (b as usize) + 1 == batches.len() {
                s.session.phase = Phase::Done;
            } else {
                s.session.batch_id = b + 1;
                s.session.cursor = 0;
            }
        }
        let key = (rating.subject_id.clone(), rating.video_id.clone());
        if self.rating_index.insert(key, self.ratings.len()).is_some() {
            return Err(corrupt("duplicate formal rating"));
        }
        self.ratings.push(rating.clone());
        Ok(())
    }

    fn subject_mut(&mut self, id: &str) -> Result<&mut SubjectRecord, ServiceError> {
        self.subjects
            .get_mut(id)
            .ok_or_else(|| corrupt(format!("unknown subject {id}")))
    }

    pub fn decide_register(&self, subject_id: &str) -> Result<StudyEvent, ServiceError> {
        if self.closed {
            return Err(ServiceError::StudyClosed(self.study_id().to_string()));
        }
        if !valid_id(subject_id) {
            return Err(ServiceError::InvalidId(subject_id.to_string()));
        }
        if self.subjects.contains_key(subject_id) {
            return Err(ServiceError::DuplicateSubject(subject_id.to_string()));
        }
        Ok(StudyEvent::SubjectRegistered {
            subject_id: subject_id.to_string(),
        })
    }

    pub fn decide_training_ack(&self, subject_id: &str) -> Result<Decision<()>, ServiceError> {
        let s = self.subject(subject_id)?;
        match s.profile.status {
            SubjectStatus::Registered => Ok(Decision::Append(StudyEvent::TrainingAcknowledged {
                subject_id: subject_id.to_string(),
            })),
            SubjectStatus::Trained => Ok(Decision::Existing(())),
            status => Err(ServiceError::WrongStatus {
                subject_id: subject_id.to_string(),
                status,
                expected: SubjectStatus::Registered,
            }),
        }
    }

    pub fn decide_test(
        &self,
        subject_id: &str,
        ratings: &[RatingSubmission],
        now: DateTime<Utc>,
    ) -> Result<StudyEvent, ServiceError> {
        let s = self.subject(subject_id)?;
        if s.profile.status != SubjectStatus::Trained {
            return Err(ServiceError::WrongStatus {
                subject_id: subject_id.to_string(),
                status: s.profile.status,
                expected: SubjectStatus::Trained,
            });
        }
        if s.exhausted {
            return Err(ServiceError::TestExhausted(subject_id.to_string()));
        }
        let cfg = &self.setup.config;
        if ratings.len() != cfg.test_set_size {
            return Err(ServiceError::WrongCount {
                expected: cfg.test_set_size,
                got: ratings.len(),
            });
        }
        let anchors: BTreeMap<&str, Score> = self
            .setup
            .test_set
            .iter()
            .map(|a| (a.video_id.as_str(), a.anchor))
            .collect();
        let mut seen = BTreeSet::new();
        let mut events = Vec::with_capacity(ratings.len());
        let mut within = 0;
        for r in ratings {
            if !r.subject_id.is_empty() && r.subject_id != subject_id {
                return Err(ServiceError::InvalidStudy(format!(
                    "test rating names subject {}",
                    r.subject_id
                )));
            }
            let Some(anchor) = anchors.get(r.video_id.as_str()) else {
                return Err(ServiceError::WrongTestSet(format!("{} is not a test video", r.video_id)));
            };
            if !seen.insert(r.video_id.as_str()) {
                return Err(ServiceError::WrongTestSet(format!("{} rated twice", r.video_id)));
            }
            if !r.playback_completed {
                return Err(ServiceError::PlaybackIncomplete(r.video_id.clone()));
            }
            let score = Score::from_grid(r.raw_score)?;
            let diff = (i32::from(score.tenths()) - i32::from(anchor.tenths())).abs();
            // compare in tenths so a tolerance of 1.0 means exactly 10 steps
            if f64::from(diff) <= cfg.test_pass_rule.tolerance * 10.0 + 1e-9 {
                within += 1;
            }
            events.push(RatingEvent {
                subject_id: subject_id.to_string(),
                video_id: r.video_id.clone(),
                batch_id: 0,
                raw_score: score,
                submitted_at: now,
                replays: r.replays,
                session_kind: SessionKind::Testing,
            });
        }
        Ok(StudyEvent::TestSubmitted {
            subject_id: subject_id.to_string(),
            ratings: events,
            within,
            passed: within >= cfg.test_pass_rule.min_within,
        })
    }

    pub fn next_item(&self, subject_id: &str, now: DateTime<Utc>) -> Result<NextItem, ServiceError> {
        let s = self.subject(subject_id)?;
        let blocked = |r: &str| Ok(NextItem::Blocked { reason: r.to_string() });
        match s.profile.status {
            SubjectStatus::Rejected => return blocked("rejected"),
            SubjectStatus::Registered | SubjectStatus::Trained => return blocked("not_qualified"),
            SubjectStatus::Qualified | SubjectStatus::Active => {}
        }
        if s.session.phase == Phase::Done {
            return Ok(NextItem::Done);
        }
        let window = half_day_start(now);
        let recent = s
            .profile
            .completed_batches
            .iter()
            .filter(|c| c.finished_at >= window && c.finished_at <= now)
            .count();
        if recent >= self.setup.config.max_batches_per_half_day {
            return blocked("fatigue_limit");
        }
        let b = s.session.batch_id;
        if b >= self.open_batches {
            return Ok(NextItem::BatchComplete { batch_id: b - 1 });
        }
        let batch = &self.setup.batches[b as usize];
        let video_id = batch[s.session.cursor].clone();
        Ok(NextItem::Video {
            media_url: format!("/media/{video_id}"),
            video_id,
            batch_id: b,
            progress: Progress {
                rated: s.session.cursor,
                total: batch.len(),
            },
        })
    }

    fn ack_for(&self, subject_id: &str, video_id: &str, duplicate: bool) -> RatingAck {
        let s = &self.subjects[subject_id];
        let rating = &self.ratings[self.rating_index[&(subject_id.to_string(), video_id.to_string())]];
        let total = self.setup.batches[rating.batch_id as usize].len();
        let rated = if s.session.batch_id == rating.batch_id && s.session.phase != Phase::Done {
            s.session.cursor
        } else {
            total
        };
        RatingAck {
            subject_id: subject_id.to_string(),
            video_id: video_id.to_string(),
            batch_id: rating.batch_id,
            duplicate,
            progress: Progress { rated, total },
        }
    }

    /// Acknowledgement for a rating already in the log.
    pub fn rating_ack(&self, subject_id: &str, video_id: &str) -> RatingAck {
        self.ack_for(subject_id, video_id, false)
    }

    pub fn decide_rating(
        &self,
        sub: &RatingSubmission,
        now: DateTime<Utc>,
    ) -> Result<Decision<RatingAck>, ServiceError> {
        let s = self.subject(&sub.subject_id)?;
        if sub.session_kind != SessionKind::Formal {
            return Err(ServiceError::WrongSessionKind {
                expected: SessionKind::Formal.to_string(),
                got: sub.session_kind.to_string(),
            });
        }
        if s.profile.status == SubjectStatus::Rejected {
            return Err(ServiceError::Blocked("rejected".into()));
        }
        if !sub.playback_completed {
            return Err(ServiceError::PlaybackIncomplete(sub.video_id.clone()));
        }
        let score = Score::from_grid(sub.raw_score)?;
        let key = (sub.subject_id.clone(), sub.video_id.clone());
        if let Some(&i) = self.rating_index.get(&key) {
            if self.ratings[i].raw_score == score {
                return Ok(Decision::Existing(self.ack_for(&sub.subject_id, &sub.video_id, true)));
            }
            return Err(ServiceError::RevisionForbidden {
                subject_id: sub.subject_id.clone(),
                video_id: sub.video_id.clone(),
            });
        }
        match self.next_item(&sub.subject_id, now)? {
            NextItem::Video {
                video_id, batch_id, ..
            } => {
                if let Some(b) = sub.batch_id.filter(|&b| b != batch_id) {
                    return Err(ServiceError::WrongBatch {
                        expected: batch_id,
                        got: b,
                    });
                }
                if video_id != sub.video_id {
                    return Err(ServiceError::OutOfOrder {
                        expected: video_id,
                        got: sub.video_id.clone(),
                    });
                }
                Ok(Decision::Append(StudyEvent::RatingRecorded {
                    rating: RatingEvent {
                        subject_id: sub.subject_id.clone(),
                        video_id,
                        batch_id,
                        raw_score: score,
                        submitted_at: now,
                        replays: sub.replays,
                        session_kind: SessionKind::Formal,
                    },
                }))
            }
            NextItem::Blocked { reason } => Err(ServiceError::Blocked(reason)),
            NextItem::BatchComplete { .. } => Err(ServiceError::Blocked("batch_complete".into())),
            NextItem::Done => Err(ServiceError::Blocked("done".into())),
        }
    }

    /// Subjects who started `batch_id` and were not rejected beforehand.
    fn batch_participants(&self, batch_id: u32) -> BTreeSet<&str> {
        self.ratings
            .iter()
            .filter(|e| e.batch_id == batch_id)
            .map(|e| e.subject_id.as_str())
            .filter(|id| self.subjects[*id].profile.status != SubjectStatus::Rejected)
            .collect()
    }

    /// Raw score matrix of one batch over its non-rejected participants.
    pub fn batch_matrix(&self, batch_id: u32) -> Result<ScoreMatrix, ServiceError> {
        let batch = self
            .setup
            .batches
            .get(batch_id as usize)
            .ok_or(ServiceError::UnknownBatch(batch_id))?;
        let participants = self.batch_participants(batch_id);
        let events: Vec<RatingEvent> = self
            .ratings
            .iter()
            .filter(|e| e.batch_id == batch_id && participants.contains(e.subject_id.as_str()))
            .cloned()
            .collect();
        ScoreMatrix::from_events_with_videos(batch.clone(), &events)
            .map_err(|e| corrupt(e.to_string()))
    }

    pub fn decide_screening(&self, batch_id: u32) -> Result<Decision<ScreeningResult>, ServiceError> {
        if batch_id >= self.n_batches() {
            return Err(ServiceError::UnknownBatch(batch_id));
        }
        if let Some(done) = self.screenings.get(&batch_id) {
            return Ok(Decision::Existing(done.clone()));
        }
        let participants = self.batch_participants(batch_id);
        let pending: Vec<String> = participants
            .iter()
            .filter(|id| !self.subjects[**id].profile.has_completed(batch_id))
            .map(|id| id.to_string())
            .collect();
        if participants.is_empty() || !pending.is_empty() {
            return Err(ServiceError::BatchIncomplete { batch_id, pending });
        }
        let matrix = self.batch_matrix(batch_id)?;
        let cfg = &self.setup.config.scoring;
        let mask = detect_outliers(&matrix, cfg).map_err(|e| corrupt(e.to_string()))?;
        let rejected = reject_subjects(&matrix, &mask, cfg);
        let next = batch_id + 1;
        Ok(Decision::Append(StudyEvent::BatchScreened {
            result: ScreeningResult {
                batch_id,
                subjects: matrix.subjects().to_vec(),
                n_scores: matrix.n_scores(),
                n_masked: mask.len(),
                outlier_ratios: subject_outlier_ratios(&matrix, &mask),
                rejected_subjects: rejected.into_iter().collect(),
                next_batch_open: (next < self.n_batches()).then_some(next),
            },
        }))
    }

    pub fn decide_close(&self) -> Decision<()> {
        if self.closed {
            Decision::Existing(())
        } else {
            Decision::Append(StudyEvent::StudyClosed)
        }
    }

    /// Formal ratings as NDJSON in log order.
    pub fn export(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_rating_log(&mut out, &self.ratings).expect("writing to a Vec cannot fail");
        out
    }

    pub fn summary(&self) -> StudySummary {
        StudySummary {
            study_id: self.study_id().to_string(),
            n_videos: self.setup.manifest.len(),
            n_batches: self.n_batches(),
            batch_sizes: self.setup.batches.iter().map(Vec::len).collect(),
            open_batches: self.open_batches,
            n_subjects: self.subjects.len(),
            n_ratings: self.ratings.len(),
            closed: self.closed,
            config: self.setup.config.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub study_id: String,
    pub n_videos: usize,
    pub n_batches: u32,
    pub batch_sizes: Vec<usize>,
    pub open_batches: u32,
    pub n_subjects: usize,
    pub n_ratings: usize,
    pub closed: bool,
    pub config: StudyConfig,
}
