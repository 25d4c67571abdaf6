use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use facevq_core::domain::{SubjectStatus, VideoRecord};
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::config::{CreateStudyRequest, TrainingExemplar};
use crate::error::ServiceError;
use crate::log::{read_snapshot, write_snapshot, EventLog, LOG_FILE};
use crate::state::{
    build_setup, Decision, LogRecord, NextItem, RatingAck, RatingSubmission, ScreeningResult,
    StudyEvent, StudyState, StudySummary, SubjectRecord,
};

#[derive(Clone, Debug)]
pub struct StoreOptions {
    /// fsync after every appended event.
    pub fsync: bool,
    /// Write a snapshot every this many events; 0 disables snapshots.
    pub snapshot_every: u64,
}

impl Default for StoreOptions {
    fn default() -> Self {
        Self {
            fsync: true,
            snapshot_every: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub outcome: String,
    pub within: usize,
    pub required: usize,
    pub attempts: u32,
    pub exhausted: bool,
    pub status: SubjectStatus,
}

struct Inner {
    state: StudyState,
    log: EventLog,
}

/// One study: the in-memory fold plus its log, behind a single writer lock.
pub struct Study {
    dir: PathBuf,
    inner: Mutex<Inner>,
}

impl Study {
    fn load(dir: &Path, opts: &StoreOptions) -> Result<Self, ServiceError> {
        let (log, records) = EventLog::open(&dir.join(LOG_FILE), opts.fsync)?;
        let last = records.last().map_or(0, |r| r.seq);
        let state = match read_snapshot(dir)? {
            Some(mut snap) if snap.last_seq <= last && snap.last_seq > 0 => {
                let from = snap.last_seq;
                for r in records.iter().filter(|r| r.seq > from) {
                    snap.apply(r)?;
                }
                snap
            }
            _ => StudyState::replay(&records)?,
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            inner: Mutex::new(Inner { state, log }),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Read-only access to the current state.
    pub fn read<T>(&self, f: impl FnOnce(&StudyState) -> T) -> T {
        f(&self.lock().state)
    }
}

fn commit(inner: &mut Inner, dir: &Path, opts: &StoreOptions, event: StudyEvent, clock: &dyn Clock) -> Result<(), ServiceError> {
    let record = LogRecord {
        seq: inner.state.last_seq + 1,
        at: clock.now(),
        event,
    };
    inner.log.append(&record)?;
    inner.state.apply(&record)?;
    if opts.snapshot_every > 0 && record.seq % opts.snapshot_every == 0 {
        if let Err(e) = write_snapshot(dir, &inner.state) {
            tracing::warn!(error = %e, "snapshot failed; the log remains authoritative");
        }
    }
    Ok(())
}

pub struct Store {
    root: PathBuf,
    clock: Arc<dyn Clock>,
    opts: StoreOptions,
    studies: RwLock<BTreeMap<String, Arc<Study>>>,
}

impl Store {
    /// Open `root`, loading every study found under `root/studies`.
    pub fn open(root: impl Into<PathBuf>, clock: Arc<dyn Clock>, opts: StoreOptions) -> Result<Self, ServiceError> {
        let root = root.into();
        let studies_dir = root.join("studies");
        fs::create_dir_all(&studies_dir)?;
        let mut studies = BTreeMap::new();
        for entry in fs::read_dir(&studies_dir)? {
            let entry = entry?;
            if !entry.file_type()?.is_dir() || !entry.path().join(LOG_FILE).exists() {
                continue;
            }
            let study = Study::load(&entry.path(), &opts)?;
            let id = study.read(|s| s.study_id().to_string());
            studies.insert(id, Arc::new(study));
        }
        tracing::info!(root = %root.display(), studies = studies.len(), "store opened");
        Ok(Self {
            root,
            clock,
            opts,
            studies: RwLock::new(studies),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn clock(&self) -> &dyn Clock {
        self.clock.as_ref()
    }

    pub fn study(&self, id: &str) -> Result<Arc<Study>, ServiceError> {
        self.studies
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::StudyNotFound(id.to_string()))
    }

    pub fn study_ids(&self) -> Vec<String> {
        self.studies.read().unwrap_or_else(|p| p.into_inner()).keys().cloned().collect()
    }

    fn mutate<T>(
        &self,
        study_id: &str,
        decide: impl FnOnce(&StudyState) -> Result<Decision<T>, ServiceError>,
        respond: impl FnOnce(&StudyState) -> T,
    ) -> Result<T, ServiceError> {
        let study = self.study(study_id)?;
        let mut inner = study.lock();
        match decide(&inner.state)? {
            Decision::Existing(t) => Ok(t),
            Decision::Append(event) => {
                commit(&mut inner, &study.dir, &self.opts, event, self.clock.as_ref())?;
                Ok(respond(&inner.state))
            }
        }
    }

    pub fn create_study(&self, req: CreateStudyRequest) -> Result<StudySummary, ServiceError> {
        let setup = build_setup(req)?;
        let mut studies = self.studies.write().unwrap_or_else(|p| p.into_inner());
        if studies.contains_key(&setup.study_id) {
            return Err(ServiceError::DuplicateStudy(setup.study_id));
        }
        let dir = self.root.join("studies").join(&setup.study_id);
        fs::create_dir_all(&dir)?;
        let mut log = match EventLog::create(&dir.join(LOG_FILE), self.opts.fsync) {
            Ok(log) => log,
            Err(ServiceError::Io(e)) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(ServiceError::DuplicateStudy(setup.study_id));
            }
            Err(e) => return Err(e),
        };
        let record = LogRecord {
            seq: 1,
            at: self.clock.now(),
            event: StudyEvent::StudyCreated {
                setup: Box::new(setup.clone()),
            },
        };
        log.append(&record)?;
        let mut state = StudyState::new(setup);
        state.last_seq = 1;
        let summary = state.summary();
        studies.insert(
            summary.study_id.clone(),
            Arc::new(Study {
                dir,
                inner: Mutex::new(Inner { state, log }),
            }),
        );
        tracing::info!(study = %summary.study_id, batches = summary.n_batches, "study created");
        Ok(summary)
    }

    pub fn summary(&self, study_id: &str) -> Result<StudySummary, ServiceError> {
        Ok(self.study(study_id)?.read(StudyState::summary))
    }

    pub fn register_subject(&self, study_id: &str, subject_id: &str) -> Result<SubjectRecord, ServiceError> {
        self.mutate(
            study_id,
            |s| s.decide_register(subject_id).map(Decision::Append),
            |s| s.subjects[subject_id].clone(),
        )
    }

    pub fn subject(&self, study_id: &str, subject_id: &str) -> Result<SubjectRecord, ServiceError> {
        self.study(study_id)?.read(|s| s.subject(subject_id).cloned())
    }

    pub fn training(&self, study_id: &str) -> Result<Vec<TrainingExemplar>, ServiceError> {
        self.study(study_id)?
            .read(|s| s.setup.training.clone())
            .ok_or(ServiceError::NoTrainingSet)
    }

    pub fn acknowledge_training(&self, study_id: &str, subject_id: &str) -> Result<SubjectRecord, ServiceError> {
        self.mutate(
            study_id,
            |s| {
                s.decide_training_ack(subject_id)
                    .map(|d| match d {
                        Decision::Existing(()) => Decision::Existing(s.subjects[subject_id].clone()),
                        Decision::Append(e) => Decision::Append(e),
                    })
            },
            |s| s.subjects[subject_id].clone(),
        )
    }

    pub fn submit_test(
        &self,
        study_id: &str,
        subject_id: &str,
        ratings: &[RatingSubmission],
    ) -> Result<TestResult, ServiceError> {
        let now = self.clock.now();
        self.mutate(
            study_id,
            |s| s.decide_test(subject_id, ratings, now).map(Decision::Append),
            |s| {
                let r = &s.subjects[subject_id];
                let last = r.tests.last().expect("a test outcome was just applied");
                TestResult {
                    outcome: if last.passed { "qualified" } else { "failed" }.to_string(),
                    within: last.within,
                    required: last.required,
                    attempts: r.profile.test_attempts,
                    exhausted: r.exhausted,
                    status: r.profile.status,
                }
            },
        )
    }

    pub fn next_item(&self, study_id: &str, subject_id: &str) -> Result<NextItem, ServiceError> {
        let now = self.clock.now();
        self.study(study_id)?.read(|s| s.next_item(subject_id, now))
    }

    pub fn submit_rating(&self, study_id: &str, sub: &RatingSubmission) -> Result<RatingAck, ServiceError> {
        let now = self.clock.now();
        self.mutate(
            study_id,
            |s| s.decide_rating(sub, now),
            |s| s.rating_ack(&sub.subject_id, &sub.video_id),
        )
    }

    pub fn screen_batch(&self, study_id: &str, batch_id: u32) -> Result<ScreeningResult, ServiceError> {
        self.mutate(
            study_id,
            |s| s.decide_screening(batch_id),
            |s| s.screenings[&batch_id].clone(),
        )
    }

    pub fn close_study(&self, study_id: &str) -> Result<StudySummary, ServiceError> {
        self.mutate(
            study_id,
            |s| {
                Ok(match s.decide_close() {
                    Decision::Existing(()) => Decision::Existing(s.summary()),
                    Decision::Append(e) => Decision::Append(e),
                })
            },
            StudyState::summary,
        )
    }

    pub fn export(&self, study_id: &str) -> Result<Vec<u8>, ServiceError> {
        Ok(self.study(study_id)?.read(StudyState::export))
    }

    /// Current in-memory state, for audits and tests.
    pub fn state(&self, study_id: &str) -> Result<StudyState, ServiceError> {
        Ok(self.study(study_id)?.read(Clone::clone))
    }

    /// Force a snapshot of one study.
    pub fn snapshot(&self, study_id: &str) -> Result<(), ServiceError> {
        let study = self.study(study_id)?;
        let inner = study.lock();
        write_snapshot(&study.dir, &inner.state)
    }

    /// First study (by id) whose manifest or reference set lists `video_id`.
    pub fn find_video(&self, video_id: &str) -> Option<VideoRecord> {
        let studies: Vec<Arc<Study>> = self
            .studies
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .values()
            .cloned()
            .collect();
        studies
            .iter()
            .find_map(|st| st.read(|s| s.video(video_id).cloned()))
    }
}
