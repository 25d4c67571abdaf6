use facevq_core::domain::{ScoreError, SubjectStatus};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("study {0} not found")]
    StudyNotFound(String),
    #[error("subject {0} not found")]
    SubjectNotFound(String),
    #[error("unknown video {0}")]
    UnknownVideo(String),
    #[error("batch {0} does not exist")]
    UnknownBatch(u32),
    #[error("study {0} already exists")]
    DuplicateStudy(String),
    #[error("subject {0} already registered")]
    DuplicateSubject(String),
    #[error("study {0} is closed")]
    StudyClosed(String),
    #[error("invalid study: {0}")]
    InvalidStudy(String),
    #[error("invalid id {0:?}: use 1-64 characters from [A-Za-z0-9_-]")]
    InvalidId(String),
    #[error("subject {subject_id} has status {status:?}, expected {expected:?}")]
    WrongStatus {
        subject_id: String,
        status: SubjectStatus,
        expected: SubjectStatus,
    },
    #[error("subject {0} has used every qualification attempt")]
    TestExhausted(String),
    #[error("expected {expected} test ratings, got {got}")]
    WrongCount { expected: usize, got: usize },
    #[error("wrong test video set: {0}")]
    WrongTestSet(String),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("rating for {0} submitted before playback completed")]
    PlaybackIncomplete(String),
    #[error("expected session_kind {expected}, got {got}")]
    WrongSessionKind { expected: String, got: String },
    #[error("out-of-order rating for {got}: expected {expected}")]
    OutOfOrder { expected: String, got: String },
    #[error("wrong batch {got}: current batch is {expected}")]
    WrongBatch { expected: u32, got: u32 },
    #[error("subject is blocked: {0}")]
    Blocked(String),
    #[error("subject {subject_id} already rated {video_id}; scores cannot be revised")]
    RevisionForbidden { subject_id: String, video_id: String },
    #[error("batch {batch_id} incomplete; pending subjects: {pending:?}")]
    BatchIncomplete { batch_id: u32, pending: Vec<String> },
    #[error("study has no training set")]
    NoTrainingSet,
    #[error("event log: {0}")]
    CorruptLog(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ServiceError {
    /// Stable machine-readable code for API clients.
    pub fn code(&self) -> &'static str {
        use ServiceError::*;
        match self {
            StudyNotFound(_) | SubjectNotFound(_) | UnknownVideo(_) | UnknownBatch(_) => "not_found",
            DuplicateStudy(_) => "duplicate_study",
            DuplicateSubject(_) => "duplicate_subject",
            StudyClosed(_) => "study_closed",
            InvalidStudy(_) | InvalidId(_) => "invalid_request",
            WrongStatus { .. } => "wrong_status",
            TestExhausted(_) => "exhausted",
            WrongCount { .. } => "wrong_count",
            WrongTestSet(_) => "wrong_video_set",
            Score(ScoreError::OffGrid(_)) => "off_grid",
            Score(_) => "out_of_range",
            PlaybackIncomplete(_) => "playback_incomplete",
            WrongSessionKind { .. } => "wrong_session_kind",
            OutOfOrder { .. } | WrongBatch { .. } => "out_of_order",
            Blocked(_) => "blocked",
            RevisionForbidden { .. } => "revision_forbidden",
            BatchIncomplete { .. } => "batch_incomplete",
            NoTrainingSet => "no_training_set",
            CorruptLog(_) | Io(_) | Json(_) => "internal",
        }
    }
}
