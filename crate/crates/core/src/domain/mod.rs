//! Record types shared by every stage of a study: videos, ratings, subjects,
//! the sparse score matrix and the tables the scoring and evaluation stages
//! emit. All of them are plain immutable values once built.

mod matrix;
mod rating;
mod score;
mod subject;
mod tables;
mod video;

pub use matrix::{MatrixError, OutlierMask, ScoreMatrix};
pub use rating::{read_rating_log, write_rating_log, LogError, RatingEvent, SessionKind};
pub use score::{quantize_score, Score, ScoreError};
pub use subject::{CompletedBatch, SubjectProfile, SubjectStatus, TransitionError};
pub use tables::{
    DistributionStats, EvalEntry, EvalReport, FrameFeatures, MosEntry, MosTable, QualityLevel,
    SubjectStats,
};
pub use video::{
    validate_manifest, Attribute, ManifestViolation, Platform, ValidatedManifest, VideoRecord,
};
