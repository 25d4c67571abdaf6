//! Live rating studies over HTTP.
//!
//! Every study owns one append-only event log. [`StudyState`] is a pure fold
//! over that log, so a restart (or an auditor) can rebuild the exact state.

pub mod api;
pub mod clock;
pub mod config;
pub mod error;
pub mod log;
pub mod state;
pub mod store;

pub use api::{router, serve};
pub use clock::{Clock, ManualClock, SystemClock};
pub use config::{CreateStudyRequest, PassRule, StudyConfig, TestAnchor, TrainingExemplar};
pub use error::ServiceError;
pub use state::{NextItem, Phase, StudyState};
pub use store::Store;

/// Environment variable naming the service data directory.
pub const DATA_DIR_ENV: &str = "FACEVQ_DATA_DIR";
