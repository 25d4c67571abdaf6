use std::fmt;
use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Score;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionKind {
    Training,
    Testing,
    Formal,
}

impl fmt::Display for SessionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionKind::Training => "training",
            SessionKind::Testing => "testing",
            SessionKind::Formal => "formal",
        })
    }
}

/// One subject's raw score for one video.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingEvent {
    pub subject_id: String,
    pub video_id: String,
    pub batch_id: u32,
    pub raw_score: Score,
    pub submitted_at: DateTime<Utc>,
    pub replays: u32,
    pub session_kind: SessionKind,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("rating log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parse a newline-delimited JSON rating log. Blank lines are skipped.
pub fn read_rating_log<R: BufRead>(reader: R) -> Result<Vec<RatingEvent>, LogError> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| LogError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

pub fn write_rating_log<'a, W, I>(mut writer: W, events: I) -> Result<(), LogError>
where
    W: Write,
    I: IntoIterator<Item = &'a RatingEvent>,
{
    for event in events {
        serde_json::to_writer(&mut writer, event).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
