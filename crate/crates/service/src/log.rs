use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::ServiceError;
use crate::state::{LogRecord, StudyState};

pub const LOG_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

/// Append-only JSON-lines log of one study.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    len: u64,
    fsync: bool,
}

impl EventLog {
    pub fn create(path: &Path, fsync: bool) -> Result<Self, ServiceError> {
        let file = OpenOptions::new().create_new(true).append(true).open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            len: 0,
            fsync,
        })
    }

    /// Open an existing log and read every record. A final line cut short by
    /// a crash is truncated away; any other unreadable line is an error.
    pub fn open(path: &Path, fsync: bool) -> Result<(Self, Vec<LogRecord>), ServiceError> {
        let bytes = fs::read(path)?;
        let complete = match bytes.iter().rposition(|&b| b == b'\n') {
            Some(i) => i + 1,
            None => 0,
        };
        let records = parse_records(&bytes[..complete])?;
        if complete < bytes.len() {
            tracing::warn!(path = %path.display(), dropped = bytes.len() - complete, "truncating torn log tail");
            OpenOptions::new().write(true).open(path)?.set_len(complete as u64)?;
        }
        let file = OpenOptions::new().append(true).open(path)?;
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
                len: complete as u64,
                fsync,
            },
            records,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &LogRecord) -> Result<(), ServiceError> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        let written = self.file.write_all(&line).and_then(|()| {
            if self.fsync {
                self.file.sync_data()
            } else {
                self.file.flush()
            }
        });
        if let Err(e) = written {
            // leave no partial line behind for the next append
            let _ = self.file.set_len(self.len);
            return Err(e.into());
        }
        self.len += line.len() as u64;
        Ok(())
    }
}

fn parse_records(bytes: &[u8]) -> Result<Vec<LogRecord>, ServiceError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(bytes).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| ServiceError::CorruptLog(format!("line {}: {e}", i + 1)))?;
        out.push(record);
    }
    Ok(out)
}

/// Read a log without opening it for writing.
pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, ServiceError> {
    let bytes = fs::read(path)?;
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    parse_records(&bytes[..complete])
}

/// Write `state` next to its log via a temporary file and rename.
pub fn write_snapshot(dir: &Path, state: &StudyState) -> Result<(), ServiceError> {
    let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
    {
        let mut f = File::create(&tmp)?;
        serde_json::to_writer(&mut f, state)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, dir.join(SNAPSHOT_FILE))?;
    Ok(())
}

pub fn read_snapshot(dir: &Path) -> Result<Option<StudyState>, ServiceError> {
    match fs::read(dir.join(SNAPSHOT_FILE)) {
        Ok(bytes) => {
            let mut state: StudyState = serde_json::from_slice(&bytes)?;
            state.reindex();
            Ok(Some(state))
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}
