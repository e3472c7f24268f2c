//! Append-only JSONL interaction log.
//!
//! Each record is one line. A batch of events from one request is written
//! with a single `write_all` under the file lock, so records from concurrent
//! sessions interleave only at batch boundaries. An append that succeeds
//! before a crash may never be acknowledged to the client (at-least-once).

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::error::LogError;
use crate::model::SessionEvent;

pub struct EventLog {
    path: PathBuf,
    file: Mutex<File>,
    fsync: bool,
}

impl EventLog {
    /// Opens (creating if needed) a log for appending.
    pub fn open(path: impl Into<PathBuf>, fsync: bool) -> Result<Self, LogError> {
        let path = path.into();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|source| LogError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|source| LogError::Io {
                path: path.clone(),
                source,
            })?;
        Ok(EventLog {
            path,
            file: Mutex::new(file),
            fsync,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, event: &SessionEvent) -> Result<(), LogError> {
        self.append_all(std::slice::from_ref(event))
    }

    pub fn append_all(&self, events: &[SessionEvent]) -> Result<(), LogError> {
        let mut buf = Vec::new();
        for ev in events {
            serde_json::to_writer(&mut buf, ev)?;
            buf.push(b'\n');
        }
        let io = |source| LogError::Io {
            path: self.path.clone(),
            source,
        };
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(&buf).map_err(io)?;
        if self.fsync {
            file.sync_data().map_err(io)?;
        }
        Ok(())
    }

    pub fn load(&self) -> Result<Vec<SessionEvent>, LogError> {
        load(&self.path)
    }
}

/// Reads every record; the first malformed line aborts with its line number.
pub fn load(path: &Path) -> Result<Vec<SessionEvent>, LogError> {
    let file = File::open(path).map_err(|source| LogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LogError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line).map_err(|source| LogError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push(ev);
    }
    Ok(out)
}

/// Splits a log into per-session sequences, keeping file order within each.
pub fn by_session(events: &[SessionEvent]) -> BTreeMap<String, Vec<SessionEvent>> {
    let mut out: BTreeMap<String, Vec<SessionEvent>> = BTreeMap::new();
    for ev in events {
        out.entry(ev.session_id.clone()).or_default().push(ev.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EventKind;

    fn ev(session: &str, seq: u64) -> SessionEvent {
        SessionEvent {
            session_id: session.into(),
            seq,
            elapsed_ms: seq * 10,
            wall_ms: 0,
            kind: EventKind::AppViewed {
                app_id: "a".into(),
            },
        }
    }

    #[test]
    fn append_then_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        {
            let log = EventLog::open(&path, true).unwrap();
            log.append(&ev("s", 0)).unwrap();
        }
        let log = EventLog::open(&path, false).unwrap();
        log.append(&ev("s", 1)).unwrap();
        let events = load(&path).unwrap();
        assert_eq!(events, vec![ev("s", 0), ev("s", 1)]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let good = serde_json::to_string(&ev("s", 0)).unwrap();
        std::fs::write(&path, format!("{good}\n{good}\n{{not json\n")).unwrap();
        match load(&path) {
            Err(LogError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }
}
