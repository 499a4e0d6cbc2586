//! On-disk layout of one profile:
//!
//! ```text
//! <data_dir>/profiles/<id>/profile.json     base vector, config, creation time
//! <data_dir>/profiles/<id>/events.jsonl     append-only event log, fsynced per event
//! <data_dir>/profiles/<id>/checkpoint.json  optional compaction point {seq, current}
//! ```
//!
//! Vectors are stored as JSON `f64` arrays, which round-trip bit-exactly.
//! A checkpoint covers every event up to its `seq`; events at or below it
//! may still sit in the log if compaction was interrupted and are skipped.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use prefadapt::AdaptConfig;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{Result, ServiceError};
use crate::profile::PreferenceEvent;

pub const PROFILE_FILE: &str = "profile.json";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub profile_id: String,
    pub base: Vec<f64>,
    pub config: AdaptConfig,
    pub created_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub seq: u64,
    pub current: Vec<f64>,
}

pub fn profiles_root(data_dir: &Path) -> PathBuf {
    data_dir.join("profiles")
}

/// Writes via a temporary file and rename so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    if let Some(parent) = path.parent() {
        File::open(parent)?.sync_all()?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec(value).map_err(|e| ServiceError::Storage(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| ServiceError::Integrity(format!("{}: {e}", path.display())))
}

pub fn open_log(dir: &Path) -> Result<File> {
    Ok(OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join(EVENTS_FILE))?)
}

/// Appends one event and waits for it to reach the disk.
pub fn append_event(log: &mut File, event: &PreferenceEvent) -> Result<()> {
    let mut line = serde_json::to_vec(event).map_err(|e| ServiceError::Storage(e.to_string()))?;
    line.push(b'\n');
    log.write_all(&line)?;
    log.sync_data()?;
    Ok(())
}

/// Reads the event log. A final line without its newline is an append that
/// never completed (and was never acknowledged); it is cut off the file.
pub fn read_events(dir: &Path) -> Result<Vec<PreferenceEvent>> {
    let path = dir.join(EVENTS_FILE);
    let file = match File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut reader = BufReader::new(file);
    let mut events = Vec::new();
    let mut good_len = 0u64;
    let mut buf = Vec::new();
    let mut lineno = 0;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        lineno += 1;
        if buf.last() != Some(&b'\n') {
            warn!(path = %path.display(), "dropping incomplete trailing event");
            OpenOptions::new().write(true).open(&path)?.set_len(good_len)?;
            break;
        }
        let event: PreferenceEvent = serde_json::from_slice(&buf)
            .map_err(|e| ServiceError::Integrity(format!("{} line {lineno}: {e}", path.display())))?;
        events.push(event);
        good_len += n as u64;
    }
    Ok(events)
}

/// Rewrites the log to hold only events after `seq`.
pub fn truncate_log_through(dir: &Path, events: &[PreferenceEvent], seq: u64) -> Result<()> {
    let mut bytes = Vec::new();
    for e in events.iter().filter(|e| e.seq > seq) {
        serde_json::to_writer(&mut bytes, e).map_err(|err| ServiceError::Storage(err.to_string()))?;
        bytes.push(b'\n');
    }
    write_atomic(&dir.join(EVENTS_FILE), &bytes)
}
