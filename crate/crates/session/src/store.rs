//! Append-only persistence under a data directory:
//!
//! ```text
//! <data>/index.jsonl              one {session_id, path} entry per session
//! <data>/sessions/<id>.jsonl      the session's events
//! ```
//!
//! Both are checksummed journals. A torn final line, left by a crash during a
//! write, is cut off on open. Damage anywhere else is an error.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use valign_core::journal::{decode_line, encode_line, JournalError};

use crate::model::Event;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Journal { path: PathBuf, source: JournalError },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub session_id: String,
    /// Relative to the data directory.
    pub path: String,
}

/// Open journal file positioned at its end.
#[derive(Debug)]
pub struct Appender {
    file: File,
    path: PathBuf,
    next_seq: u64,
}

impl Appender {
    /// Writes one record and syncs it to disk before returning.
    pub fn append<T: Serialize>(&mut self, record: &T) -> Result<(), StoreError> {
        let mut line = encode_line(self.next_seq, record);
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
        self.file.sync_data().map_err(io_err(&self.path))?;
        self.next_seq += 1;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records_written(&self) -> u64 {
        self.next_seq - 1
    }
}

/// Reads a journal, truncating a torn last line, and opens it for appending.
fn open_journal<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, Appender), StoreError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut records = Vec::new();
    let mut valid_len = 0;
    let mut rest = text.as_str();
    while !rest.is_empty() {
        let (line, complete) = match rest.find('\n') {
            Some(i) => (&rest[..i], true),
            None => (rest, false),
        };
        let consumed = line.len() + usize::from(complete);
        let is_last = consumed == rest.len();
        match decode_line(line, records.len() + 1) {
            Ok(r) if complete => records.push(r),
            Ok(_) => break,
            Err(_) if is_last => break,
            Err(source) => {
                return Err(StoreError::Journal {
                    path: path.to_path_buf(),
                    source,
                })
            }
        }
        valid_len += consumed;
        rest = &rest[consumed..];
    }
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    if valid_len < text.len() {
        file.set_len(valid_len as u64).map_err(io_err(path))?;
        file.sync_data().map_err(io_err(path))?;
    }
    let next_seq = records.len() as u64 + 1;
    Ok((
        records,
        Appender {
            file,
            path: path.to_path_buf(),
            next_seq,
        },
    ))
}

/// A session loaded from disk.
#[derive(Debug)]
pub struct Stored {
    pub session_id: String,
    pub events: Vec<Event>,
    pub log: Appender,
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    index: std::sync::Mutex<Appender>,
}

impl Store {
    /// Opens or initializes a data directory and loads every indexed session.
    pub fn open(root: impl Into<PathBuf>) -> Result<(Self, Vec<Stored>), StoreError> {
        let root = root.into();
        let sessions = root.join("sessions");
        fs::create_dir_all(&sessions).map_err(io_err(&sessions))?;
        let (entries, index) = open_journal::<IndexEntry>(&root.join("index.jsonl"))?;
        let mut loaded = Vec::with_capacity(entries.len());
        for e in entries {
            let (events, log) = open_journal::<Event>(&root.join(&e.path))?;
            if events.is_empty() {
                continue;
            }
            loaded.push(Stored {
                session_id: e.session_id,
                events,
                log,
            });
        }
        Ok((
            Self {
                root,
                index: std::sync::Mutex::new(index),
            },
            loaded,
        ))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes a new session's first event, then indexes it.
    pub fn create(&self, session_id: &str, created: &Event) -> Result<Appender, StoreError> {
        let rel = format!("sessions/{session_id}.jsonl");
        let path = self.root.join(&rel);
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let mut log = Appender {
            file,
            path,
            next_seq: 1,
        };
        log.append(created)?;
        self.index.lock().expect("index lock").append(&IndexEntry {
            session_id: session_id.to_string(),
            path: rel,
        })?;
        Ok(log)
    }
}
