//! Checksummed JSON-lines envelopes.
//!
//! Every line is `{"seq":N,"sum":"<hex>","record":BODY}` where `sum` is the
//! first 16 hex digits of SHA-256 over `"N|BODY"`. Sequence numbers start at 1
//! and equal the line number, so a reader can say exactly where a file stops
//! being trustworthy.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JournalError {
    #[error("line {line}: malformed record ({message}); last valid line is {last_valid}")]
    Malformed {
        line: usize,
        last_valid: usize,
        message: String,
    },
    #[error("line {line}: checksum mismatch; last valid line is {last_valid}")]
    Checksum { line: usize, last_valid: usize },
    #[error("line {line}: expected sequence number {line}, found {found}; last valid line is {last_valid}")]
    Sequence {
        line: usize,
        found: u64,
        last_valid: usize,
    },
}

impl JournalError {
    pub fn last_valid(&self) -> usize {
        match self {
            Self::Malformed { last_valid, .. }
            | Self::Checksum { last_valid, .. }
            | Self::Sequence { last_valid, .. } => *last_valid,
        }
    }
}

fn checksum(seq: u64, body: &str) -> String {
    let mut h = Sha256::new();
    h.update(seq.to_string().as_bytes());
    h.update(b"|");
    h.update(body.as_bytes());
    hex::encode(&h.finalize()[..8])
}

/// Encodes one record as an envelope line, without the trailing newline.
pub fn encode_line<T: Serialize>(seq: u64, record: &T) -> String {
    let body = serde_json::to_string(record).expect("records serialize");
    format!(r#"{{"seq":{seq},"sum":"{}","record":{body}}}"#, checksum(seq, &body))
}

/// Encodes records as a whole file, one line each, numbered from 1.
pub fn encode_all<'a, T: Serialize + 'a>(records: impl IntoIterator<Item = &'a T>) -> String {
    let mut out = String::new();
    for (i, r) in records.into_iter().enumerate() {
        out.push_str(&encode_line(i as u64 + 1, r));
        out.push('\n');
    }
    out
}

#[derive(Deserialize)]
struct Envelope<'a> {
    seq: u64,
    sum: String,
    #[serde(borrow)]
    record: &'a RawValue,
}

/// Decodes and verifies the envelope at `line` (1-based).
pub fn decode_line<T: DeserializeOwned>(text: &str, line: usize) -> Result<T, JournalError> {
    let last_valid = line - 1;
    let env: Envelope = serde_json::from_str(text).map_err(|e| JournalError::Malformed {
        line,
        last_valid,
        message: e.to_string(),
    })?;
    if env.seq != line as u64 {
        return Err(JournalError::Sequence {
            line,
            found: env.seq,
            last_valid,
        });
    }
    if env.sum != checksum(env.seq, env.record.get()) {
        return Err(JournalError::Checksum { line, last_valid });
    }
    serde_json::from_str(env.record.get()).map_err(|e| JournalError::Malformed {
        line,
        last_valid,
        message: e.to_string(),
    })
}

/// Decodes a whole file. A missing final newline is tolerated; blank lines are not.
pub fn decode_all<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, JournalError> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.split('\n')
        .enumerate()
        .map(|(i, l)| decode_line(l, i + 1))
        .collect()
}
