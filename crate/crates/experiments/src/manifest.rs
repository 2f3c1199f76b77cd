//! Resumable sweep state.
//!
//! Finished cells are appended to `manifest.jsonl` as checksummed journal
//! lines keyed by spec hash, cell index and cell seed. A torn final line
//! from an interrupted run is dropped on open.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use valign_core::journal::{decode_all, decode_line, encode_line};

use crate::error::{ExperimentError, Result};
use crate::sweep::CellResult;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub spec_hash: String,
    pub cell: usize,
    pub seed: u64,
    pub result: CellResult,
}

pub struct Manifest {
    path: PathBuf,
    spec_hash: String,
    done: BTreeMap<(usize, u64), CellResult>,
    next_seq: u64,
    file: File,
}

impl Manifest {
    pub fn open(dir: &Path, spec_hash: &str) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(ExperimentError::io(&path, e)),
        };
        let entries: Vec<ManifestEntry> = match decode_all(&text) {
            Ok(v) => v,
            Err(e) => {
                let keep = e.last_valid();
                let good: String = text.split_inclusive('\n').take(keep).collect();
                fs::write(&path, &good).map_err(|e| ExperimentError::io(&path, e))?;
                good.lines()
                    .enumerate()
                    .map(|(i, l)| decode_line(l, i + 1).expect("prefix already verified"))
                    .collect()
            }
        };
        let next_seq = entries.len() as u64 + 1;
        let done = entries
            .into_iter()
            .filter(|e| e.spec_hash == spec_hash)
            .map(|e| ((e.cell, e.seed), e.result))
            .collect();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| ExperimentError::io(&path, e))?;
        Ok(Self {
            path,
            spec_hash: spec_hash.to_string(),
            done,
            next_seq,
            file,
        })
    }

    pub fn get(&self, cell: usize, seed: u64) -> Option<&CellResult> {
        self.done.get(&(cell, seed))
    }

    pub fn completed(&self) -> usize {
        self.done.len()
    }

    pub fn record(&mut self, seed: u64, result: CellResult) -> Result<()> {
        let entry = ManifestEntry {
            spec_hash: self.spec_hash.clone(),
            cell: result.index,
            seed,
            result,
        };
        let mut line = encode_line(self.next_seq, &entry);
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| ExperimentError::io(&self.path, e))?;
        self.next_seq += 1;
        self.done.insert((entry.cell, seed), entry.result);
        Ok(())
    }
}
