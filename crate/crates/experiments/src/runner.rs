//! Persistent, resumable sweep execution.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;

use crate::error::{ExperimentError, Result};
use crate::manifest::Manifest;
use crate::output::write_outputs;
use crate::spec::SweepSpec;
use crate::sweep::{cell_seed, run_cell, CellResult};

#[derive(Debug)]
pub struct SweepReport {
    pub spec_hash: String,
    pub cells: usize,
    pub resumed: usize,
    pub files: Vec<PathBuf>,
    pub results: Vec<CellResult>,
}

/// Runs the cells not yet in `out/manifest.jsonl`, then writes all outputs.
pub fn execute(spec: &SweepSpec, out: &Path, plot: bool) -> Result<SweepReport> {
    spec.validate()?;
    fs::create_dir_all(out).map_err(|e| ExperimentError::io(out, e))?;
    let hash = spec.hash();
    let manifest = Manifest::open(out, &hash)?;
    let cells = spec.cells();
    let pending: Vec<_> = cells
        .iter()
        .filter(|c| manifest.get(c.index, cell_seed(spec.seed_base, c.index)).is_none())
        .collect();
    let resumed = cells.len() - pending.len();

    let manifest = Mutex::new(manifest);
    pending.par_iter().try_for_each(|cell| {
        let result = run_cell(spec, cell)?;
        manifest
            .lock()
            .expect("manifest lock")
            .record(cell_seed(spec.seed_base, cell.index), result)
    })?;
    let manifest = manifest.into_inner().expect("manifest lock");

    let results: Vec<CellResult> = cells
        .iter()
        .map(|c| {
            manifest
                .get(c.index, cell_seed(spec.seed_base, c.index))
                .cloned()
                .expect("every cell recorded")
        })
        .collect();
    let files = write_outputs(spec, &results, out, plot)?;
    Ok(SweepReport {
        spec_hash: hash,
        cells: cells.len(),
        resumed,
        files,
        results,
    })
}
