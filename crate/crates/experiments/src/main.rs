use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use valign_experiments::config::{ConfigFile, Kind};
use valign_experiments::{execute, ExperimentError, Result};
use valign_core::{replay, MissionLog};

#[derive(Parser)]
#[command(name = "valign-experiments", about = "Monte Carlo sweeps of simulated missions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// End-of-mission trust over a grid of human and robot weights.
    Region(SweepArgs),
    /// Trust against the prior threat probability for fixed weight pairs.
    ThreatCurve(SweepArgs),
    /// Adaptive learner against a fixed-weight baseline.
    Adaptive(SweepArgs),
    /// The three strategies on one matched human population.
    Strategies(SweepArgs),
    /// Verifies a mission log and prints its metrics.
    Replay { file: PathBuf },
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Also write a gnuplot script.
    #[arg(long)]
    plot: bool,
}

fn sweep(kind: Kind, args: SweepArgs) -> Result<()> {
    let mut file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if let Some(s) = args.seed {
        file.seed_base = s;
    }
    if let Some(r) = args.runs {
        file.runs_per_cell = r;
    }
    let spec = file.spec(kind);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.parallelism {
        if n == 0 {
            return Err(ExperimentError::Config("--parallelism must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| ExperimentError::Config(format!("thread pool: {e}")))?;
    let report = pool.install(|| execute(&spec, &args.out, args.plot))?;
    let files: Vec<String> = report.files.iter().map(|p| p.display().to_string()).collect();
    println!(
        "{}",
        serde_json::json!({
            "sweep": spec.sweep.name(),
            "spec_hash": report.spec_hash,
            "cells": report.cells,
            "resumed": report.resumed,
            "files": files,
        })
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Region(a) => sweep(Kind::Region, a),
        Command::ThreatCurve(a) => sweep(Kind::ThreatCurve, a),
        Command::Adaptive(a) => sweep(Kind::Adaptive, a),
        Command::Strategies(a) => sweep(Kind::Strategies, a),
        Command::Replay { file } => {
            let text = std::fs::read_to_string(&file).map_err(|e| ExperimentError::io(&file, e))?;
            let log = MissionLog::from_jsonl(&text)?;
            let metrics = replay(&log)?;
            println!("{}", serde_json::to_string(&metrics).expect("serializes"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::FAILURE
        }
    }
}
