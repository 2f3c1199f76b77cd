//! CSV and plot-script emission.
//!
//! Every sweep writes:
//!
//! * `cells.csv`: one row per (cell, arm) with mean and SD of each metric,
//! * `runs.csv`: one row per (cell, run, arm) with the drawn human and the metrics.
//!
//! Kind-specific files:
//!
//! * region: `heatmap_d<prior>.csv`, mean final trust with human weights as rows
//!   and robot weights as columns,
//! * adaptive: `paired.csv`, adaptive minus fixed final trust per cell.
//!
//! Floats use the shortest representation that round-trips, so output is
//! byte-stable across reruns.

use std::fs;
use std::path::{Path, PathBuf};

use valign_core::MissionMetrics;

use crate::error::{ExperimentError, Result};
use crate::spec::{SweepKind, SweepSpec};
use crate::stats::{mean, paired, sd};
use crate::sweep::CellResult;

type Metric = (&'static str, fn(&MissionMetrics) -> f64);

pub const METRICS: [Metric; 7] = [
    ("end_trust", |m| m.end_of_mission_trust),
    ("end_trust_mean", |m| m.end_of_mission_trust_mean.unwrap_or(f64::NAN)),
    ("average_trust", |m| m.average_trust),
    ("agreements", |m| m.agreements as f64),
    ("performance", |m| m.performance_score),
    ("health_pct", |m| m.health_remaining_pct),
    ("time_pct", |m| m.time_spent_pct),
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_bytes(header: Vec<String>, rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn write(dir: &Path, name: &str, bytes: &[u8], written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| ExperimentError::io(&path, e))?;
    written.push(path);
    Ok(())
}

pub fn cells_csv(results: &[CellResult]) -> Vec<u8> {
    let mut header: Vec<String> = ["cell", "prior", "human_weight", "robot_weight", "arm", "runs"]
        .map(String::from)
        .to_vec();
    for (name, _) in METRICS {
        header.push(format!("mean_{name}"));
        header.push(format!("sd_{name}"));
    }
    let mut rows = Vec::new();
    for c in results {
        for (a, label) in c.arm_labels.iter().enumerate() {
            let mut row = vec![
                c.index.to_string(),
                c.coords.prior.to_string(),
                opt(c.coords.human_weight),
                opt(c.coords.robot_weight),
                label.clone(),
                c.runs.len().to_string(),
            ];
            for (_, f) in METRICS {
                let col = c.column(a, f);
                row.push(mean(&col).to_string());
                row.push(sd(&col).to_string());
            }
            rows.push(row);
        }
    }
    csv_bytes(header, rows)
}

pub fn runs_csv(results: &[CellResult]) -> Vec<u8> {
    let mut header: Vec<String> = [
        "cell",
        "run",
        "arm",
        "human_weight",
        "alpha0",
        "beta0",
        "success_gain",
        "failure_gain",
    ]
    .map(String::from)
    .to_vec();
    header.extend(METRICS.iter().map(|(n, _)| n.to_string()));
    let mut rows = Vec::new();
    for c in results {
        for r in &c.runs {
            for (a, label) in c.arm_labels.iter().enumerate() {
                let mut row = vec![
                    c.index.to_string(),
                    r.run.to_string(),
                    label.clone(),
                    r.human_weight.to_string(),
                ];
                row.extend(r.theta.to_array().iter().map(|v| v.to_string()));
                row.extend(METRICS.iter().map(|(_, f)| f(&r.arms[a]).to_string()));
                rows.push(row);
            }
        }
    }
    csv_bytes(header, rows)
}

/// Mean final trust matrices, one per prior.
pub fn heatmaps(results: &[CellResult]) -> Vec<(f64, Vec<u8>)> {
    let mut priors: Vec<f64> = results.iter().map(|c| c.coords.prior).collect();
    priors.dedup();
    priors
        .into_iter()
        .map(|prior| {
            let cells: Vec<&CellResult> = results.iter().filter(|c| c.coords.prior == prior).collect();
            let mut robots: Vec<f64> = Vec::new();
            let mut humans: Vec<f64> = Vec::new();
            for c in &cells {
                let (h, r) = (c.coords.human_weight.unwrap_or(f64::NAN), c.coords.robot_weight.unwrap_or(f64::NAN));
                if !robots.contains(&r) {
                    robots.push(r);
                }
                if !humans.contains(&h) {
                    humans.push(h);
                }
            }
            let mut header = vec!["human_weight".to_string()];
            header.extend(robots.iter().map(|r| format!("robot_{r}")));
            let rows = humans
                .iter()
                .map(|&h| {
                    let mut row = vec![h.to_string()];
                    for &r in &robots {
                        let v = cells
                            .iter()
                            .find(|c| c.coords.human_weight == Some(h) && c.coords.robot_weight == Some(r))
                            .map(|c| mean(&c.column(0, METRICS[0].1)).to_string())
                            .unwrap_or_default();
                        row.push(v);
                    }
                    row
                })
                .collect();
            (prior, csv_bytes(header, rows))
        })
        .collect()
}

pub fn paired_csv(results: &[CellResult]) -> Vec<u8> {
    let header = [
        "cell",
        "prior",
        "human_weight",
        "pairs",
        "mean_diff_end_trust",
        "sd_diff_end_trust",
        "positive",
        "negative",
        "sign_test_p",
    ]
    .map(String::from)
    .to_vec();
    let rows = results
        .iter()
        .filter_map(|c| {
            let a = c.arm_index("adaptive")?;
            let f = c.arm_index("fixed")?;
            let s = paired(&c.column(a, METRICS[0].1), &c.column(f, METRICS[0].1));
            Some(vec![
                c.index.to_string(),
                c.coords.prior.to_string(),
                opt(c.coords.human_weight),
                s.n.to_string(),
                s.mean_diff.to_string(),
                s.sd_diff.to_string(),
                s.positive.to_string(),
                s.negative.to_string(),
                s.sign_test_p.to_string(),
            ])
        })
        .collect();
    csv_bytes(header, rows)
}

fn plot_script(spec: &SweepSpec, heatmap_files: &[String]) -> String {
    let mut s = String::from("set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 900,700\n");
    match &spec.sweep {
        SweepKind::Region(_) => {
            for f in heatmap_files {
                let stem = f.trim_end_matches(".csv");
                s.push_str(&format!(
                    "set output '{stem}.png'\nset title 'mean end-of-mission trust ({stem})'\n\
                     set xlabel 'robot health weight'\nset ylabel 'human health weight'\n\
                     set view map\nset cbrange [0:1]\n\
                     plot '{f}' matrix rowheaders columnheaders with image\n"
                ));
            }
        }
        SweepKind::ThreatCurve(a) => {
            s.push_str(
                "set output 'threat_curve.png'\nset xlabel 'prior threat'\nset ylabel 'mean end-of-mission trust'\n\
                 set yrange [0:1]\n",
            );
            let curves: Vec<String> = a
                .pairs
                .iter()
                .map(|p| {
                    format!(
                        "'cells.csv' using (($3=={h} && $4=={r}) ? $2 : 1/0):7:8 with yerrorlines title 'human {h}, robot {r}'",
                        h = p.human,
                        r = p.robot
                    )
                })
                .collect();
            s.push_str(&format!("plot {}\n", curves.join(", ")));
        }
        SweepKind::Adaptive(_) => {
            s.push_str(
                "set output 'adaptive.png'\nset xlabel 'cell'\nset ylabel 'adaptive minus fixed end-of-mission trust'\n\
                 plot 'paired.csv' using 1:5:6 with yerrorbars\n",
            );
        }
        SweepKind::Strategies(_) => {
            s.push_str(
                "set output 'strategies.png'\nset style data histograms\nset style fill solid\nset yrange [0:1]\n\
                 plot 'cells.csv' using 11:xtic(5) title 'average trust'\n",
            );
        }
    }
    s
}

/// Writes every output file for a finished sweep and returns their paths.
pub fn write_outputs(spec: &SweepSpec, results: &[CellResult], dir: &Path, plot: bool) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    write(dir, "cells.csv", &cells_csv(results), &mut written)?;
    write(dir, "runs.csv", &runs_csv(results), &mut written)?;
    let mut heatmap_files = Vec::new();
    match &spec.sweep {
        SweepKind::Region(_) => {
            for (prior, bytes) in heatmaps(results) {
                let name = format!("heatmap_d{prior}.csv");
                write(dir, &name, &bytes, &mut written)?;
                heatmap_files.push(name);
            }
        }
        SweepKind::Adaptive(_) => write(dir, "paired.csv", &paired_csv(results), &mut written)?,
        _ => {}
    }
    if plot {
        write(dir, "plot.gp", plot_script(spec, &heatmap_files).as_bytes(), &mut written)?;
    }
    Ok(written)
}
