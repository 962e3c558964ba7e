//! CSV emission for simulate runs.
//!
//! Two tidy files per run: `trajectory.csv` with the per-step means and
//! `summary.csv` with the deadline-capped aggregates. Both are rendered
//! fully in memory before anything touches the filesystem, and a failed
//! write removes whatever this call already created, so a report directory
//! never holds a partial result. Values are printed as shortest round-trip
//! decimals: the same config and seed reproduce both files byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::harness::AggregateReport;

/// File name of the per-step means table.
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
/// File name of the one-row aggregate summary.
pub const SUMMARY_FILE: &str = "summary.csv";

fn render_trajectory(report: &AggregateReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "t",
        "mean_fdp",
        "mean_fnp",
        "mean_idd",
        "mean_irl",
        "n_active_mean",
    ])?;
    for i in 0..report.mean_fdp.len() {
        w.write_record([
            (i + 1).to_string(),
            report.mean_fdp[i].to_string(),
            report.mean_fnp[i].to_string(),
            report.mean_idd[i].to_string(),
            report.mean_irl[i].to_string(),
            report.mean_active[i].to_string(),
        ])?;
    }
    Ok(w.into_inner()?)
}

fn render_summary(report: &AggregateReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "K",
        "alpha",
        "afdr",
        "afdr_se",
        "tadd",
        "tadd_se",
        "tarl",
        "tarl_se",
        "gfwer",
        "gfwer_se",
        "replications",
        "seed",
    ])?;
    w.write_record([
        report.streams.to_string(),
        report.alpha.to_string(),
        report.afdr.0.to_string(),
        report.afdr.1.to_string(),
        report.tadd.0.to_string(),
        report.tadd.1.to_string(),
        report.tarl.0.to_string(),
        report.tarl.1.to_string(),
        report.gfwer.0.to_string(),
        report.gfwer.1.to_string(),
        report.replications.to_string(),
        report.seed.to_string(),
    ])?;
    Ok(w.into_inner()?)
}

/// Write both CSV files into `dir` (created if missing) and return their
/// paths, trajectory first. On error, files this call already wrote are
/// removed before the error propagates.
pub fn write_reports(dir: &Path, report: &AggregateReport) -> Result<[PathBuf; 2]> {
    let trajectory = render_trajectory(report)?;
    let summary = render_summary(report)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let paths = [dir.join(TRAJECTORY_FILE), dir.join(SUMMARY_FILE)];
    let mut written: Vec<&PathBuf> = Vec::new();
    for (path, bytes) in paths.iter().zip([&trajectory, &summary]) {
        if let Err(err) = fs::write(path, bytes) {
            for done in written {
                let _ = fs::remove_file(done);
            }
            return Err(err).with_context(|| format!("writing {}", path.display()));
        }
        written.push(path);
    }
    Ok(paths)
}
