//! Per-season mean and spread across seeded runs of one configuration.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::metrics::{read_metrics, SeasonMetrics};
use super::run::METRICS_FILE;
use crate::error::{Error, Result};

pub const SUMMARY_HEADER: &str = "season,runs,steps,train_return_mean,train_return_std,val_return_mean,val_return_std";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub season: usize,
    pub runs: usize,
    pub steps: usize,
    pub train_return_mean: f64,
    /// Population standard deviation across runs.
    pub train_return_std: f64,
    pub val_return_mean: f64,
    pub val_return_std: f64,
}

impl SummaryRow {
    pub fn to_row(&self) -> String {
        format!(
            "{},{},{},{:?},{:?},{:?},{:?}",
            self.season,
            self.runs,
            self.steps,
            self.train_return_mean,
            self.train_return_std,
            self.val_return_mean,
            self.val_return_std
        )
    }
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Summarises already-loaded runs. Every run must cover the same seasons.
pub fn summarize(runs: &[Vec<SeasonMetrics>]) -> Result<Vec<SummaryRow>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Metrics("no runs to aggregate".into()))?;
    for (i, run) in runs.iter().enumerate().skip(1) {
        let aligned = run.len() == first.len() && run.iter().zip(first).all(|(a, b)| a.season == b.season);
        if !aligned {
            return Err(Error::Metrics(format!("run {i} covers different seasons than run 0")));
        }
    }
    let mut out = Vec::with_capacity(first.len());
    for (k, row) in first.iter().enumerate() {
        let train: Vec<f64> = runs.iter().map(|r| r[k].train_return_mean).collect();
        let val: Vec<f64> = runs.iter().map(|r| r[k].val_return).collect();
        let (train_return_mean, train_return_std) = mean_std(&train);
        let (val_return_mean, val_return_std) = mean_std(&val);
        out.push(SummaryRow {
            season: row.season,
            runs: runs.len(),
            steps: row.steps,
            train_return_mean,
            train_return_std,
            val_return_mean,
            val_return_std,
        });
    }
    Ok(out)
}

fn metrics_path(dir: &Path) -> PathBuf {
    if dir.is_file() {
        dir.to_path_buf()
    } else {
        dir.join(METRICS_FILE)
    }
}

/// Reads `metrics.csv` from each run directory and summarises them.
pub fn aggregate_runs(dirs: &[PathBuf]) -> Result<Vec<SummaryRow>> {
    let runs = dirs
        .iter()
        .map(|d| read_metrics(&metrics_path(d)))
        .collect::<Result<Vec<_>>>()?;
    summarize(&runs)
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut f = File::create(path)?;
    writeln!(f, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(f, "{}", r.to_row())?;
    }
    Ok(())
}
