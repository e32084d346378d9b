//! Per-season metrics rows and their CSV form.
//!
//! Columns: `season, steps, episodes, train_return_mean, train_return_max,
//! val_return, actor_loss, critic_loss, wall_secs`. Reals are written with
//! Rust's shortest round-trip formatting, so a row parses back bit-exactly.
//! `NaN` marks a season in which no training episode finished.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str =
    "season,steps,episodes,train_return_mean,train_return_max,val_return,actor_loss,critic_loss,wall_secs";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeasonMetrics {
    pub season: usize,
    /// Cumulative environment steps at the end of the season.
    pub steps: usize,
    pub episodes: usize,
    pub train_return_mean: f64,
    pub train_return_max: f64,
    pub val_return: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub wall_secs: f64,
}

fn real(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:?}")
    }
}

impl SeasonMetrics {
    pub fn to_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.season,
            self.steps,
            self.episodes,
            real(self.train_return_mean),
            real(self.train_return_max),
            real(self.val_return),
            real(self.actor_loss),
            real(self.critic_loss),
            real(self.wall_secs),
        )
    }

    pub fn parse_row(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Metrics(format!("expected 9 columns, got {}", fields.len())));
        }
        let int = |i: usize| -> Result<usize> {
            fields[i]
                .parse()
                .map_err(|_| Error::Metrics(format!("column {i}: `{}` is not an integer", fields[i])))
        };
        let real = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| Error::Metrics(format!("column {i}: `{}` is not a number", fields[i])))
        };
        Ok(Self {
            season: int(0)?,
            steps: int(1)?,
            episodes: int(2)?,
            train_return_mean: real(3)?,
            train_return_max: real(4)?,
            val_return: real(5)?,
            actor_loss: real(6)?,
            critic_loss: real(7)?,
            wall_secs: real(8)?,
        })
    }
}

/// Reads a metrics CSV and checks that season indices strictly increase.
pub fn read_metrics(path: &Path) -> Result<Vec<SeasonMetrics>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim_end) != Some(CSV_HEADER) {
        return Err(Error::Metrics(format!("{}: missing header", path.display())));
    }
    let mut rows: Vec<SeasonMetrics> = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = SeasonMetrics::parse_row(&line)?;
        if let Some(prev) = rows.last() {
            if row.season <= prev.season {
                return Err(Error::Metrics(format!(
                    "season {} follows season {}",
                    row.season, prev.season
                )));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Append-only CSV writer that flushes after every row.
#[derive(Debug)]
pub struct MetricsWriter {
    file: File,
}

impl MetricsWriter {
    /// Starts a fresh file holding only the header.
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = File::create(path)?;
        writeln!(file, "{CSV_HEADER}")?;
        file.sync_data()?;
        Ok(Self { file })
    }

    /// Rewrites `path` keeping only rows with `season < next_season`, then
    /// continues appending.
    pub fn resume(path: &Path, next_season: usize) -> Result<Self> {
        let kept: Vec<SeasonMetrics> = if path.exists() {
            read_metrics(path)?
                .into_iter()
                .filter(|r| r.season < next_season)
                .collect()
        } else {
            Vec::new()
        };
        let mut w = Self::create(path)?;
        for r in &kept {
            w.append(r)?;
        }
        Ok(w)
    }

    pub fn append(&mut self, row: &SeasonMetrics) -> Result<()> {
        writeln!(self.file, "{}", row.to_row())?;
        self.file.flush()?;
        Ok(())
    }
}
