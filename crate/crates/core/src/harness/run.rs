//! Season loop for one seeded run: metrics after every season, periodic
//! checkpoints and resumption from `checkpoint.pxck` in the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::TrainConfig;
use super::metrics::{MetricsWriter, SeasonMetrics};
use super::state::{checkpoint_config, restore_run, run_checkpoint};
use crate::algos::{train_season, validate, Agent, Experience};
use crate::error::{Error, Result};
use crate::netlib::Checkpoint;

pub const CONFIG_FILE: &str = "config.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.pxck";

/// Validation episodes are the same every season so curves compare like with like.
pub fn validation_seed(seed: u64) -> u64 {
    seed ^ 0x5e_ed0f_7a11_da7e
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    /// Seasons finished before this invocation started, when resuming.
    pub resumed_from: Option<usize>,
    pub seasons_completed: usize,
    pub metrics: Vec<SeasonMetrics>,
}

fn save_checkpoint(cfg: &TrainConfig, agent: &Agent, exp: &Experience, completed: usize) -> Result<()> {
    let path = cfg.out_dir.join(CHECKPOINT_FILE);
    let tmp = cfg.out_dir.join(format!("{CHECKPOINT_FILE}.tmp"));
    run_checkpoint(cfg, agent, exp, completed)?.save(&tmp)?;
    fs::rename(&tmp, &path)?;
    Ok(())
}

/// Settings that may change between a run and its continuation.
fn comparable(cfg: &TrainConfig) -> String {
    let mut c = cfg.clone();
    c.seasons = 0;
    c.out_dir = PathBuf::new();
    c.to_text()
}

fn open_run(cfg: &TrainConfig) -> Result<(Agent, Experience, usize, Option<usize>)> {
    let path = cfg.out_dir.join(CHECKPOINT_FILE);
    if !path.exists() {
        let agent = Agent::new(cfg.agent_config(), cfg.seed)?;
        let exp = Experience::new(&agent, cfg.seed)?;
        return Ok((agent, exp, 0, None));
    }
    let ck = Checkpoint::load(&path)?;
    if comparable(&checkpoint_config(&ck)?) != comparable(cfg) {
        return Err(Error::config(
            "out_dir",
            format!(
                "{} holds a checkpoint of a different configuration",
                cfg.out_dir.display()
            ),
        ));
    }
    let (agent, exp, completed) = restore_run(&ck, cfg)?;
    Ok((agent, exp, completed, Some(completed)))
}

/// Runs `cfg.seasons` seasons, resuming if the output directory has a checkpoint.
pub fn run_experiment(cfg: &TrainConfig) -> Result<RunSummary> {
    run_experiment_with(cfg, |_| true)
}

/// As [`run_experiment`], calling `keep_going` after each season's row is
/// written. Returning `false` stops the run at once without the exit
/// checkpoint, as if the process had died there.
pub fn run_experiment_with(
    cfg: &TrainConfig,
    mut keep_going: impl FnMut(&SeasonMetrics) -> bool,
) -> Result<RunSummary> {
    cfg.check()?;
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join(CONFIG_FILE), cfg.to_text())?;

    let (mut agent, mut exp, completed, resumed_from) = open_run(cfg)?;
    let metrics_path = cfg.out_dir.join(METRICS_FILE);
    let previous = if completed > 0 && metrics_path.exists() {
        super::metrics::read_metrics(&metrics_path)?
            .into_iter()
            .filter(|r| r.season < completed)
            .collect()
    } else {
        Vec::new()
    };
    let mut writer = MetricsWriter::resume(&metrics_path, completed)?;
    let mut steps = previous
        .last()
        .map_or(completed * cfg.trajectory_length, |r: &SeasonMetrics| r.steps);
    let mut metrics = previous;
    let val_seed = validation_seed(cfg.seed);

    let mut season = completed;
    while season < cfg.seasons {
        let start = Instant::now();
        let stats = train_season(&mut agent, &mut exp)?;
        let val_return = validate(&agent, &cfg.env, cfg.validation_episodes, val_seed)?;
        steps += stats.steps;
        let row = SeasonMetrics {
            season,
            steps,
            episodes: stats.episodes,
            train_return_mean: stats.train_return_mean,
            train_return_max: stats.train_return_max,
            val_return,
            actor_loss: stats.actor_loss,
            critic_loss: stats.critic_loss,
            wall_secs: if cfg.wall_clock {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        writer.append(&row)?;
        metrics.push(row);
        season += 1;
        if !keep_going(&row) {
            return Ok(RunSummary {
                out_dir: cfg.out_dir.clone(),
                resumed_from,
                seasons_completed: season,
                metrics,
            });
        }
        if cfg.checkpoint_every > 0 && season % cfg.checkpoint_every == 0 && season < cfg.seasons {
            save_checkpoint(cfg, &agent, &exp, season)?;
        }
    }
    save_checkpoint(cfg, &agent, &exp, season)?;
    Ok(RunSummary {
        out_dir: cfg.out_dir.clone(),
        resumed_from,
        seasons_completed: season,
        metrics,
    })
}

/// Loads the agent stored in a run checkpoint together with its configuration.
pub fn load_checkpoint_agent(path: &Path) -> Result<(TrainConfig, Agent)> {
    let ck = Checkpoint::load(path)?;
    let cfg = checkpoint_config(&ck)?;
    let agent = super::state::load_agent(&ck, &cfg)?;
    Ok((cfg, agent))
}
