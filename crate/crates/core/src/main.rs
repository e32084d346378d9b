use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use pixelpolicy::algos::validate;
use pixelpolicy::envs::{EnvConfig, EnvId};
use pixelpolicy::featnet::{saliency_map, ObservationStack};
use pixelpolicy::harness::{
    aggregate_runs, load_checkpoint_agent, load_config, resolve_seed, run_experiment, write_summary, SEED_ENV_VAR,
};
use pixelpolicy::image::Image;
use pixelpolicy::{Error, Result};

#[derive(Parser)]
#[command(
    name = "pixelpolicy",
    version,
    about = "Train and inspect pixel-based continuous-control agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) the seasons described by a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides both the config file and the environment variable.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean greedy return of a checkpointed agent.
    Validate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-season mean and std across run directories.
    Aggregate {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Also write the table to this CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes saliency heatmaps (PGM) for one observation of an environment.
    Saliency {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 0)]
        feature: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn train(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = load_config(config)?;
    cfg.seed = resolve_seed(cfg.seed, std::env::var(SEED_ENV_VAR).ok().as_deref(), seed)?;
    if let Some(out) = out {
        cfg.out_dir = out;
    }
    let summary = run_experiment(&cfg)?;
    if let Some(from) = summary.resumed_from {
        println!("resumed after season {from}");
    }
    for m in summary.metrics.iter().skip(summary.resumed_from.unwrap_or(0)) {
        println!(
            "season {:>3}  train {:>9.4}  val {:>9.4}",
            m.season, m.train_return_mean, m.val_return
        );
    }
    println!("{} seasons in {}", summary.seasons_completed, summary.out_dir.display());
    Ok(())
}

fn saliency(checkpoint: &Path, env: &str, feature: usize, seed: u64, out: &Path) -> Result<()> {
    let (cfg, agent) = load_checkpoint_agent(checkpoint)?;
    let id = EnvId::parse(env).ok_or_else(|| Error::InvalidArgument(format!("unknown environment `{env}`")))?;
    let env_cfg = if cfg.env.env_id == id {
        cfg.env.clone()
    } else {
        EnvConfig::for_env(id)
    };
    if env_cfg.obs_shape != cfg.env.obs_shape {
        return Err(Error::InvalidArgument(format!(
            "checkpoint expects {:?} observations, `{env}` renders {:?}",
            cfg.env.obs_shape, env_cfg.obs_shape
        )));
    }
    let (_, obs) = env_cfg.reset(seed);
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("observation.ppm"), obs.encode_pnm()?)?;
    let stack = ObservationStack::new(Arc::new(obs), cfg.stack_size);
    let maps = saliency_map(&agent.features.net, &stack.to_goal_tensor(None)?, feature)?;
    for (i, m) in maps.iter().enumerate() {
        let (h, w) = (m.shape()[0], m.shape()[1]);
        let img = Image::from_values(h, w, 1, m.data())?;
        let path = out.join(format!("saliency_{i}.pgm"));
        std::fs::write(&path, img.encode_pnm()?)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed, out } => train(&config, seed, out),
        Command::Validate {
            checkpoint,
            episodes,
            seed,
        } => {
            let (cfg, agent) = load_checkpoint_agent(&checkpoint)?;
            println!("{:?}", validate(&agent, &cfg.env, episodes, seed)?);
            Ok(())
        }
        Command::Aggregate { dirs, out } => {
            let rows = aggregate_runs(&dirs)?;
            println!("{}", pixelpolicy::harness::aggregate::SUMMARY_HEADER);
            for r in &rows {
                println!("{}", r.to_row());
            }
            match out {
                Some(path) => write_summary(&path, &rows),
                None => Ok(()),
            }
        }
        Command::Saliency {
            checkpoint,
            env,
            feature,
            seed,
            out,
        } => saliency(&checkpoint, &env, feature, seed, &out),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
