//! Experiment driver: configuration files, the season loop with metrics and
//! checkpoints, and aggregation over seeds.

pub mod aggregate;
pub mod config;
pub mod metrics;
pub mod run;
pub mod state;

pub use aggregate::{aggregate_runs, summarize, write_summary, SummaryRow};
pub use config::{load_config, resolve_seed, TrainConfig, SEED_ENV_VAR};
pub use metrics::{read_metrics, MetricsWriter, SeasonMetrics, CSV_HEADER};
pub use run::{load_checkpoint_agent, run_experiment, run_experiment_with, RunSummary};
