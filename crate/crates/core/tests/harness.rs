use std::fs;
use std::path::{Path, PathBuf};

use pixelpolicy::algos::Algo;
use pixelpolicy::envs::{random_policy_baseline, EnvConfig, BASELINE_EPISODES, RACER_RANDOM_BASELINE};
use pixelpolicy::harness::{
    aggregate_runs, load_config, read_metrics, run_experiment, run_experiment_with, summarize, MetricsWriter,
    SeasonMetrics, TrainConfig, CSV_HEADER,
};
use pixelpolicy::Error;

fn tiny(env: &str, out: &Path) -> TrainConfig {
    let text = format!(
        "env = {env}\nseasons = 4\ntrajectory_length = 48\nbatch_size = 16\nepochs = 2\nvalidation_episodes = 2\n\
         stack_size = 2\nfeature_dim = 8\nhidden = 16\nbuffer_size = 500\nwall_clock = false\ncheckpoint_every = 1\n"
    );
    let mut cfg = TrainConfig::parse(&text).unwrap();
    cfg.out_dir = out.to_path_buf();
    cfg
}

fn csv(dir: &Path) -> String {
    fs::read_to_string(dir.join("metrics.csv")).unwrap()
}

#[test]
fn empty_file_gives_table_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.cfg");
    fs::write(&path, "").unwrap();
    let cfg = load_config(&path).unwrap();
    assert_eq!(cfg, TrainConfig::default());
    assert_eq!(
        (
            cfg.buffer_size,
            cfg.batch_size,
            cfg.epochs,
            cfg.trajectory_length,
            cfg.stack_size
        ),
        (20000, 128, 20, 1024, 7)
    );
    assert_eq!(
        (
            cfg.gamma,
            cfg.learning_rate,
            cfg.polyak,
            cfg.clip,
            cfg.gae_lambda,
            cfg.entropy_alpha
        ),
        (0.995, 0.002, 0.995, 0.2, 0.7, 0.2)
    );
    assert_eq!(cfg.validation_episodes, 50);
    assert!(load_config(&dir.path().join("missing.cfg")).is_err());
}

#[test]
fn config_errors_are_named() {
    match TrainConfig::parse("γ: 1.5") {
        Err(Error::Config { key, .. }) => assert_eq!(key, "gamma"),
        other => panic!("{other:?}"),
    }
    match TrainConfig::parse("algo: ipg_her\nher_strategy: none") {
        Err(Error::Config { key, .. }) => assert_eq!(key, "her_strategy"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(TrainConfig::parse("colour = blue"), Err(Error::Config { .. })));
    assert!(matches!(
        TrainConfig::parse("batch_size = many"),
        Err(Error::Config { .. })
    ));
    assert!(matches!(
        TrainConfig::parse("seasons = 3\nseasons = 4"),
        Err(Error::Config { .. })
    ));
    let cfg = TrainConfig::parse("algo = ipg_her\nstack_size = 1").unwrap();
    assert_eq!(cfg.algo, Algo::IpgHer);
}

#[test]
fn canonical_text_round_trips() {
    let cfg = TrainConfig::parse("env = grasp\nalgo = ipg_her\nattention_kind = luong\narch = 3\nν = 0.35").unwrap();
    assert_eq!(TrainConfig::parse(&cfg.to_text()).unwrap(), cfg);
}

#[test]
fn zero_seasons_writes_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny("racer", dir.path());
    cfg.seasons = 0;
    let summary = run_experiment(&cfg).unwrap();
    assert_eq!(summary.seasons_completed, 0);
    assert_eq!(csv(dir.path()), format!("{CSV_HEADER}\n"));
    assert!(dir.path().join("config.txt").exists());
}

#[test]
fn same_seed_gives_identical_csv_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&tiny("grasp", a.path())).unwrap();
    run_experiment(&tiny("grasp", b.path())).unwrap();
    assert_eq!(csv(a.path()), csv(b.path()));
    let rows = read_metrics(&a.path().join("metrics.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.season).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    assert_eq!(rows.iter().map(|r| r.steps).collect::<Vec<_>>(), vec![48, 96, 144, 192]);

    let c = tempfile::tempdir().unwrap();
    let mut other = tiny("grasp", c.path());
    other.seed = 1;
    run_experiment(&other).unwrap();
    assert_ne!(csv(a.path()), csv(c.path()));
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let (whole, cut) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut cfg = tiny("racer", whole.path());
    cfg.checkpoint_replay = true;
    run_experiment(&cfg).unwrap();

    cfg.out_dir = cut.path().to_path_buf();
    // stops right after season 2's row, before its checkpoint
    let partial = run_experiment_with(&cfg, |m| m.season < 2).unwrap();
    assert_eq!(partial.seasons_completed, 3);
    let resumed = run_experiment(&cfg).unwrap();
    assert_eq!(resumed.resumed_from, Some(2));
    assert_eq!(csv(whole.path()), csv(cut.path()));
}

#[test]
fn resume_without_replay_continues_the_season_index() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny("grasp", dir.path());
    cfg.algo = Algo::IpgHer;
    cfg.her_strategy = Some(pixelpolicy::buffers::HerStrategy::Future);
    cfg.seasons = 2;
    run_experiment(&cfg).unwrap();
    cfg.seasons = 4;
    let resumed = run_experiment(&cfg).unwrap();
    assert_eq!(resumed.resumed_from, Some(2));
    let rows = read_metrics(&dir.path().join("metrics.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.season).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    assert_eq!(rows[3].steps, 4 * 48);

    cfg.gamma = 0.9;
    assert!(matches!(run_experiment(&cfg), Err(Error::Config { .. })));
}

fn write_run(dir: &Path, vals: &[f64]) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let mut w = MetricsWriter::create(&dir.join("metrics.csv")).unwrap();
    for (i, &v) in vals.iter().enumerate() {
        w.append(&SeasonMetrics {
            season: i,
            steps: 1024 * (i + 1),
            episodes: 10,
            train_return_mean: v / 2.0,
            train_return_max: v,
            val_return: v,
            actor_loss: 0.0,
            critic_loss: 0.0,
            wall_secs: 0.0,
        })
        .unwrap();
    }
    dir.to_path_buf()
}

#[test]
fn aggregate_single_and_identical_runs() {
    let root = tempfile::tempdir().unwrap();
    let a = write_run(&root.path().join("a"), &[0.1, -0.4, 2.5]);
    let b = write_run(&root.path().join("b"), &[0.1, -0.4, 2.5]);
    let single = aggregate_runs(std::slice::from_ref(&a)).unwrap();
    assert!(single
        .iter()
        .all(|r| r.val_return_std == 0.0 && r.train_return_std == 0.0));
    let pair = aggregate_runs(&[a.clone(), b]).unwrap();
    assert_eq!(
        pair.iter().map(|r| r.val_return_mean).collect::<Vec<_>>(),
        vec![0.1, -0.4, 2.5]
    );
    assert!(pair.iter().all(|r| r.val_return_std == 0.0 && r.runs == 2));

    let c = write_run(&root.path().join("c"), &[1.0, 3.0, 5.0]);
    let mixed = aggregate_runs(&[a.clone(), c]).unwrap();
    assert!((mixed[0].val_return_mean - 0.55).abs() < 1e-12);
    assert!((mixed[0].val_return_std - 0.45).abs() < 1e-12);

    let short = write_run(&root.path().join("short"), &[0.0, 0.0]);
    assert!(aggregate_runs(&[a, short]).is_err());
    assert!(aggregate_runs(&[]).is_err());
}

#[test]
fn aggregated_random_runs_agree_with_frozen_baseline() {
    let cfg = EnvConfig::racer();
    let runs: Vec<Vec<SeasonMetrics>> = (1..=5u64)
        .map(|seed| {
            let b = random_policy_baseline(&cfg, BASELINE_EPISODES, seed).unwrap();
            vec![SeasonMetrics {
                season: 0,
                steps: 0,
                episodes: b.episodes,
                train_return_mean: b.mean,
                train_return_max: b.mean,
                val_return: b.mean,
                actor_loss: 0.0,
                critic_loss: 0.0,
                wall_secs: 0.0,
            }]
        })
        .collect();
    let summary = summarize(&runs).unwrap();
    // standard error of the five-run mean, combined with the frozen value's own
    let stderr = summary[0].val_return_std / (runs.len() as f64 - 1.0).sqrt();
    let frozen_stderr = 0.0561;
    let tol = (stderr * stderr + frozen_stderr * frozen_stderr).sqrt();
    assert!(
        (summary[0].val_return_mean - RACER_RANDOM_BASELINE).abs() < tol,
        "{} vs {RACER_RANDOM_BASELINE} (tol {tol})",
        summary[0].val_return_mean
    );
}
