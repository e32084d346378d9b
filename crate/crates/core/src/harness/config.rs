//! Flat `key = value` run configuration.
//!
//! One assignment per line, `=` or `:` as separator, `#` starts a comment.
//! Missing keys keep their defaults, unknown or repeated keys are rejected.
//! The Greek hyper-parameter symbols are accepted as aliases
//! (`γ`, `η`, `τ`, `ε`, `λ`, `α`, `ν`, and `|D|` for the trajectory length).

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::algos::{AgentConfig, Algo};
use crate::buffers::{HerConfig, HerStrategy};
use crate::envs::{EnvConfig, EnvId};
use crate::error::{Error, Result};
use crate::featnet::FeatureNetSpec;
use crate::netlib::AttentionKind;

pub const SEED_ENV_VAR: &str = "PIXELPOLICY_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub algo: Algo,
    /// `None` only for algorithms without relabeling.
    pub her_strategy: Option<HerStrategy>,
    pub her_use_features: bool,
    pub her_threshold: f64,
    pub her_pool_capacity: usize,
    pub attention_kind: Option<AttentionKind>,
    pub arch: u32,
    pub use_lstm: bool,
    pub stack_size: usize,
    pub feature_dim: usize,
    pub hidden: usize,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub trajectory_length: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub polyak: f64,
    pub clip: f64,
    pub gae_lambda: f64,
    pub entropy_alpha: f64,
    pub ipg_nu: f64,
    pub seasons: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub validation_episodes: usize,
    /// Checkpoint cadence in seasons; a final checkpoint is always written.
    pub checkpoint_every: usize,
    /// Also store the replay buffer (large) so a resume is exact.
    pub checkpoint_replay: bool,
    /// When false the `wall_secs` column is written as 0 so CSVs compare bytewise.
    pub wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::grasp(),
            algo: Algo::Ipg,
            her_strategy: None,
            her_use_features: false,
            her_threshold: 0.3,
            her_pool_capacity: 500,
            attention_kind: None,
            arch: 0,
            use_lstm: false,
            stack_size: 7,
            feature_dim: 32,
            hidden: 64,
            buffer_size: 20_000,
            batch_size: 128,
            epochs: 20,
            trajectory_length: 1024,
            gamma: 0.995,
            learning_rate: 0.002,
            polyak: 0.995,
            clip: 0.2,
            gae_lambda: 0.7,
            entropy_alpha: 0.2,
            ipg_nu: 0.2,
            seasons: 30,
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            validation_episodes: 50,
            checkpoint_every: 5,
            checkpoint_replay: false,
            wall_clock: true,
        }
    }
}

fn canonical_key(key: &str) -> &str {
    match key {
        "γ" => "gamma",
        "η" => "learning_rate",
        "τ" => "polyak",
        "ε" => "clip",
        "λ" => "gae_lambda",
        "α" => "entropy_alpha",
        "ν" => "ipg_nu",
        "|D|" => "trajectory_length",
        other => other,
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(key, format!("`{v}` is not a valid {}", std::any::type_name::<T>())))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(key, format!("`{v}` is not a boolean"))),
    }
}

fn unit_interval(key: &str, v: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::config(key, format!("{v} outside [0, 1]")))
    }
}

fn positive_int(key: &str, v: &str) -> Result<usize> {
    let n: usize = parse_num(key, v)?;
    if n == 0 {
        return Err(Error::config(key, "must be positive"));
    }
    Ok(n)
}

fn positive_real(key: &str, v: &str) -> Result<f64> {
    let x: f64 = parse_num(key, v)?;
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::config(key, format!("{x} must be positive")));
    }
    Ok(x)
}

/// Splits the text into `(line, key, value)` triples.
fn assignments(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some(at) = line.find(['=', ':']) else {
            return Err(Error::config(line, format!("line {}: expected `key = value`", i + 1)));
        };
        let key = canonical_key(line[..at].trim()).to_string();
        let value = line[at + 1..].trim().to_string();
        if key.is_empty() {
            return Err(Error::config("", format!("line {}: missing key", i + 1)));
        }
        if !seen.insert(key.clone()) {
            return Err(Error::config(key, "given more than once"));
        }
        out.push((i + 1, key, value));
    }
    Ok(out)
}

impl TrainConfig {
    /// Parses configuration text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let pairs = assignments(text)?;
        let mut cfg = TrainConfig::default();
        // the environment preset comes first so that arena overrides apply to it
        if let Some((_, k, v)) = pairs.iter().find(|(_, k, _)| k == "env") {
            let id = EnvId::parse(v).ok_or_else(|| Error::config(k, format!("unknown environment `{v}`")))?;
            cfg.env = EnvConfig::for_env(id);
        }
        let mut her_given = false;
        for (_, key, v) in &pairs {
            let k = key.as_str();
            match k {
                "env" => {}
                "algo" => {
                    cfg.algo = Algo::parse(v).ok_or_else(|| Error::config(k, format!("unknown algorithm `{v}`")))?
                }
                "her_strategy" => {
                    her_given = true;
                    cfg.her_strategy = match v.as_str() {
                        "none" => None,
                        s => Some(
                            HerStrategy::parse(s).ok_or_else(|| Error::config(k, format!("unknown strategy `{s}`")))?,
                        ),
                    }
                }
                "her_use_features" => cfg.her_use_features = parse_bool(k, v)?,
                "her_threshold" => cfg.her_threshold = positive_real(k, v)?,
                "her_pool_capacity" => cfg.her_pool_capacity = positive_int(k, v)?,
                "attention_kind" => {
                    cfg.attention_kind = match v.as_str() {
                        "none" => None,
                        s => Some(
                            AttentionKind::parse(s)
                                .ok_or_else(|| Error::config(k, format!("unknown attention `{s}`")))?,
                        ),
                    }
                }
                "arch" => {
                    let a: u32 = parse_num(k, v)?;
                    if a > 3 {
                        return Err(Error::config(k, format!("{a} outside 0..=3")));
                    }
                    cfg.arch = a;
                }
                "use_lstm" => cfg.use_lstm = parse_bool(k, v)?,
                "stack_size" => cfg.stack_size = positive_int(k, v)?,
                "feature_dim" => cfg.feature_dim = positive_int(k, v)?,
                "hidden" => cfg.hidden = positive_int(k, v)?,
                "buffer_size" => cfg.buffer_size = positive_int(k, v)?,
                "batch_size" => cfg.batch_size = positive_int(k, v)?,
                "epochs" => cfg.epochs = positive_int(k, v)?,
                "trajectory_length" => cfg.trajectory_length = positive_int(k, v)?,
                "gamma" => cfg.gamma = unit_interval(k, parse_num(k, v)?)?,
                "learning_rate" => {
                    let x: f64 = parse_num(k, v)?;
                    if !(x.is_finite() && x >= 0.0) {
                        return Err(Error::config(k, format!("{x} must be non-negative")));
                    }
                    cfg.learning_rate = x;
                }
                "polyak" => cfg.polyak = unit_interval(k, parse_num(k, v)?)?,
                "clip" => {
                    let x: f64 = parse_num(k, v)?;
                    if !(x > 0.0 && x < 1.0) {
                        return Err(Error::config(k, format!("{x} outside (0, 1)")));
                    }
                    cfg.clip = x;
                }
                "gae_lambda" => cfg.gae_lambda = unit_interval(k, parse_num(k, v)?)?,
                "entropy_alpha" => {
                    let x: f64 = parse_num(k, v)?;
                    if !(x.is_finite() && x >= 0.0) {
                        return Err(Error::config(k, format!("{x} must be non-negative")));
                    }
                    cfg.entropy_alpha = x;
                }
                "ipg_nu" => cfg.ipg_nu = unit_interval(k, parse_num(k, v)?)?,
                "seasons" => cfg.seasons = parse_num(k, v)?,
                "seed" => cfg.seed = parse_num(k, v)?,
                "out_dir" => {
                    if v.is_empty() {
                        return Err(Error::config(k, "must not be empty"));
                    }
                    cfg.out_dir = PathBuf::from(v);
                }
                "validation_episodes" => cfg.validation_episodes = positive_int(k, v)?,
                "checkpoint_every" => cfg.checkpoint_every = positive_int(k, v)?,
                "checkpoint_replay" => cfg.checkpoint_replay = parse_bool(k, v)?,
                "wall_clock" => cfg.wall_clock = parse_bool(k, v)?,
                "env_max_steps" => cfg.env.max_steps = positive_int(k, v)?,
                "env_step_scale" => cfg.env.step_scale = positive_real(k, v)?,
                "env_gripper_radius" => cfg.env.gripper_radius = positive_real(k, v)?,
                "env_target_radius" => cfg.env.target_radius = positive_real(k, v)?,
                "env_velocity_scale" => cfg.env.velocity_scale = positive_real(k, v)?,
                "env_angular_scale" => cfg.env.angular_scale = positive_real(k, v)?,
                "env_dt" => cfg.env.dt = positive_real(k, v)?,
                "env_success_bonus" => cfg.env.success_bonus = parse_num(k, v)?,
                "env_object_count_min" => cfg.env.object_count_range.0 = positive_int(k, v)?,
                "env_object_count_max" => cfg.env.object_count_range.1 = positive_int(k, v)?,
                _ => return Err(Error::config(k, "unknown key")),
            }
        }
        if cfg.algo == Algo::IpgHer && !her_given {
            cfg.her_strategy = Some(HerStrategy::Future);
        }
        cfg.check()?;
        Ok(cfg)
    }

    /// Cross-field consistency.
    pub fn check(&self) -> Result<()> {
        match (self.algo, self.her_strategy) {
            (Algo::IpgHer, None) => return Err(Error::config("her_strategy", "ipg_her needs a relabeling strategy")),
            (Algo::IpgHer, Some(_)) | (_, None) => {}
            (a, Some(_)) => {
                return Err(Error::config(
                    "her_strategy",
                    format!("relabeling requires algo ipg_her, not {}", a.name()),
                ))
            }
        }
        if self.use_lstm && self.stack_size < 2 {
            return Err(Error::config("use_lstm", "an LSTM over frames needs stack_size >= 2"));
        }
        if self.attention_kind.is_none() && self.arch != 0 {
            return Err(Error::config("arch", "an attention arch needs attention_kind"));
        }
        if self.env.object_count_range.0 > self.env.object_count_range.1 {
            return Err(Error::config("env_object_count_min", "exceeds env_object_count_max"));
        }
        self.env.validate().map_err(|e| Error::config("env", e.to_string()))?;
        Ok(())
    }

    pub fn features(&self) -> FeatureNetSpec {
        FeatureNetSpec {
            attention: self.attention_kind,
            arch: self.arch,
            use_lstm: self.use_lstm,
            stack_size: self.stack_size,
            feature_dim: self.feature_dim,
            ..FeatureNetSpec::default()
        }
    }

    pub fn her(&self) -> Option<HerConfig> {
        self.her_strategy.map(|s| HerConfig {
            strategy: s,
            use_features: self.her_use_features,
            threshold: self.her_threshold,
            success_pool_capacity: self.her_pool_capacity,
        })
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            algo: self.algo,
            env: self.env.clone(),
            features: self.features(),
            hidden: self.hidden,
            her: self.her(),
            buffer_size: self.buffer_size,
            batch_size: self.batch_size,
            epochs: self.epochs,
            trajectory_length: self.trajectory_length,
            gamma: self.gamma,
            learning_rate: self.learning_rate,
            polyak: self.polyak,
            clip: self.clip,
            gae_lambda: self.gae_lambda,
            entropy_alpha: self.entropy_alpha,
            ipg_nu: self.ipg_nu,
        }
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let e = &self.env;
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("env", e.env_id.name().into());
        kv("algo", self.algo.name().into());
        kv("her_strategy", self.her_strategy.map_or("none", |h| h.name()).into());
        kv("her_use_features", self.her_use_features.to_string());
        kv("her_threshold", format!("{:?}", self.her_threshold));
        kv("her_pool_capacity", self.her_pool_capacity.to_string());
        kv(
            "attention_kind",
            self.attention_kind.map_or("none", |a| a.name()).into(),
        );
        kv("arch", self.arch.to_string());
        kv("use_lstm", self.use_lstm.to_string());
        kv("stack_size", self.stack_size.to_string());
        kv("feature_dim", self.feature_dim.to_string());
        kv("hidden", self.hidden.to_string());
        kv("buffer_size", self.buffer_size.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("epochs", self.epochs.to_string());
        kv("trajectory_length", self.trajectory_length.to_string());
        kv("gamma", format!("{:?}", self.gamma));
        kv("learning_rate", format!("{:?}", self.learning_rate));
        kv("polyak", format!("{:?}", self.polyak));
        kv("clip", format!("{:?}", self.clip));
        kv("gae_lambda", format!("{:?}", self.gae_lambda));
        kv("entropy_alpha", format!("{:?}", self.entropy_alpha));
        kv("ipg_nu", format!("{:?}", self.ipg_nu));
        kv("seasons", self.seasons.to_string());
        kv("seed", self.seed.to_string());
        kv("out_dir", self.out_dir.display().to_string());
        kv("validation_episodes", self.validation_episodes.to_string());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        kv("checkpoint_replay", self.checkpoint_replay.to_string());
        kv("wall_clock", self.wall_clock.to_string());
        kv("env_max_steps", e.max_steps.to_string());
        kv("env_step_scale", format!("{:?}", e.step_scale));
        kv("env_gripper_radius", format!("{:?}", e.gripper_radius));
        kv("env_target_radius", format!("{:?}", e.target_radius));
        kv("env_velocity_scale", format!("{:?}", e.velocity_scale));
        kv("env_angular_scale", format!("{:?}", e.angular_scale));
        kv("env_dt", format!("{:?}", e.dt));
        kv("env_success_bonus", format!("{:?}", e.success_bonus));
        kv("env_object_count_min", e.object_count_range.0.to_string());
        kv("env_object_count_max", e.object_count_range.1.to_string());
        s
    }
}

pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path)?;
    TrainConfig::parse(&text)
}

/// Seed precedence: command line, then the environment variable, then the file.
pub fn resolve_seed(config_seed: u64, env_value: Option<&str>, cli: Option<u64>) -> Result<u64> {
    if let Some(s) = cli {
        return Ok(s);
    }
    match env_value {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::config(SEED_ENV_VAR, format!("`{v}` is not a seed"))),
        None => Ok(config_seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_separators() {
        let c = TrainConfig::parse("# header\nalgo: sac  # trailing\n\nγ = 0.9\n").unwrap();
        assert_eq!(c.algo, Algo::Sac);
        assert_eq!(c.gamma, 0.9);
    }

    #[test]
    fn duplicate_key_is_rejected() {
        assert!(TrainConfig::parse("gamma = 0.9\nγ = 0.8").is_err());
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(1, Some("2"), Some(3)).unwrap(), 3);
        assert_eq!(resolve_seed(1, Some("2"), None).unwrap(), 2);
        assert_eq!(resolve_seed(1, None, None).unwrap(), 1);
        assert!(resolve_seed(1, Some("x"), None).is_err());
    }
}
