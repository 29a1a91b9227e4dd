//! Flat `key = value` experiment configuration.
//!
//! Files hold one assignment per line; `#` starts a comment. Command-line
//! flags arrive as the same key/value pairs and are applied after the file.
//! Unknown keys are errors.

use std::path::PathBuf;

use crate::envs::{EnvKind, EnvName, Environment};
use crate::error::{Error, Result};
use crate::trustopt::{Algorithm, SvrpoConfig};

/// A settable configuration key and the command-line flag that sets it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfigKey {
    pub key: &'static str,
    pub flag: &'static str,
    pub help: &'static str,
}

const fn key(key: &'static str, flag: &'static str, help: &'static str) -> ConfigKey {
    ConfigKey { key, flag, help }
}

pub const CONFIG_KEYS: &[ConfigKey] = &[
    key("algo", "algo", "algorithm(s): svrpo | trpo | svrpo-sgd | svrpo-nofisher, comma separated"),
    key("env", "env", "environment: pointmass | pendulum"),
    key("seed", "seed", "single run seed"),
    key("seeds", "seeds", "comma-separated run seeds"),
    key("L", "epochs", "outer iterations"),
    key("N", "batch", "transitions per epoch"),
    key("J", "inner", "inner minibatch steps per epoch"),
    key("m", "mini", "minibatch size"),
    key("nu", "nu", "Fisher subsample ratio in (0, 1]"),
    key("delta", "delta", "KL trust-region radius"),
    key("gamma", "gamma", "discount factor"),
    key("damping", "damping", "Fisher damping"),
    key("cg_iters", "cg-iters", "conjugate-gradient iteration cap"),
    key("cg_tol", "cg-tol", "conjugate-gradient relative residual tolerance"),
    key("max_backtracks", "max-backtracks", "line-search halvings"),
    key("accept_ratio", "accept-ratio", "required fraction of predicted surrogate gain"),
    key("hidden", "hidden", "hidden layer sizes, comma separated"),
    key("init_log_std", "init-log-std", "initial log standard deviation"),
    key("horizon", "horizon", "episode length override"),
    key("adv_norm", "no-adv-norm", "standardize advantages per batch (true/false)"),
    key("dump_trajectories", "dump-trajectories", "write per-epoch JSON-lines rollouts (true/false)"),
    key("parallel", "parallel", "run seeds concurrently (true/false)"),
    key("out", "out", "output directory"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithms: Vec<Algorithm>,
    pub env: EnvName,
    pub train: SvrpoConfig,
    pub horizon: Option<usize>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub dump_trajectories: bool,
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algorithms: vec![Algorithm::Svrpo],
            env: EnvName::PointMass,
            train: SvrpoConfig::default(),
            horizon: None,
            seeds: vec![0],
            out_dir: PathBuf::from("runs"),
            dump_trajectories: false,
            parallel: false,
        }
    }
}

fn parse_value<V: std::str::FromStr>(key: &str, value: &str) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    value
        .parse::<V>()
        .map_err(|e| Error::config(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_list<V: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<V>>
where
    V::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::config(key, format!("expected a boolean, got `{value}`"))),
    }
}

/// Splits file text into `(key, value)` assignments.
pub fn parse_assignments(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::config(line, format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let v = v.trim().trim_matches('"');
        out.push((k.trim().to_string(), v.to_string()));
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Builds a configuration from optional file text and flag overrides, then validates it.
    pub fn from_sources(file_text: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        if let Some(text) = file_text {
            for (k, v) in parse_assignments(text)? {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file_text(text: &str) -> Result<Self> {
        Self::from_sources(Some(text), &[])
    }

    /// Applies one assignment without validating cross-field invariants.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "algo" => {
                self.algorithms = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<Algorithm>().map_err(|e| Error::config(key, e)))
                    .collect::<Result<_>>()?;
            }
            "env" => self.env = value.parse::<EnvName>().map_err(|e| Error::config(key, e))?,
            "seed" => self.seeds = vec![parse_value(key, value)?],
            "seeds" => self.seeds = parse_list(key, value)?,
            "L" => t.epochs = parse_value(key, value)?,
            "N" => t.batch_size = parse_value(key, value)?,
            "J" => t.inner_iters = parse_value(key, value)?,
            "m" => t.minibatch_size = parse_value(key, value)?,
            "nu" => t.fisher_ratio = parse_value(key, value)?,
            "delta" => t.line_search.delta = parse_value(key, value)?,
            "gamma" => t.gamma = parse_value(key, value)?,
            "damping" => t.damping = parse_value(key, value)?,
            "cg_iters" => t.cg.max_iters = parse_value(key, value)?,
            "cg_tol" => t.cg.residual_tol = parse_value(key, value)?,
            "max_backtracks" => t.line_search.max_backtracks = parse_value(key, value)?,
            "accept_ratio" => t.line_search.accept_ratio = parse_value(key, value)?,
            "hidden" => t.hidden_sizes = parse_list(key, value)?,
            "init_log_std" => t.init_log_std = parse_value(key, value)?,
            "horizon" => self.horizon = Some(parse_value(key, value)?),
            "adv_norm" => t.normalize_advantages = parse_bool(key, value)?,
            "dump_trajectories" => self.dump_trajectories = parse_bool(key, value)?,
            "parallel" => self.parallel = parse_bool(key, value)?,
            "out" => self.out_dir = PathBuf::from(value),
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.algorithms.is_empty() {
            return Err(Error::config("algo", "at least one algorithm is required"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if self.horizon == Some(0) {
            return Err(Error::config("horizon", "must be positive"));
        }
        let horizon = Environment::<f64>::horizon(&self.environment());
        if self.train.batch_size < horizon {
            return Err(Error::config(
                "N",
                format!("must be at least the episode horizon ({horizon})"),
            ));
        }
        Ok(())
    }

    pub fn environment(&self) -> EnvKind {
        let env = self.env.build();
        match self.horizon {
            Some(h) => env.with_horizon(h),
            None => env,
        }
    }
}
