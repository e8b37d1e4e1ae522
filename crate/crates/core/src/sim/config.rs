use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embed::DEFAULT_C_MAX;
use crate::model::TrainConfig;
use crate::policy::PolicyConfig;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: cannot parse `{value}`")]
    BadValue { key: String, value: String },
    #[error("config line {0}: expected `key = value`")]
    Syntax(usize),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// How batch 0 chooses arms before any model exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColdStart {
    /// The optimizer's own estimate recorded in the trace.
    EstimatedBest,
    /// Always the default arm.
    DefaultArm,
}

impl ColdStart {
    fn name(self) -> &'static str {
        match self {
            ColdStart::EstimatedBest => "estimated_best",
            ColdStart::DefaultArm => "default_arm",
        }
    }
}

impl FromStr for ColdStart {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "estimated_best" => Ok(ColdStart::EstimatedBest),
            "default_arm" => Ok(ColdStart::DefaultArm),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub batch_size: usize,
    /// Number of batches; the trace is replayed cyclically if it is shorter.
    pub batches: usize,
    pub seed: u64,
    pub cold_start: ColdStart,
    pub c_max: usize,
    pub policy: PolicyConfig,
    pub train: TrainConfig,
    /// Standard deviation of multiplicative log-normal runtime noise; 0 disables it.
    pub noise_sd: f64,
    /// Skip the learned policy and execute only the default arm.
    pub baseline_only: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            batch_size: 20,
            batches: 5,
            seed: 42,
            cold_start: ColdStart::EstimatedBest,
            c_max: DEFAULT_C_MAX,
            policy: PolicyConfig::default(),
            train: TrainConfig {
                epochs: 200,
                batch_size: 8,
                learning_rate: 5e-2,
                seed: 0,
            },
            noise_sd: 0.0,
            baseline_only: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

impl RunConfig {
    pub const KEYS: [&'static str; 18] = [
        "batch_size",
        "batches",
        "seed",
        "cold_start",
        "c_max",
        "noise_sd",
        "baseline_only",
        "beta",
        "k_top",
        "n_min_first",
        "n_min",
        "eps0",
        "eps_min",
        "ban_multiplier",
        "ban_min_count",
        "epochs",
        "train_batch_size",
        "learning_rate",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let p = &mut self.policy;
        let t = &mut self.train;
        match key {
            "batch_size" => self.batch_size = parse(key, value)?,
            "batches" => self.batches = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "cold_start" => self.cold_start = parse(key, value)?,
            "c_max" => self.c_max = parse(key, value)?,
            "noise_sd" => self.noise_sd = parse(key, value)?,
            "baseline_only" => self.baseline_only = parse(key, value)?,
            "beta" => p.beta = parse(key, value)?,
            "k_top" => p.k_top = parse(key, value)?,
            "n_min_first" => p.n_min_first = parse(key, value)?,
            "n_min" => p.n_min = parse(key, value)?,
            "eps0" => p.eps0 = parse(key, value)?,
            "eps_min" => p.eps_min = parse(key, value)?,
            "ban_multiplier" => p.ban_multiplier = parse(key, value)?,
            "ban_min_count" => p.ban_min_count = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "train_batch_size" => t.batch_size = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax(i + 1))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Every key with its effective value, one per line, in [`Self::KEYS`] order.
    pub fn to_text(&self) -> String {
        let p = &self.policy;
        let t = &self.train;
        let values: [String; 18] = [
            self.batch_size.to_string(),
            self.batches.to_string(),
            self.seed.to_string(),
            self.cold_start.name().to_string(),
            self.c_max.to_string(),
            self.noise_sd.to_string(),
            self.baseline_only.to_string(),
            p.beta.to_string(),
            p.k_top.to_string(),
            p.n_min_first.to_string(),
            p.n_min.to_string(),
            p.eps0.to_string(),
            p.eps_min.to_string(),
            p.ban_multiplier.to_string(),
            p.ban_min_count.to_string(),
            t.epochs.to_string(),
            t.batch_size.to_string(),
            t.learning_rate.to_string(),
        ];
        let mut s = String::new();
        for (k, v) in Self::KEYS.iter().zip(values) {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn validate(&self, arms: usize) -> Result<(), ConfigError> {
        if self.batch_size == 0 || self.batches == 0 {
            return Err(ConfigError::Invalid(
                "batch_size and batches must be positive".into(),
            ));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(ConfigError::Invalid(format!(
                "noise_sd {} must be ≥ 0",
                self.noise_sd
            )));
        }
        if self.train.batch_size == 0 {
            return Err(ConfigError::Invalid(
                "train_batch_size must be positive".into(),
            ));
        }
        self.policy
            .validate(arms)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}
