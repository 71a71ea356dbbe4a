use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use super::TrainError;
use crate::model::OwanConfig;

/// Arithmetic used for the forward/backward passes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

impl FromStr for Precision {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" | "single" => Ok(Precision::F32),
            "f64" | "double" => Ok(Precision::F64),
            other => Err(TrainError::Config(format!("precision must be f32 or f64, got `{other}`"))),
        }
    }
}

/// Everything a training run depends on. Serialised as flat `key=value`
/// lines; model keys share the namespace.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Write a checkpoint every this many steps (0 = only at the end).
    pub checkpoint_every: usize,
    /// Dataset directory with `clean/`, `distorted/` and optionally
    /// `manifest.csv`.
    pub train_dir: PathBuf,
    pub out_dir: PathBuf,
    pub precision: Precision,
    /// Random horizontal flips of training pairs.
    pub augment: bool,
    pub eta_max: f64,
    pub eta_min: f64,
    pub model: OwanConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            seed: 0,
            checkpoint_every: 1000,
            train_dir: PathBuf::from("data/train"),
            out_dir: PathBuf::from("runs/owan"),
            precision: Precision::F32,
            augment: false,
            eta_max: 1e-3,
            eta_min: 0.0,
            model: OwanConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, TrainError> {
    value
        .parse()
        .map_err(|_| TrainError::Config(format!("{key}: cannot parse `{value}`")))
}

impl TrainConfig {
    /// Applies one setting; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        let value = value.trim();
        match key {
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "train_dir" => self.train_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "precision" => self.precision = value.parse()?,
            "augment" => self.augment = parse(key, value)?,
            "eta_max" => self.eta_max = parse(key, value)?,
            "eta_min" => self.eta_min = parse(key, value)?,
            _ => {
                if !self.model.set(key, value)? {
                    return Err(TrainError::Config(format!("unknown key `{key}`")));
                }
            }
        }
        Ok(())
    }

    /// Parses `key=value` lines on top of the defaults. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse_str(text: &str) -> Result<TrainConfig, TrainError> {
        let mut cfg = TrainConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| TrainError::Config(format!("line {}: expected key=value", n + 1)))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        if !(self.eta_min >= 0.0 && self.eta_min <= self.eta_max && self.eta_max.is_finite()) {
            return Err(TrainError::Config("need 0 ≤ eta_min ≤ eta_max".into()));
        }
        Ok(())
    }

    /// Every field as `(key, value)`, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("seed", self.seed.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("train_dir", self.train_dir.display().to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("precision", self.precision.to_string()),
            ("augment", self.augment.to_string()),
            ("eta_max", self.eta_max.to_string()),
            ("eta_min", self.eta_min.to_string()),
        ];
        out.extend(self.model.to_pairs());
        out
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}
