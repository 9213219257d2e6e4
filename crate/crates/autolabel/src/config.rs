//! Pipeline settings from `key = value` files, with command-line overrides.
//!
//! Precedence, highest first: command-line flag, `AUTOLABEL_SEED` (seed
//! only), config file, built-in default. Paths in a config file are relative
//! to the file's directory; paths given on the command line are used as is.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use autolabel_core::classifier::{FeatureSpec, TrainConfig};
use autolabel_core::guided_filter::GuidedFilterParams;
use autolabel_core::selftrain::{IterateConfig, SegmenterConfig, SelectionPolicy, DEFAULT_TAU_CAM};

use crate::error::{Error, Result};

pub const SEED_ENV: &str = "AUTOLABEL_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Transfer,
    SimpleToComplex,
    Cam,
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "transfer" => Ok(Strategy::Transfer),
            "simple2complex" => Ok(Strategy::SimpleToComplex),
            "cam" => Ok(Strategy::Cam),
            _ => Err(format!("unknown strategy {s:?} (transfer, simple2complex, cam)")),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Transfer => "transfer",
            Strategy::SimpleToComplex => "simple2complex",
            Strategy::Cam => "cam",
        })
    }
}

/// Every recognised key.
pub const KEYS: &[&str] = &[
    "seed",
    "strategy",
    "simple",
    "source",
    "target",
    "validation",
    "high_radius",
    "learning_rate",
    "momentum",
    "weight_decay",
    "batch_size",
    "lr_step",
    "epochs",
    "gf_radius",
    "gf_epsilon",
    "select_lo",
    "select_hi",
    "tau",
    "tau_cam",
    "rounds",
    "patience",
    "reinit",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub strategy: Strategy,
    /// Manifest of flat-background images (simple2complex).
    pub simple: Option<PathBuf>,
    /// Manifest of labelled source images (transfer).
    pub source: Option<PathBuf>,
    /// Manifest of images to label; `cam` reads image-level labels from it.
    pub target: Option<PathBuf>,
    /// The last `validation` target records form the validation split.
    pub validation: usize,
    pub high_radius: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub lr_step: usize,
    pub epochs: usize,
    pub gf_radius: usize,
    pub gf_epsilon: f64,
    pub select_lo: f64,
    pub select_hi: f64,
    pub tau: f64,
    pub tau_cam: f64,
    pub rounds: usize,
    pub patience: usize,
    pub reinit: bool,
}

impl Default for Settings {
    fn default() -> Self {
        let train = TrainConfig::default();
        let gf = GuidedFilterParams::default();
        let policy = SelectionPolicy::default();
        let it = IterateConfig::default();
        Self {
            seed: 0,
            strategy: Strategy::SimpleToComplex,
            simple: None,
            source: None,
            target: None,
            validation: 0,
            high_radius: FeatureSpec::default().high_radius(),
            learning_rate: train.learning_rate,
            momentum: train.momentum,
            weight_decay: train.weight_decay,
            batch_size: train.batch_size,
            lr_step: train.lr_step,
            epochs: train.epochs,
            gf_radius: gf.radius(),
            gf_epsilon: gf.epsilon(),
            select_lo: policy.lo(),
            select_hi: policy.hi(),
            tau: policy.tau(),
            tau_cam: DEFAULT_TAU_CAM,
            rounds: it.max_rounds,
            patience: it.patience,
            reinit: it.reinit,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("bad value {value:?} for {key}"))
}

impl Settings {
    /// Set `key` from its textual value; relative paths are joined onto `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> std::result::Result<(), String> {
        let path = || Some(base.join(value));
        match key {
            "seed" => self.seed = parse(key, value)?,
            "strategy" => self.strategy = value.parse()?,
            "simple" => self.simple = path(),
            "source" => self.source = path(),
            "target" => self.target = path(),
            "validation" => self.validation = parse(key, value)?,
            "high_radius" => self.high_radius = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr_step" => self.lr_step = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "gf_radius" => self.gf_radius = parse(key, value)?,
            "gf_epsilon" => self.gf_epsilon = parse(key, value)?,
            "select_lo" => self.select_lo = parse(key, value)?,
            "select_hi" => self.select_hi = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "tau_cam" => self.tau_cam = parse(key, value)?,
            "rounds" => self.rounds = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "reinit" => self.reinit = parse(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Apply the contents of a config file.
    pub fn apply_file_text(&mut self, text: &str, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new(""));
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, i + 1, "expected `key = value`"))?;
            self.set(key.trim(), value.trim(), base)
                .map_err(|m| Error::parse(path, i + 1, m))?;
        }
        Ok(())
    }

    /// Defaults, then the config file, then `env_seed`, then `overrides` in order.
    pub fn resolve(config: Option<&Path>, env_seed: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut s = Settings::default();
        if let Some(path) = config {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            s.apply_file_text(&text, path)?;
        }
        if let Some(seed) = env_seed {
            s.seed = seed
                .trim()
                .parse()
                .map_err(|_| Error::Usage(format!("{SEED_ENV} is not an unsigned integer: {seed:?}")))?;
        }
        for (key, value) in overrides {
            s.set(key, value, Path::new("")).map_err(Error::Usage)?;
        }
        Ok(s)
    }

    pub fn features(&self) -> Result<FeatureSpec> {
        Ok(FeatureSpec::new(self.high_radius)?)
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            lr_step: self.lr_step,
            epochs: self.epochs,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn gf(&self) -> Result<GuidedFilterParams> {
        Ok(GuidedFilterParams::new(self.gf_radius, self.gf_epsilon)?)
    }

    pub fn segmenter(&self) -> Result<SegmenterConfig> {
        Ok(SegmenterConfig {
            features: self.features()?,
            train: self.train()?,
            gf: self.gf()?,
        })
    }

    pub fn policy(&self) -> Result<SelectionPolicy> {
        Ok(SelectionPolicy::new(self.select_lo, self.select_hi, self.tau)?)
    }

    pub fn iterate(&self) -> IterateConfig {
        IterateConfig {
            max_rounds: self.rounds,
            patience: self.patience,
            reinit: self.reinit,
        }
    }
}

/// Parse `key=value`.
pub fn parse_override(s: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got {s:?}"))?;
    let k = k.trim();
    if !KEYS.contains(&k) {
        return Err(format!("unknown key {k:?}"));
    }
    Ok((k.to_string(), v.trim().to_string()))
}
