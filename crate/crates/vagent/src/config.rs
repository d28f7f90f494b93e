//! Run configuration: `key = value` lines, `#` comments, blank lines.
//!
//! Absent keys take their defaults. Values given with `--set key=value` on
//! the command line are applied after the file, and dedicated flags after
//! that.

use std::fmt;
use std::path::PathBuf;

use vagent_core::agents::NetConfig;
use vagent_core::data::Dataset;
use vagent_core::env::{default_rates, EnvConfig, DEFAULT_SIGMA2};
use vagent_core::training::TrainConfig;

/// Where a setting came from, for error messages.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Override(String),
    Default,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Override(s) => write!(f, "override `{s}`"),
            Origin::Default => write!(f, "defaults"),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("{origin}: {message}")]
pub struct ConfigError {
    pub origin: Origin,
    pub message: String,
}

fn err(origin: &Origin, message: impl Into<String>) -> ConfigError {
    ConfigError {
        origin: origin.clone(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    Zero,
    /// The mean of the training set.
    Mean,
    Values(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    /// Four modes on the corners of a centred square.
    Gmm { side: f64, std: f64, per_mode: usize },
    Glyphs { per_class: usize, noise: f64 },
    Csv(PathBuf),
    PgmDir(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub horizon: usize,
    pub selections: usize,
    /// Checked against the dataset when given; inferred from it otherwise.
    pub dim: Option<usize>,
    /// `1/h` when absent.
    pub alphas: Option<Vec<f64>>,
    pub sigma2: f64,
    pub x1: InitialState,
    pub hidden: Vec<usize>,
    /// `d` when absent.
    pub embed_dim: Option<usize>,
    pub train: TrainConfig,
    pub dataset: DatasetSpec,
    pub data_seed: u64,
    /// Every k-th point is held out for evaluation; 0 keeps all for training.
    pub holdout_every: usize,
    pub output: PathBuf,
    origins: Vec<(&'static str, Origin)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            horizon: 16,
            selections: 16,
            dim: None,
            alphas: None,
            sigma2: DEFAULT_SIGMA2,
            x1: InitialState::Zero,
            hidden: vec![256, 256],
            embed_dim: None,
            train: TrainConfig::default(),
            dataset: DatasetSpec::Gmm {
                side: 4.0,
                std: 0.1,
                per_mode: 128,
            },
            data_seed: 0,
            holdout_every: 0,
            output: PathBuf::from("run"),
            origins: Vec::new(),
        }
    }
}

/// Keys accepted in a config file, in documentation order.
pub const KEYS: &[&str] = &[
    "H",
    "A",
    "d",
    "alphas",
    "sigma2",
    "x1",
    "hidden",
    "embed_dim",
    "kappa",
    "rho",
    "lr",
    "batch",
    "batch_proposal",
    "batch_selection",
    "batch_q",
    "period_proposal",
    "period_selection",
    "period_q",
    "period_target",
    "warmup",
    "trajectories",
    "double_dqn",
    "seed",
    "capacity_transitions",
    "capacity_selections",
    "capacity_sequences",
    "dataset",
    "gmm_side",
    "gmm_std",
    "gmm_per_mode",
    "glyph_per_class",
    "glyph_noise",
    "data_path",
    "data_seed",
    "holdout_every",
    "output",
];

fn parse_num<T: std::str::FromStr>(origin: &Origin, key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| err(origin, format!("{key}: cannot parse `{value}`")))
}

fn parse_list<T: std::str::FromStr>(origin: &Origin, key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_num(origin, key, v.trim())).collect()
}

fn positive(origin: &Origin, key: &str, v: usize) -> Result<usize, ConfigError> {
    if v == 0 {
        return Err(err(origin, format!("{key} must be at least 1")));
    }
    Ok(v)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let origin = Origin::Line(i + 1);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(&origin, format!("expected `key = value`, got `{line}`")))?;
            cfg.set(key.trim(), value.trim(), origin)?;
        }
        cfg.check()?;
        Ok(cfg)
    }

    /// Apply `key=value` overrides and re-check the invariants.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), ConfigError> {
        for o in overrides {
            let o = o.as_ref();
            let origin = Origin::Override(o.to_string());
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| err(&origin, "expected key=value"))?;
            self.set(key.trim(), value.trim(), origin)?;
        }
        self.check()
    }

    fn origin(&self, key: &str) -> Origin {
        self.origins
            .iter()
            .rev()
            .find(|(k, _)| *k == key)
            .map(|(_, o)| o.clone())
            .unwrap_or(Origin::Default)
    }

    fn set(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), ConfigError> {
        let o = &origin;
        let t = &mut self.train;
        match key {
            "H" => self.horizon = positive(o, "H", parse_num(o, key, value)?)?,
            "A" => self.selections = positive(o, "A", parse_num(o, key, value)?)?,
            "d" => self.dim = Some(positive(o, "d", parse_num(o, key, value)?)?),
            "alphas" => self.alphas = Some(parse_list(o, key, value)?),
            "sigma2" => self.sigma2 = parse_num(o, key, value)?,
            "x1" => {
                self.x1 = match value {
                    "zero" => InitialState::Zero,
                    "mean" => InitialState::Mean,
                    _ => InitialState::Values(parse_list(o, key, value)?),
                }
            }
            "hidden" => self.hidden = parse_list(o, key, value)?,
            "embed_dim" => self.embed_dim = Some(positive(o, key, parse_num(o, key, value)?)?),
            "kappa" => {
                t.kappa = parse_num(o, key, value)?;
                if !(t.kappa >= 0.0 && t.kappa.is_finite()) {
                    return Err(err(o, "kappa must be nonnegative"));
                }
            }
            "rho" => {
                t.rho = parse_num(o, key, value)?;
                if !(t.rho > 0.0 && t.rho < 1.0) {
                    return Err(err(o, "rho must lie in (0, 1)"));
                }
            }
            "lr" => {
                t.lr = parse_num(o, key, value)?;
                if !(t.lr > 0.0 && t.lr.is_finite()) {
                    return Err(err(o, "lr must be positive"));
                }
            }
            "batch" => {
                let b = positive(o, key, parse_num(o, key, value)?)?;
                (t.batch_proposal, t.batch_selection, t.batch_q) = (b, b, b);
            }
            "batch_proposal" => t.batch_proposal = positive(o, key, parse_num(o, key, value)?)?,
            "batch_selection" => t.batch_selection = positive(o, key, parse_num(o, key, value)?)?,
            "batch_q" => t.batch_q = positive(o, key, parse_num(o, key, value)?)?,
            "period_proposal" => t.period_proposal = positive(o, key, parse_num(o, key, value)?)?,
            "period_selection" => t.period_selection = positive(o, key, parse_num(o, key, value)?)?,
            "period_q" => t.period_q = positive(o, key, parse_num(o, key, value)?)?,
            "period_target" => t.period_target = positive(o, key, parse_num(o, key, value)?)?,
            "warmup" => t.warmup = positive(o, key, parse_num(o, key, value)?)?,
            "trajectories" => t.trajectories = parse_num(o, key, value)?,
            "double_dqn" => t.double_dqn = parse_num(o, key, value)?,
            "seed" => t.seed = parse_num(o, key, value)?,
            "capacity_transitions" => t.capacities.transitions = positive(o, key, parse_num(o, key, value)?)?,
            "capacity_selections" => t.capacities.selections = positive(o, key, parse_num(o, key, value)?)?,
            "capacity_sequences" => t.capacities.sequences = positive(o, key, parse_num(o, key, value)?)?,
            "dataset" => {
                self.dataset = match value {
                    "gmm" => DatasetSpec::Gmm {
                        side: 4.0,
                        std: 0.1,
                        per_mode: 128,
                    },
                    "glyphs" => DatasetSpec::Glyphs {
                        per_class: 50,
                        noise: 0.05,
                    },
                    "csv" => DatasetSpec::Csv(PathBuf::new()),
                    "pgm" => DatasetSpec::PgmDir(PathBuf::new()),
                    _ => return Err(err(o, format!("dataset must be gmm, glyphs, csv or pgm, got `{value}`"))),
                }
            }
            "gmm_side" | "gmm_std" | "gmm_per_mode" => match &mut self.dataset {
                DatasetSpec::Gmm { side, std, per_mode } => match key {
                    "gmm_side" => *side = parse_num(o, key, value)?,
                    "gmm_std" => *std = parse_num(o, key, value)?,
                    _ => *per_mode = positive(o, key, parse_num(o, key, value)?)?,
                },
                _ => return Err(err(o, format!("{key} needs `dataset = gmm` first"))),
            },
            "glyph_per_class" | "glyph_noise" => match &mut self.dataset {
                DatasetSpec::Glyphs { per_class, noise } => match key {
                    "glyph_per_class" => *per_class = positive(o, key, parse_num(o, key, value)?)?,
                    _ => *noise = parse_num(o, key, value)?,
                },
                _ => return Err(err(o, format!("{key} needs `dataset = glyphs` first"))),
            },
            "data_path" => match &mut self.dataset {
                DatasetSpec::Csv(p) | DatasetSpec::PgmDir(p) => *p = PathBuf::from(value),
                _ => return Err(err(o, "data_path needs `dataset = csv` or `dataset = pgm` first")),
            },
            "data_seed" => self.data_seed = parse_num(o, key, value)?,
            "holdout_every" => self.holdout_every = parse_num(o, key, value)?,
            "output" => self.output = PathBuf::from(value),
            _ => return Err(err(o, format!("unknown key `{key}`"))),
        }
        let known = KEYS.iter().find(|k| **k == key).unwrap();
        self.origins.push((known, origin));
        Ok(())
    }

    /// Invariants that involve more than one key or need a range check.
    fn check(&self) -> Result<(), ConfigError> {
        if let Some(a) = &self.alphas {
            if a.len() != self.horizon {
                return Err(err(
                    &self.origin("alphas"),
                    format!("alphas has {} entries but H = {}", a.len(), self.horizon),
                ));
            }
            if a.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(err(&self.origin("alphas"), "alphas must be positive"));
            }
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(err(&self.origin("sigma2"), "sigma2 must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(err(&self.origin("hidden"), "hidden widths must be positive"));
        }
        if let (InitialState::Values(v), Some(d)) = (&self.x1, self.dim) {
            if v.len() != d {
                return Err(err(&self.origin("x1"), format!("x1 has {} entries but d = {d}", v.len())));
            }
        }
        match &self.dataset {
            DatasetSpec::Gmm { side, std, .. } if !(*std >= 0.0 && side.is_finite()) => {
                return Err(err(&self.origin("gmm_std"), "gmm_std must be nonnegative"));
            }
            DatasetSpec::Glyphs { noise, .. } if !(0.0..0.5).contains(noise) => {
                return Err(err(&self.origin("glyph_noise"), "glyph_noise must lie in [0, 0.5)"));
            }
            DatasetSpec::Csv(p) | DatasetSpec::PgmDir(p) if p.as_os_str().is_empty() => {
                return Err(err(&self.origin("dataset"), "data_path is required for csv and pgm datasets"));
            }
            _ => {}
        }
        if let Err(e) = self.train.validate() {
            return Err(err(&Origin::Default, e.to_string()));
        }
        if self.holdout_every == 1 {
            return Err(err(&self.origin("holdout_every"), "holdout_every = 1 leaves no training data"));
        }
        Ok(())
    }

    pub fn net_config(&self, dim: usize) -> NetConfig {
        NetConfig {
            hidden: self.hidden.clone(),
            embed_dim: self.embed_dim.unwrap_or(dim),
        }
    }

    /// Environment for a training set of dimension `dataset.dim()`.
    pub fn env_for(&self, dataset: &Dataset) -> Result<EnvConfig, ConfigError> {
        let d = dataset.dim();
        if let Some(want) = self.dim {
            if want != d {
                return Err(err(&self.origin("d"), format!("d = {want} but the dataset has dimension {d}")));
            }
        }
        let mut env = EnvConfig::new(self.horizon, self.selections, d).map_err(|e| err(&self.origin("H"), e.to_string()))?;
        env.alphas = match &self.alphas {
            Some(a) => a.clone(),
            None => default_rates(self.horizon).map_err(|e| err(&self.origin("H"), e.to_string()))?,
        };
        env.sigma2 = self.sigma2;
        env.x1 = match &self.x1 {
            InitialState::Zero => vec![0.0; d],
            InitialState::Mean => dataset.mean(),
            InitialState::Values(v) if v.len() == d => v.clone(),
            InitialState::Values(v) => {
                return Err(err(&self.origin("x1"), format!("x1 has {} entries but d = {d}", v.len())));
            }
        };
        env.validate().map_err(|e| err(&self.origin("H"), e.to_string()))?;
        Ok(env)
    }
}
