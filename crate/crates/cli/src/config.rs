//! Run configuration: built-in defaults, then a `key = value` file, then
//! `PMGC_*` environment variables, then command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use pmgc_core::data::{MissingValues, NormalizationKind};
use pmgc_core::kv;
use pmgc_core::scoring::StatsSource;
use pmgc_core::trainer::TrainConfig;

pub const ENV_PREFIX: &str = "PMGC_";

/// Every accepted key, its default, and what it controls.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("epochs", "10", "training epochs"),
    ("learning_rate", "0.001", "Adam step size"),
    ("batch_size", "32", "windows per mini-batch"),
    ("lambda", "1e-5", "cohesion loss weight"),
    ("k", "5", "number of dynamic graphs"),
    ("d", "64", "hidden width"),
    ("window", "40", "window length w"),
    ("pred_window", "5", "prediction window p"),
    ("tau", "1", "similarity temperature"),
    ("beta", "0.05", "self-state share in each propagation layer"),
    ("seed", "0", "initialization seed"),
    ("shuffle_seed", "none", "batch-order seed (derived from seed when none)"),
    ("mode", "full", "full | no-dynamic | no-static | no-prospective | static-dynamic-avg | simple-cohesion"),
    ("propagation", "adjacency", "adjacency | laplacian"),
    ("validation_fraction", "0.2", "trailing share of windows used for validation"),
    ("validation_loss", "total", "total | prediction"),
    ("train_csv", "train.csv", "training series"),
    ("test_csv", "test.csv", "test series (with label column for eval)"),
    ("checkpoint", "model.ckpt", "checkpoint path"),
    ("scores", "scores.tsv", "score table path"),
    ("normalization", "minmax", "minmax | zscore"),
    ("missing", "reject", "reject | ffill"),
    ("stats_source", "test", "test | reference (validation tail of train_csv)"),
    ("threshold", "none", "decision threshold written into the score file"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub train_csv: PathBuf,
    pub test_csv: PathBuf,
    pub checkpoint: PathBuf,
    pub scores: PathBuf,
    pub normalization: NormalizationKind,
    pub missing: MissingValues,
    pub stats_source: StatsSource,
    pub threshold: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = RunConfig {
            train: TrainConfig::default(),
            train_csv: PathBuf::new(),
            test_csv: PathBuf::new(),
            checkpoint: PathBuf::new(),
            scores: PathBuf::new(),
            normalization: NormalizationKind::default(),
            missing: MissingValues::default(),
            stats_source: StatsSource::default(),
            threshold: None,
        };
        for (key, value, _) in KEYS {
            cfg.set(key, value).expect("built-in defaults parse");
        }
        cfg
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("`{key}`: cannot parse `{value}`: {e}"))
}

fn optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match value {
        "none" => Ok(None),
        v => num(key, v).map(Some),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "epochs" => t.epochs = num(key, value)?,
            "learning_rate" => t.learning_rate = num(key, value)?,
            "batch_size" => t.batch_size = num(key, value)?,
            "lambda" => t.lambda = num(key, value)?,
            "k" => t.k = num(key, value)?,
            "d" => t.d = num(key, value)?,
            "window" => t.w = num(key, value)?,
            "pred_window" => t.p = num(key, value)?,
            "tau" => t.tau = num(key, value)?,
            "beta" => t.beta = num(key, value)?,
            "seed" => t.seed = num(key, value)?,
            "shuffle_seed" => t.shuffle_seed = optional(key, value)?,
            "mode" => t.mode = value.parse()?,
            "propagation" => t.propagation = value.parse()?,
            "validation_fraction" => t.validation_fraction = num(key, value)?,
            "validation_loss" => t.validation_loss = value.parse()?,
            "train_csv" => self.train_csv = PathBuf::from(value),
            "test_csv" => self.test_csv = PathBuf::from(value),
            "checkpoint" => self.checkpoint = PathBuf::from(value),
            "scores" => self.scores = PathBuf::from(value),
            "normalization" => self.normalization = value.parse()?,
            "missing" => {
                self.missing = match value {
                    "reject" => MissingValues::Reject,
                    "ffill" => MissingValues::ForwardFill,
                    other => bail!("`missing`: expected reject or ffill, got `{other}`"),
                }
            }
            "stats_source" => {
                self.stats_source = match value {
                    "test" => StatsSource::Test,
                    "reference" => StatsSource::Reference,
                    other => bail!("`stats_source`: expected test or reference, got `{other}`"),
                }
            }
            "threshold" => self.threshold = optional(key, value)?,
            other => bail!("unknown configuration key `{other}`"),
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        for entry in kv::parse(&text).with_context(|| format!("parsing {}", path.display()))? {
            self.set(&entry.key, &entry.value)
                .with_context(|| format!("{}:{}", path.display(), entry.line))?;
        }
        Ok(())
    }

    /// Applies `PMGC_<KEY>` variables; an unrecognized `PMGC_` name is an error.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut vars: Vec<_> = vars
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        vars.sort();
        for (name, value) in vars {
            let key = name[ENV_PREFIX.len()..].to_ascii_lowercase();
            self.set(&key, &value)
                .with_context(|| format!("environment variable {name}"))?;
        }
        Ok(())
    }

    /// Defaults, then `file`, then `env`, then `overrides`.
    pub fn resolve<I>(file: Option<&Path>, env: I, overrides: &[(&str, String)]) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            cfg.apply_file(path)?;
        }
        cfg.apply_env(env)?;
        for (k, v) in overrides {
            cfg.set(k, v).with_context(|| format!("flag for `{k}`"))?;
        }
        Ok(cfg)
    }
}
