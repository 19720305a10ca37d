//! Line-oriented text checkpoints.
//!
//! ```text
//! pmgc-checkpoint 1
//! config <key> <value>          one per TrainConfig field
//! norm <minmax|zscore>
//! norm_channel <a> <b>          per channel: (min, max) or (mean, std)
//! channel <name>                per channel, name is the rest of the line
//! epoch <train total> <train pred> <train coh> <val total> <val pred> <val coh>
//! best_epoch <i>
//! param <name> <rows> <cols>    followed by <rows> lines of <cols> values
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so loading
//! a checkpoint reproduces every parameter bit for bit and saving it again
//! yields identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{NormalizationKind, NormalizationStats};
use crate::error::{io_err, Error, Result};
use crate::matrix::Matrix;
use crate::model::{LossBreakdown, ModelParams};
use crate::params::ParamStore;
use crate::trainer::{EpochRecord, TrainConfig, TrainHistory};

const MAGIC: &str = "pmgc-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub normalization: NormalizationStats,
    pub channel_names: Vec<String>,
    pub history: TrainHistory,
    pub params: ModelParams,
}

fn config_pairs(c: &TrainConfig) -> Vec<(&'static str, String)> {
    vec![
        ("epochs", c.epochs.to_string()),
        ("learning_rate", format!("{:?}", c.learning_rate)),
        ("batch_size", c.batch_size.to_string()),
        ("lambda", format!("{:?}", c.lambda)),
        ("k", c.k.to_string()),
        ("d", c.d.to_string()),
        ("w", c.w.to_string()),
        ("p", c.p.to_string()),
        ("tau", format!("{:?}", c.tau)),
        ("beta", format!("{:?}", c.beta)),
        ("seed", c.seed.to_string()),
        ("shuffle_seed", c.shuffle_seed.map_or("none".into(), |s| s.to_string())),
        ("mode", c.mode.to_string()),
        ("propagation", c.propagation.to_string()),
        ("validation_fraction", format!("{:?}", c.validation_fraction)),
        ("validation_loss", c.validation_loss.to_string()),
    ]
}

fn set_config(c: &mut TrainConfig, key: &str, value: &str) -> Result<()> {
    fn p<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
        v.parse().map_err(|_| Error::Parse(format!("config `{key}`: bad value `{v}`")))
    }
    match key {
        "epochs" => c.epochs = p(key, value)?,
        "learning_rate" => c.learning_rate = p(key, value)?,
        "batch_size" => c.batch_size = p(key, value)?,
        "lambda" => c.lambda = p(key, value)?,
        "k" => c.k = p(key, value)?,
        "d" => c.d = p(key, value)?,
        "w" => c.w = p(key, value)?,
        "p" => c.p = p(key, value)?,
        "tau" => c.tau = p(key, value)?,
        "beta" => c.beta = p(key, value)?,
        "seed" => c.seed = p(key, value)?,
        "shuffle_seed" => {
            c.shuffle_seed = match value {
                "none" => None,
                v => Some(p(key, v)?),
            }
        }
        "mode" => c.mode = value.parse()?,
        "propagation" => c.propagation = value.parse()?,
        "validation_fraction" => c.validation_fraction = p(key, value)?,
        "validation_loss" => c.validation_loss = value.parse()?,
        other => return Err(Error::Parse(format!("unknown config key `{other}`"))),
    }
    Ok(())
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        for (k, v) in config_pairs(&self.config) {
            let _ = writeln!(out, "config {k} {v}");
        }
        let _ = writeln!(out, "norm {}", self.normalization.kind());
        let (a, b) = match &self.normalization {
            NormalizationStats::MinMax { min, max } => (min, max),
            NormalizationStats::ZScore { mean, std } => (mean, std),
        };
        for (x, y) in a.iter().zip(b) {
            let _ = writeln!(out, "norm_channel {x:?} {y:?}");
        }
        for name in &self.channel_names {
            let _ = writeln!(out, "channel {name}");
        }
        for e in &self.history.epochs {
            let _ = writeln!(
                out,
                "epoch {:?} {:?} {:?} {:?} {:?} {:?}",
                e.train.total, e.train.prediction, e.train.cohesion, e.validation.total, e.validation.prediction, e.validation.cohesion
            );
        }
        let _ = writeln!(out, "best_epoch {}", self.history.best_epoch);
        for (name, m) in self.params.store.iter() {
            let _ = writeln!(out, "param {name} {} {}", m.rows(), m.cols());
            for r in 0..m.rows() {
                let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, MAGIC)) => {}
            _ => return Err(Error::Parse(format!("not a checkpoint (expected `{MAGIC}` header)"))),
        }
        let mut config = TrainConfig::default();
        let mut norm_kind = None;
        let mut norm_a = Vec::new();
        let mut norm_b = Vec::new();
        let mut channel_names = Vec::new();
        let mut history = TrainHistory::default();
        let mut store = ParamStore::new();
        let num = |line: usize, s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse(format!("line {line}: bad number `{s}`")))
        };
        while let Some((line, text)) = lines.next() {
            let (tag, rest) = text.split_once(' ').unwrap_or((text, ""));
            match tag {
                "config" => {
                    let (k, v) = rest
                        .split_once(' ')
                        .ok_or_else(|| Error::Parse(format!("line {line}: config needs key and value")))?;
                    set_config(&mut config, k, v)?;
                }
                "norm" => norm_kind = Some(rest.parse::<NormalizationKind>()?),
                "norm_channel" => {
                    let v: Vec<&str> = rest.split(' ').collect();
                    if v.len() != 2 {
                        return Err(Error::Parse(format!("line {line}: norm_channel needs 2 values")));
                    }
                    norm_a.push(num(line, v[0])?);
                    norm_b.push(num(line, v[1])?);
                }
                "channel" => channel_names.push(rest.to_string()),
                "epoch" => {
                    let v = rest.split(' ').map(|s| num(line, s)).collect::<Result<Vec<_>>>()?;
                    if v.len() != 6 {
                        return Err(Error::Parse(format!("line {line}: epoch needs 6 values")));
                    }
                    history.epochs.push(EpochRecord {
                        train: LossBreakdown { total: v[0], prediction: v[1], cohesion: v[2] },
                        validation: LossBreakdown { total: v[3], prediction: v[4], cohesion: v[5] },
                    });
                }
                "best_epoch" => {
                    history.best_epoch = rest
                        .parse()
                        .map_err(|_| Error::Parse(format!("line {line}: bad best_epoch")))?
                }
                "param" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    let dims = (f.len() == 3)
                        .then(|| Some((f[1].parse::<usize>().ok()?, f[2].parse::<usize>().ok()?)))
                        .flatten()
                        .ok_or_else(|| Error::Parse(format!("line {line}: expected `param <name> <rows> <cols>`")))?;
                    let mut data = Vec::with_capacity(dims.0 * dims.1);
                    for _ in 0..dims.0 {
                        let (l, row) = lines
                            .next()
                            .ok_or_else(|| Error::Parse(format!("parameter `{}` truncated", f[0])))?;
                        let before = data.len();
                        for s in row.split(' ') {
                            data.push(num(l, s)?);
                        }
                        if data.len() - before != dims.1 {
                            return Err(Error::Parse(format!("line {l}: expected {} values", dims.1)));
                        }
                    }
                    store.insert(f[0], Matrix::from_vec(dims.0, dims.1, data)?)?;
                }
                "" => {}
                other => return Err(Error::Parse(format!("line {line}: unknown record `{other}`"))),
            }
        }
        history.validation_loss = config.validation_loss;
        if !history.epochs.is_empty() && history.best_epoch >= history.epochs.len() {
            return Err(Error::Parse("best_epoch out of range".into()));
        }
        let normalization = match norm_kind.ok_or_else(|| Error::Parse("missing `norm` record".into()))? {
            NormalizationKind::MinMax => NormalizationStats::MinMax { min: norm_a, max: norm_b },
            NormalizationKind::ZScore => NormalizationStats::ZScore { mean: norm_a, std: norm_b },
        };
        let channels = channel_names.len();
        if normalization.channels() != channels {
            return Err(Error::Parse(format!(
                "{} channel names but {} normalization entries",
                channels,
                normalization.channels()
            )));
        }
        config.validate()?;
        let params = ModelParams::from_store(config.dims(channels), config.beta, config.propagation, store)?;
        Ok(Self {
            config,
            normalization,
            channel_names,
            history,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| io_err(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_text(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}
