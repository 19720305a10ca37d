//! Series ingestion, per-channel normalization, windowing, and a seeded
//! synthetic generator with labelled anomaly injection.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{io_err, Error, Result};
use crate::init::rng_from_seed;
use crate::kv;
use crate::matrix::Matrix;
use crate::model::WindowSample;

pub const LABEL_COLUMN: &str = "label";

/// `N×T` values (one row per channel) with optional per-tick labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub values: Matrix,
    pub channel_names: Vec<String>,
    pub labels: Option<Vec<u8>>,
}

impl RawSeries {
    pub fn channels(&self) -> usize {
        self.values.rows()
    }

    pub fn len(&self) -> usize {
        self.values.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.cols() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingValues {
    #[default]
    Reject,
    /// Repeat the previous tick's value; a missing first tick is still an error.
    ForwardFill,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "nan" | "NaN" | "NA" | "null")
}

/// Reads a comma-separated file whose header names the channels. With
/// `has_labels`, a column named `label` must exist and is split off as the
/// binary label vector.
pub fn load_csv(path: &Path, has_labels: bool, missing: MissingValues) -> Result<RawSeries> {
    let csv_err = |source| Error::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Parse(format!("{}: empty file or missing header", path.display())));
    }
    let label_col = if has_labels {
        Some(header.iter().position(|h| h == LABEL_COLUMN).ok_or_else(|| {
            Error::Parse(format!("{}: no `{LABEL_COLUMN}` column", path.display()))
        })?)
    } else {
        None
    };
    let channel_cols: Vec<usize> = (0..header.len()).filter(|&c| Some(c) != label_col).collect();
    if channel_cols.is_empty() {
        return Err(Error::Parse(format!("{}: no channel columns", path.display())));
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); channel_cols.len()];
    let mut labels = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        // Header is line 1.
        let line = idx + 2;
        if record.len() != header.len() {
            return Err(Error::Parse(format!(
                "{}: line {line} has {} fields, header has {}",
                path.display(),
                record.len(),
                header.len()
            )));
        }
        for (slot, &c) in channel_cols.iter().enumerate() {
            let cell = &record[c];
            let value = if is_missing(cell) {
                match (missing, columns[slot].last()) {
                    (MissingValues::ForwardFill, Some(&prev)) => prev,
                    _ => {
                        return Err(Error::Parse(format!(
                            "{}: missing value at line {line}, column `{}`",
                            path.display(),
                            header[c]
                        )))
                    }
                }
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Parse(format!(
                        "{}: non-numeric value `{cell}` at line {line}, column `{}`",
                        path.display(),
                        header[c]
                    ))
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse(format!(
                        "{}: non-finite value at line {line}, column `{}`",
                        path.display(),
                        header[c]
                    )));
                }
                v
            };
            columns[slot].push(value);
        }
        if let Some(c) = label_col {
            let label = match record[c].parse::<f64>() {
                Ok(0.0) => 0,
                Ok(1.0) => 1,
                _ => {
                    return Err(Error::Parse(format!(
                        "{}: label `{}` at line {line} is not 0 or 1",
                        path.display(),
                        &record[c]
                    )))
                }
            };
            labels.push(label);
        }
    }
    let t = columns[0].len();
    if t == 0 {
        return Err(Error::Parse(format!("{}: no data rows", path.display())));
    }
    let data: Vec<f64> = columns.into_iter().flatten().collect();
    Ok(RawSeries {
        values: Matrix::from_vec(channel_cols.len(), t, data)?,
        channel_names: channel_cols.iter().map(|&c| header[c].clone()).collect(),
        labels: label_col.map(|_| labels),
    })
}

/// Writes one row per tick; the label column goes last when present.
pub fn write_csv(path: &Path, series: &RawSeries) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<&str> = series.channel_names.iter().map(String::as_str).collect();
    if series.labels.is_some() {
        header.push(LABEL_COLUMN);
    }
    writer.write_record(&header).map_err(csv_err)?;
    let mut row = Vec::with_capacity(header.len());
    for t in 0..series.len() {
        row.clear();
        for c in 0..series.channels() {
            row.push(series.values.get(c, t).to_string());
        }
        if let Some(labels) = &series.labels {
            row.push(labels[t].to_string());
        }
        writer.write_record(&row).map_err(csv_err)?;
    }
    writer.flush().map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizationKind {
    #[default]
    MinMax,
    ZScore,
}

impl fmt::Display for NormalizationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormalizationKind::MinMax => "minmax",
            NormalizationKind::ZScore => "zscore",
        })
    }
}

impl FromStr for NormalizationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(Self::MinMax),
            "zscore" => Ok(Self::ZScore),
            other => Err(Error::Config(format!(
                "unknown normalization `{other}` (expected minmax or zscore)"
            ))),
        }
    }
}

/// Per-channel statistics taken from the training series.
///
/// For min-max, `x ↦ (x − min)/(max − min)`; for z-score, `x ↦ (x − mean)/std`.
/// A zero spread maps the channel to zero.
#[derive(Debug, Clone, PartialEq)]
pub enum NormalizationStats {
    MinMax { min: Vec<f64>, max: Vec<f64> },
    ZScore { mean: Vec<f64>, std: Vec<f64> },
}

impl NormalizationStats {
    pub fn fit(values: &Matrix, kind: NormalizationKind) -> Self {
        let rows = 0..values.rows();
        match kind {
            NormalizationKind::MinMax => NormalizationStats::MinMax {
                min: rows.clone().map(|r| values.row(r).iter().copied().fold(f64::INFINITY, f64::min)).collect(),
                max: rows.map(|r| values.row(r).iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect(),
            },
            NormalizationKind::ZScore => {
                let (mean, std) = rows
                    .map(|r| {
                        let row = values.row(r);
                        let n = row.len() as f64;
                        let mean = row.iter().sum::<f64>() / n;
                        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                        (mean, var.sqrt())
                    })
                    .unzip();
                NormalizationStats::ZScore { mean, std }
            }
        }
    }

    pub fn kind(&self) -> NormalizationKind {
        match self {
            NormalizationStats::MinMax { .. } => NormalizationKind::MinMax,
            NormalizationStats::ZScore { .. } => NormalizationKind::ZScore,
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            NormalizationStats::MinMax { min, .. } => min.len(),
            NormalizationStats::ZScore { mean, .. } => mean.len(),
        }
    }

    /// `(offset, spread)` per channel.
    pub fn affine(&self) -> Vec<(f64, f64)> {
        match self {
            NormalizationStats::MinMax { min, max } => {
                min.iter().zip(max).map(|(&lo, &hi)| (lo, hi - lo)).collect()
            }
            NormalizationStats::ZScore { mean, std } => {
                mean.iter().copied().zip(std.iter().copied()).collect()
            }
        }
    }

    pub fn apply(&self, values: &Matrix) -> Result<Matrix> {
        if values.rows() != self.channels() {
            return Err(Error::ShapeMismatch {
                op: "normalize",
                left: values.shape(),
                right: (self.channels(), values.cols()),
            });
        }
        let mut out = values.clone();
        for (r, (offset, spread)) in self.affine().into_iter().enumerate() {
            for v in out.row_mut(r) {
                *v = if spread > 0.0 { (*v - offset) / spread } else { 0.0 };
            }
        }
        Ok(out)
    }
}

pub fn normalize_channels(series: &RawSeries, stats: &NormalizationStats) -> Result<RawSeries> {
    Ok(RawSeries {
        values: stats.apply(&series.values)?,
        ..series.clone()
    })
}

/// All stride-1 windows of width `w`, the last `p` ticks of each being the
/// target.
pub fn make_windows(values: &Matrix, w: usize, p: usize) -> Result<Vec<WindowSample>> {
    let t = values.cols();
    if p == 0 || p >= w {
        return Err(Error::Config(format!("need 0 < p < w, got p={p}, w={w}")));
    }
    if t < w {
        return Err(Error::InsufficientData(format!(
            "series has {t} ticks, window needs {w}"
        )));
    }
    (0..=t - w)
        .map(|start| WindowSample::new(values.col_slice(start, w)?, p, start + w - 1))
        .collect()
}

/// Median of each block of `every` consecutive ticks; labels take the block
/// maximum.
pub fn median_downsample(series: &RawSeries, every: usize) -> Result<RawSeries> {
    if every == 0 {
        return Err(Error::Config("downsampling factor must be positive".into()));
    }
    let n = series.channels();
    let blocks = series.len().div_ceil(every);
    let mut out = Matrix::zeros(n, blocks);
    for c in 0..n {
        let row = series.values.row(c);
        for (b, chunk) in row.chunks(every).enumerate() {
            let mut sorted = chunk.to_vec();
            sorted.sort_by(f64::total_cmp);
            let m = sorted.len();
            let median = if m % 2 == 1 {
                sorted[m / 2]
            } else {
                0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
            };
            out.set(c, b, median);
        }
    }
    Ok(RawSeries {
        values: out,
        channel_names: series.channel_names.clone(),
        labels: series
            .labels
            .as_ref()
            .map(|l| l.chunks(every).map(|c| *c.iter().max().unwrap_or(&0)).collect()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalyKind {
    /// Adds `magnitude × channel std` over the duration (normally one tick).
    Spike,
    /// Adds a `magnitude × channel std` offset over the duration.
    LevelShift,
    /// Replaces the channel's latent mixture with an independent sinusoid of
    /// the same mean and spread; `magnitude` is not used.
    CorrelationBreak,
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnomalyKind::Spike => "spike",
            AnomalyKind::LevelShift => "level-shift",
            AnomalyKind::CorrelationBreak => "correlation-break",
        })
    }
}

impl FromStr for AnomalyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spike" => Ok(Self::Spike),
            "level-shift" => Ok(Self::LevelShift),
            "correlation-break" => Ok(Self::CorrelationBreak),
            other => Err(Error::Config(format!("unknown anomaly kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalySpec {
    pub kind: AnomalyKind,
    /// First affected tick, counted from the start of the test series.
    pub start: usize,
    pub duration: usize,
    pub magnitude: f64,
    pub channel: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub channels: usize,
    pub train_len: usize,
    pub test_len: usize,
    pub seed: u64,
    /// Number of shared sinusoidal latents.
    pub latents: usize,
    pub noise_std: f64,
    pub anomalies: Vec<AnomalySpec>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            channels: 8,
            train_len: 2000,
            test_len: 1000,
            seed: 0,
            latents: 4,
            noise_std: 0.05,
            anomalies: Vec::new(),
        }
    }
}

/// Placement request for [`SynthSpec::scatter_anomalies`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterSpec {
    pub kind: AnomalyKind,
    pub count: usize,
    pub duration: usize,
    pub magnitude: f64,
    /// No anomaly starts before this test tick.
    pub margin: usize,
    /// Minimum number of clean ticks between consecutive anomalies.
    pub gap: usize,
}

impl SynthSpec {
    /// Adds `count` non-overlapping anomalies at seeded positions and channels.
    pub fn scatter_anomalies(&mut self, scatter: ScatterSpec, seed: u64) -> Result<()> {
        let ScatterSpec {
            kind,
            count,
            duration,
            magnitude,
            margin,
            gap,
        } = scatter;
        if count == 0 {
            return Ok(());
        }
        let slot = duration + gap;
        let usable = self.test_len.saturating_sub(margin);
        // Choose `count` slots out of the available ones, then jitter within.
        let slots = usable / slot;
        if slots < count {
            return Err(Error::Config(format!(
                "cannot fit {count} anomalies of length {duration} with gap {gap} in {usable} ticks"
            )));
        }
        let mut rng = rng_from_seed(seed);
        let mut chosen: Vec<usize> = sample_indices(&mut rng, slots, count).into_vec();
        chosen.sort_unstable();
        for s in chosen {
            let jitter = rng.random_range(0..=gap);
            let start = margin + s * slot + jitter;
            let channel = rng.random_range(0..self.channels);
            self.anomalies.push(AnomalySpec {
                kind,
                start: start.min(self.test_len - duration),
                duration,
                magnitude,
                channel,
            });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.train_len == 0 || self.test_len == 0 {
            return Err(Error::Config("channels and lengths must be positive".into()));
        }
        if !(2..=16).contains(&self.latents) {
            return Err(Error::Config(format!("latents must be in 2..=16, got {}", self.latents)));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        for (i, a) in self.anomalies.iter().enumerate() {
            if a.duration == 0 || a.start + a.duration > self.test_len {
                return Err(Error::Config(format!(
                    "anomaly {i} ({}) spans ticks {}..{} outside the test range 0..{}",
                    a.kind,
                    a.start,
                    a.start + a.duration,
                    self.test_len
                )));
            }
            if !(a.magnitude > 0.0) {
                return Err(Error::Config(format!("anomaly {i} magnitude must be > 0")));
            }
            if a.channel >= self.channels {
                return Err(Error::Config(format!(
                    "anomaly {i} targets channel {} of {}",
                    a.channel, self.channels
                )));
            }
        }
        Ok(())
    }

    /// Parses the key-value spec format (see the README).
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = SynthSpec::default();
        let mut scatters = Vec::new();
        for entry in kv::parse(text)? {
            let v = entry.value.as_str();
            let k = entry.key.as_str();
            match k {
                "channels" => spec.channels = kv::parse_value(k, v)?,
                "train_length" => spec.train_len = kv::parse_value(k, v)?,
                "test_length" => spec.test_len = kv::parse_value(k, v)?,
                "seed" => spec.seed = kv::parse_value(k, v)?,
                "latents" => spec.latents = kv::parse_value(k, v)?,
                "noise_std" => spec.noise_std = kv::parse_value(k, v)?,
                "anomaly" => spec.anomalies.push(parse_anomaly(v, entry.line)?),
                "random_anomalies" => scatters.push(parse_scatter(v, entry.line)?),
                other => {
                    return Err(Error::Parse(format!(
                        "line {}: unknown key `{other}`",
                        entry.line
                    )))
                }
            }
        }
        for (i, scatter) in scatters.into_iter().enumerate() {
            let seed = spec.seed.wrapping_add(0x5eed).wrapping_add(i as u64);
            spec.scatter_anomalies(scatter, seed)?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn split_kind(value: &str, line: usize) -> Result<(AnomalyKind, Vec<(String, String)>)> {
    let (kind, rest) = value.split_once(char::is_whitespace).unwrap_or((value, ""));
    let kind = kind
        .parse()
        .map_err(|e: Error| Error::Parse(format!("line {line}: {e}")))?;
    Ok((kind, kv::parse_inline_pairs(rest)?))
}

fn parse_anomaly(value: &str, line: usize) -> Result<AnomalySpec> {
    let (kind, pairs) = split_kind(value, line)?;
    let mut a = AnomalySpec {
        kind,
        start: 0,
        duration: 1,
        magnitude: 6.0,
        channel: 0,
    };
    let mut have_start = false;
    for (k, v) in pairs {
        match k.as_str() {
            "start" => {
                a.start = kv::parse_value(&k, &v)?;
                have_start = true;
            }
            "duration" => a.duration = kv::parse_value(&k, &v)?,
            "magnitude" => a.magnitude = kv::parse_value(&k, &v)?,
            "channel" => a.channel = kv::parse_value(&k, &v)?,
            other => return Err(Error::Parse(format!("line {line}: unknown anomaly field `{other}`"))),
        }
    }
    if !have_start {
        return Err(Error::Parse(format!("line {line}: anomaly needs start=")));
    }
    Ok(a)
}

fn parse_scatter(value: &str, line: usize) -> Result<ScatterSpec> {
    let (kind, pairs) = split_kind(value, line)?;
    let mut s = ScatterSpec {
        kind,
        count: 1,
        duration: 1,
        magnitude: 6.0,
        margin: 0,
        gap: 0,
    };
    for (k, v) in pairs {
        match k.as_str() {
            "count" => s.count = kv::parse_value(&k, &v)?,
            "duration" => s.duration = kv::parse_value(&k, &v)?,
            "magnitude" => s.magnitude = kv::parse_value(&k, &v)?,
            "margin" => s.margin = kv::parse_value(&k, &v)?,
            "gap" => s.gap = kv::parse_value(&k, &v)?,
            other => {
                return Err(Error::Parse(format!(
                    "line {line}: unknown random_anomalies field `{other}`"
                )))
            }
        }
    }
    if s.duration == 0 {
        return Err(Error::Parse(format!("line {line}: duration must be positive")));
    }
    Ok(s)
}

struct Latent {
    period: f64,
    phase: f64,
}

impl Latent {
    fn at(&self, t: usize) -> f64 {
        (2.0 * PI * t as f64 / self.period + self.phase).sin()
    }
}

/// Generates `(train, test)`; the test series carries labels.
///
/// Channel `i` is `offset_i + Σ_j m_ij · sin(2πt/P_j + φ_j) + noise`, where
/// each channel mixes 2–3 of the shared latents. Time runs continuously from
/// the first training tick through the end of the test series.
pub fn synth_generate(spec: &SynthSpec) -> Result<(RawSeries, RawSeries)> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let latents: Vec<Latent> = (0..spec.latents)
        .map(|_| Latent {
            period: rng.random_range(15.0..120.0),
            phase: rng.random_range(0.0..2.0 * PI),
        })
        .collect();
    let mut mixing = vec![vec![0.0; spec.latents]; spec.channels];
    let mut offsets = vec![0.0; spec.channels];
    for (row, offset) in mixing.iter_mut().zip(offsets.iter_mut()) {
        let used = rng.random_range(2..=3.min(spec.latents));
        for j in sample_indices(&mut rng, spec.latents, used) {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            row[j] = sign * rng.random_range(0.5..1.5);
        }
        *offset = rng.random_range(-1.0..1.0);
    }
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;

    let total = spec.train_len + spec.test_len;
    let mut clean = Matrix::zeros(spec.channels, total);
    for t in 0..total {
        let lat: Vec<f64> = latents.iter().map(|l| l.at(t)).collect();
        for (c, row) in mixing.iter().enumerate() {
            clean.set(c, t, offsets[c] + row.iter().zip(&lat).map(|(m, l)| m * l).sum::<f64>());
        }
    }
    // Spread of the clean training signal per channel, used to scale anomalies.
    let train_clean = clean.col_slice(0, spec.train_len)?;
    let (means, stds): (Vec<f64>, Vec<f64>) = (0..spec.channels)
        .map(|c| {
            let row = train_clean.row(c);
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (mean, (var + spec.noise_std * spec.noise_std).sqrt())
        })
        .unzip();

    let mut values = clean;
    if spec.noise_std > 0.0 {
        for v in values.data_mut() {
            *v += noise.sample(&mut rng);
        }
    }

    let mut labels = vec![0u8; spec.test_len];
    for a in &spec.anomalies {
        let c = a.channel;
        let replacement = Latent {
            period: rng.random_range(15.0..120.0),
            phase: rng.random_range(0.0..2.0 * PI),
        };
        for offset in 0..a.duration {
            let local = a.start + offset;
            let t = spec.train_len + local;
            labels[local] = 1;
            let current = values.get(c, t);
            let updated = match a.kind {
                AnomalyKind::Spike | AnomalyKind::LevelShift => current + a.magnitude * stds[c],
                AnomalyKind::CorrelationBreak => {
                    // Keep the tick's noise, swap the structured part.
                    let noise = current - clean_value(&mixing[c], &latents, offsets[c], t);
                    means[c] + stds[c] * std::f64::consts::SQRT_2 * replacement.at(t) + noise
                }
            };
            values.set(c, t, updated);
        }
    }

    let names: Vec<String> = (0..spec.channels).map(|c| format!("ch{c}")).collect();
    let train = RawSeries {
        values: values.col_slice(0, spec.train_len)?,
        channel_names: names.clone(),
        labels: None,
    };
    let test = RawSeries {
        values: values.col_slice(spec.train_len, spec.test_len)?,
        channel_names: names,
        labels: Some(labels),
    };
    Ok((train, test))
}

fn clean_value(mixing: &[f64], latents: &[Latent], offset: f64, t: usize) -> f64 {
    offset + mixing.iter().zip(latents).map(|(m, l)| m * l.at(t)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_plain_csv() {
        let f = write_tmp("a,b,c\n1,2,3\n4,5,6\n7,8,9\n10,11,12\n13,14,15\n");
        let s = load_csv(f.path(), false, MissingValues::Reject).unwrap();
        assert_eq!((s.channels(), s.len()), (3, 5));
        assert_eq!(s.values.row(1), &[2.0, 5.0, 8.0, 11.0, 14.0]);
        assert_eq!(s.channel_names, vec!["a", "b", "c"]);
        assert!(s.labels.is_none());
    }

    #[test]
    fn load_labelled_csv() {
        let f = write_tmp("x,y,label\n1,2,0\n3,4,1\n5,6,0\n");
        let s = load_csv(f.path(), true, MissingValues::Reject).unwrap();
        assert_eq!(s.channels(), 2);
        assert_eq!(s.labels, Some(vec![0, 1, 0]));
        let bad = write_tmp("x,label\n1,2\n");
        assert!(load_csv(bad.path(), true, MissingValues::Reject).is_err());
        let missing = write_tmp("x,y\n1,2\n");
        assert!(load_csv(missing.path(), true, MissingValues::Reject).is_err());
    }

    #[test]
    fn load_errors_are_descriptive() {
        let f = write_tmp("a,b\n1,2\n3,abc\n");
        let msg = load_csv(f.path(), false, MissingValues::Reject).unwrap_err().to_string();
        assert!(msg.contains("line 3") && msg.contains("`b`") && msg.contains("abc"), "{msg}");
        let ragged = write_tmp("a,b\n1,2\n3\n");
        let msg = load_csv(ragged.path(), false, MissingValues::Reject).unwrap_err().to_string();
        assert!(msg.contains("line 3"), "{msg}");
        let empty = write_tmp("");
        assert!(load_csv(empty.path(), false, MissingValues::Reject).is_err());
        let header_only = write_tmp("a,b\n");
        assert!(load_csv(header_only.path(), false, MissingValues::Reject).is_err());
    }

    #[test]
    fn missing_values_policy() {
        let f = write_tmp("a,b\n1,2\n,5\n3,NaN\n");
        assert!(load_csv(f.path(), false, MissingValues::Reject).is_err());
        let s = load_csv(f.path(), false, MissingValues::ForwardFill).unwrap();
        assert_eq!(s.values.row(0), &[1.0, 1.0, 3.0]);
        assert_eq!(s.values.row(1), &[2.0, 5.0, 5.0]);
        let first = write_tmp("a,b\nNA,1\n");
        assert!(load_csv(first.path(), false, MissingValues::ForwardFill).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let series = RawSeries {
            values: Matrix::from_rows(&[[0.1, -2.5, 1e-9], [3.0, 4.25, 7.0]]),
            channel_names: vec!["p".into(), "q".into()],
            labels: Some(vec![0, 1, 0]),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_csv(&path, &series).unwrap();
        assert_eq!(load_csv(&path, true, MissingValues::Reject).unwrap(), series);
    }

    #[test]
    fn min_max_examples() {
        let train = Matrix::from_rows(&[[0.0, 5.0, 10.0], [4.0, 4.0, 4.0]]);
        let stats = NormalizationStats::fit(&train, NormalizationKind::MinMax);
        let out = stats.apply(&train).unwrap();
        assert_eq!(out.row(0), &[0.0, 0.5, 1.0]);
        assert_eq!(out.row(1), &[0.0, 0.0, 0.0]);
        let test = Matrix::from_rows(&[[20.0], [4.0]]);
        assert_eq!(stats.apply(&test).unwrap().get(0, 0), 2.0);
        assert!(stats.apply(&Matrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn normalization_is_idempotent_for_varying_channels() {
        let (train, _) = synth_generate(&SynthSpec {
            train_len: 300,
            test_len: 50,
            ..SynthSpec::default()
        })
        .unwrap();
        for kind in [NormalizationKind::MinMax, NormalizationKind::ZScore] {
            let once = NormalizationStats::fit(&train.values, kind).apply(&train.values).unwrap();
            let twice = NormalizationStats::fit(&once, kind).apply(&once).unwrap();
            assert!(once.max_abs_diff(&twice) < 1e-12);
        }
    }

    #[test]
    fn window_examples() {
        let values = Matrix::from_rows(&[[0.0, 1.0, 2.0, 3.0, 4.0]]);
        let windows = make_windows(&values, 3, 1).unwrap();
        assert_eq!(windows.len(), 3);
        assert_eq!(windows.iter().map(|w| w.end_tick).collect::<Vec<_>>(), vec![2, 3, 4]);
        assert_eq!(windows[1].target, Matrix::from_rows(&[[3.0]]));
        for pair in windows.windows(2) {
            let a = pair[0].full.col_slice(1, 2).unwrap();
            let b = pair[1].full.col_slice(0, 2).unwrap();
            assert_eq!(a, b);
        }
        let p2 = make_windows(&values, 4, 2).unwrap();
        assert_eq!(p2[1].target, Matrix::from_rows(&[[3.0, 4.0]]));
        assert!(make_windows(&values, 6, 1).is_err());
        assert!(make_windows(&values, 3, 3).is_err());
    }

    #[test]
    fn downsample_takes_block_medians() {
        let s = RawSeries {
            values: Matrix::from_rows(&[[1.0, 9.0, 2.0, 4.0, 8.0]]),
            channel_names: vec!["a".into()],
            labels: Some(vec![0, 0, 1, 0, 0]),
        };
        let d = median_downsample(&s, 2).unwrap();
        assert_eq!(d.values.row(0), &[5.0, 3.0, 8.0]);
        assert_eq!(d.labels, Some(vec![0, 1, 0]));
    }

    fn small_spec() -> SynthSpec {
        SynthSpec {
            channels: 4,
            train_len: 400,
            test_len: 300,
            seed: 11,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn synth_is_deterministic() {
        let mut spec = small_spec();
        spec.anomalies.push(AnomalySpec {
            kind: AnomalyKind::LevelShift,
            start: 10,
            duration: 5,
            magnitude: 2.0,
            channel: 1,
        });
        assert_eq!(synth_generate(&spec).unwrap(), synth_generate(&spec).unwrap());
        let (train, test) = synth_generate(&spec).unwrap();
        assert_eq!(train.len(), 400);
        assert_eq!(test.len(), 300);
        assert!(train.labels.is_none());
        assert_eq!(test.labels.as_ref().unwrap().iter().filter(|&&l| l == 1).count(), 5);
    }

    #[test]
    fn synth_without_anomalies_is_unlabelled_normal() {
        let (_, test) = synth_generate(&small_spec()).unwrap();
        assert!(test.labels.unwrap().iter().all(|&l| l == 0));
    }

    #[test]
    fn single_spike_labels_one_tick() {
        let mut spec = small_spec();
        spec.anomalies.push(AnomalySpec {
            kind: AnomalyKind::Spike,
            start: 100,
            duration: 1,
            magnitude: 6.0,
            channel: 2,
        });
        let (_, spiked) = synth_generate(&spec).unwrap();
        let labels = spiked.labels.as_ref().unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 1);
        assert_eq!(labels[100], 1);
        let (_, clean) = synth_generate(&small_spec()).unwrap();
        let bump = spiked.values.get(2, 100) - clean.values.get(2, 100);
        assert!(bump > 1.0, "{bump}");
    }

    #[test]
    fn anomaly_outside_test_range_rejected() {
        let mut spec = small_spec();
        spec.anomalies.push(AnomalySpec {
            kind: AnomalyKind::Spike,
            start: 299,
            duration: 2,
            magnitude: 6.0,
            channel: 0,
        });
        assert!(synth_generate(&spec).is_err());
    }

    #[test]
    fn correlation_break_keeps_marginals() {
        let mut spec = small_spec();
        spec.anomalies.push(AnomalySpec {
            kind: AnomalyKind::CorrelationBreak,
            start: 100,
            duration: 60,
            magnitude: 1.0,
            channel: 3,
        });
        let (train, test) = synth_generate(&spec).unwrap();
        let stats = |xs: &[f64]| {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            (mean, (xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
        };
        let (normal_mean, normal_std) = stats(train.values.row(3));
        let (broken_mean, broken_std) = stats(&test.values.row(3)[100..160]);
        assert!((broken_mean - normal_mean).abs() <= 3.0 * normal_std);
        assert!(broken_std <= 3.0 * normal_std && broken_std >= normal_std / 3.0);
        let max = train.values.row(3).iter().fold(f64::MIN, |m, &v| m.max(v));
        let min = train.values.row(3).iter().fold(f64::MAX, |m, &v| m.min(v));
        let spread = max - min;
        assert!(test.values.row(3)[100..160].iter().all(|&v| v >= min - 0.5 * spread && v <= max + 0.5 * spread));
    }

    #[test]
    fn scatter_places_non_overlapping_anomalies() {
        let mut spec = small_spec();
        spec.scatter_anomalies(
            ScatterSpec {
                kind: AnomalyKind::Spike,
                count: 5,
                duration: 3,
                magnitude: 6.0,
                margin: 40,
                gap: 20,
            },
            3,
        )
        .unwrap();
        assert_eq!(spec.anomalies.len(), 5);
        spec.validate().unwrap();
        let mut prev_end = 0;
        for a in &spec.anomalies {
            assert!(a.start >= 40 && a.start >= prev_end);
            prev_end = a.start + a.duration;
        }
        let (_, test) = synth_generate(&spec).unwrap();
        assert_eq!(test.labels.unwrap().iter().filter(|&&l| l == 1).count(), 15);
    }

    #[test]
    fn parse_spec_file() {
        let text = "channels = 3\ntrain_length = 100\ntest_length = 80\nseed = 4\n\
                    anomaly = spike start=10 channel=1 magnitude=7\n\
                    random_anomalies = level-shift count=2 duration=5 margin=20 gap=5\n";
        let spec = SynthSpec::parse(text).unwrap();
        assert_eq!(spec.channels, 3);
        assert_eq!(spec.anomalies.len(), 3);
        assert_eq!(spec.anomalies[0].magnitude, 7.0);
        assert!(SynthSpec::parse("bogus = 1").is_err());
        assert!(SynthSpec::parse("test_length = 10\nanomaly = spike start=10").is_err());
        assert!(SynthSpec::parse("anomaly = wobble start=1").is_err());
    }
}
