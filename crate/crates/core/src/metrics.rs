//! Point-wise F1, F1-composite (time-wise precision, event-wise recall) and
//! best-threshold search.
//!
//! Degenerate ratios (0/0) are defined as 0 for precision, recall and F1.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Inclusive `(start, end)` index range of a contiguous run of positive labels.
pub type Segment = (usize, usize);

fn check_binary(name: &str, xs: &[u8]) -> Result<()> {
    match xs.iter().position(|&x| x > 1) {
        Some(i) => Err(Error::Config(format!("{name}[{i}] = {} is not 0 or 1", xs[i]))),
        None => Ok(()),
    }
}

fn check_lengths(predictions: &[u8], labels: &[u8]) -> Result<()> {
    if predictions.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    check_binary("predictions", predictions)?;
    check_binary("labels", labels)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn segments_from_labels(labels: &[u8]) -> Result<Vec<Segment>> {
    check_binary("labels", labels)?;
    let mut out = Vec::new();
    let mut start = None;
    for (i, &l) in labels.iter().enumerate() {
        match (l, start) {
            (1, None) => start = Some(i),
            (0, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, labels.len() - 1));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn f1_pointwise(predictions: &[u8], labels: &[u8]) -> Result<PrecisionRecall> {
    check_lengths(predictions, labels)?;
    let (mut tp, mut fp, mut fneg) = (0, 0, 0);
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fneg += 1,
            _ => {}
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    Ok(PrecisionRecall {
        precision,
        recall,
        f1: harmonic(precision, recall),
    })
}

/// Point-wise precision with event-wise recall: an event counts as detected
/// when any of its ticks is predicted positive.
pub fn f1_composite(predictions: &[u8], labels: &[u8]) -> Result<PrecisionRecall> {
    let point = f1_pointwise(predictions, labels)?;
    let events = segments_from_labels(labels)?;
    let detected = events
        .iter()
        .filter(|&&(s, e)| predictions[s..=e].contains(&1))
        .count();
    let recall = ratio(detected, events.len());
    Ok(PrecisionRecall {
        precision: point.precision,
        recall,
        f1: harmonic(point.precision, recall),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum F1Kind {
    Pointwise,
    Composite,
}

impl fmt::Display for F1Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            F1Kind::Pointwise => "pointwise",
            F1Kind::Composite => "composite",
        })
    }
}

impl FromStr for F1Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pointwise" => Ok(Self::Pointwise),
            "composite" => Ok(Self::Composite),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

pub fn evaluate(kind: F1Kind, predictions: &[u8], labels: &[u8]) -> Result<PrecisionRecall> {
    match kind {
        F1Kind::Pointwise => f1_pointwise(predictions, labels),
        F1Kind::Composite => f1_composite(predictions, labels),
    }
}

/// Decisions under the strict rule `score > threshold`.
pub fn decisions(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s > threshold)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestF1 {
    pub threshold: f64,
    pub scores: PrecisionRecall,
}

/// Sweeps `−∞`, the midpoints between consecutive distinct sorted scores, and
/// `+∞`. Ties keep the lowest threshold.
pub fn best_f1(scores: &[f64], labels: &[u8], kind: F1Kind) -> Result<BestF1> {
    if scores.is_empty() {
        return Err(Error::InsufficientData("no scores to threshold".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("score at index {i} is NaN")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut candidates = Vec::with_capacity(sorted.len() + 1);
    candidates.push(f64::NEG_INFINITY);
    candidates.extend(sorted.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    candidates.push(f64::INFINITY);

    let mut best: Option<BestF1> = None;
    for threshold in candidates {
        let scores = evaluate(kind, &decisions(scores, threshold), labels)?;
        if best.is_none_or(|b| scores.f1 > b.scores.f1) {
            best = Some(BestF1 { threshold, scores });
        }
    }
    Ok(best.expect("at least two candidates"))
}
