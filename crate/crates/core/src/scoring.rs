//! Forecast errors to per-tick anomaly scores.
//!
//! The score at tick `t` uses the window ending at `t` and the last column
//! of its forecast. Errors are standardized per channel by median and IQR and
//! the channel maximum is the tick's score.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{io_err, Error, Result};
use crate::matrix::Matrix;
use crate::model::{forecast, Mode, ModelParams, WindowSample};

/// Floor on the IQR so constant-error channels do not divide by zero.
pub const EPS_IQR: f64 = 1e-6;

/// `|x − ŷ|` per channel for every scored tick.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMatrix {
    /// `N × (T − w + 1)`.
    pub err: Matrix,
    /// Series tick of column 0; equals `w − 1`.
    pub first_tick: usize,
}

impl ErrorMatrix {
    pub fn new(err: Matrix, first_tick: usize) -> Result<Self> {
        if !err.is_finite() || err.data().iter().any(|&v| v < 0.0) {
            return Err(Error::NonFinite("errors must be finite and non-negative".into()));
        }
        Ok(Self { err, first_tick })
    }

    pub fn ticks(&self) -> usize {
        self.err.cols()
    }
}

pub fn forecast_errors(test: &Matrix, params: &ModelParams, mode: Mode) -> Result<ErrorMatrix> {
    let w = params.dims.window;
    let p = params.dims.pred_window;
    let (n, t) = test.shape();
    if n != params.dims.channels {
        return Err(Error::Config(format!(
            "model expects {} channels, series has {n}",
            params.dims.channels
        )));
    }
    if t < w {
        return Err(Error::InsufficientData(format!(
            "series has {t} ticks, window needs {w}"
        )));
    }
    let scored = t - w + 1;
    let mut err = Matrix::zeros(n, scored);
    for col in 0..scored {
        let end = col + w - 1;
        let sample = WindowSample::new(test.col_slice(col, w)?, p, end)?;
        let out = forecast(&sample, params, mode)?;
        for c in 0..n {
            err.set(c, col, (test.get(c, end) - out.mean.get(c, p - 1)).abs());
        }
    }
    ErrorMatrix::new(err, w - 1)
}

/// Quantile of sorted data with linear interpolation at position `q·(n−1)`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustStats {
    pub median: Vec<f64>,
    pub iqr: Vec<f64>,
}

pub fn robust_stats(err: &ErrorMatrix) -> Result<RobustStats> {
    if err.ticks() < 4 {
        return Err(Error::InsufficientData(format!(
            "robust statistics need at least 4 scored ticks, got {}",
            err.ticks()
        )));
    }
    let (median, iqr) = (0..err.err.rows())
        .map(|c| {
            let mut sorted = err.err.row(c).to_vec();
            sorted.sort_by(f64::total_cmp);
            (
                quantile_sorted(&sorted, 0.5),
                quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25),
            )
        })
        .unzip();
    Ok(RobustStats { median, iqr })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub first_tick: usize,
    /// `a_i^t`, `N × ticks`.
    pub per_channel: Matrix,
    /// `a^t = max_i a_i^t`.
    pub scores: Vec<f64>,
    /// Channel attaining the maximum (lowest index on ties).
    pub top_channel: Vec<usize>,
    pub threshold: Option<f64>,
    pub decisions: Option<Vec<u8>>,
}

pub fn normalize_and_aggregate(err: &ErrorMatrix, stats: &RobustStats) -> Result<ScoreSeries> {
    let (n, ticks) = err.err.shape();
    if stats.median.len() != n || stats.iqr.len() != n {
        return Err(Error::Config(format!(
            "statistics cover {} channels, errors have {n}",
            stats.median.len()
        )));
    }
    if ticks == 0 {
        return Err(Error::InsufficientData("no scored ticks".into()));
    }
    let mut per_channel = Matrix::zeros(n, ticks);
    for c in 0..n {
        let scale = stats.iqr[c].max(EPS_IQR);
        for t in 0..ticks {
            per_channel.set(c, t, (err.err.get(c, t) - stats.median[c]) / scale);
        }
    }
    let mut scores = Vec::with_capacity(ticks);
    let mut top_channel = Vec::with_capacity(ticks);
    for t in 0..ticks {
        let (best_c, best) = (0..n).fold((0, f64::NEG_INFINITY), |(bc, bv), c| {
            let v = per_channel.get(c, t);
            if v > bv {
                (c, v)
            } else {
                (bc, bv)
            }
        });
        scores.push(best);
        top_channel.push(best_c);
    }
    Ok(ScoreSeries {
        first_tick: err.first_tick,
        per_channel,
        scores,
        top_channel,
        threshold: None,
        decisions: None,
    })
}

pub fn apply_threshold(scores: &ScoreSeries, threshold: f64) -> ScoreSeries {
    ScoreSeries {
        threshold: Some(threshold),
        decisions: Some(crate::metrics::decisions(&scores.scores, threshold)),
        ..scores.clone()
    }
}

/// Where the median/IQR come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StatsSource {
    /// The scored test errors themselves.
    #[default]
    Test,
    /// Errors on a held-out normal series (e.g. the validation tail of training data).
    Reference,
}

/// Forecast, standardize and aggregate. `reference` supplies the series for
/// [`StatsSource::Reference`].
pub fn score_series(
    test: &Matrix,
    params: &ModelParams,
    mode: Mode,
    source: StatsSource,
    reference: Option<&Matrix>,
) -> Result<ScoreSeries> {
    let err = forecast_errors(test, params, mode)?;
    let stats = match (source, reference) {
        (StatsSource::Test, _) => robust_stats(&err)?,
        (StatsSource::Reference, Some(r)) => robust_stats(&forecast_errors(r, params, mode)?)?,
        (StatsSource::Reference, None) => {
            return Err(Error::Config("reference statistics need a reference series".into()))
        }
    };
    normalize_and_aggregate(&err, &stats)
}

const SCORE_HEADER: &str = "tick\tscore\tdecision\ttop_channel";

/// Tab-separated table: tick, score, decision (`-` when unthresholded), top channel.
pub fn format_scores(scores: &ScoreSeries) -> String {
    let mut out = String::new();
    if let Some(th) = scores.threshold {
        let _ = writeln!(out, "# threshold {th}");
    }
    out.push_str(SCORE_HEADER);
    out.push('\n');
    for (i, (&s, &c)) in scores.scores.iter().zip(&scores.top_channel).enumerate() {
        let decision = match &scores.decisions {
            Some(d) => d[i].to_string(),
            None => "-".into(),
        };
        let _ = writeln!(out, "{}\t{s}\t{decision}\t{c}", scores.first_tick + i);
    }
    out
}

pub fn write_scores(path: &Path, scores: &ScoreSeries) -> Result<()> {
    std::fs::write(path, format_scores(scores)).map_err(|e| io_err(path, e))
}

/// A score file read back: ticks, scores, and decisions if present.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub ticks: Vec<usize>,
    pub scores: Vec<f64>,
    pub decisions: Option<Vec<u8>>,
    pub top_channel: Vec<usize>,
}

pub fn parse_scores(text: &str) -> Result<ScoreTable> {
    let mut table = ScoreTable {
        ticks: Vec::new(),
        scores: Vec::new(),
        decisions: Some(Vec::new()),
        top_channel: Vec::new(),
    };
    let mut seen_header = false;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            if line != SCORE_HEADER {
                return Err(Error::Parse(format!("line {line_no}: expected header `{SCORE_HEADER}`")));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!("line {line_no}: expected 4 fields")));
        }
        let bad = |what: &str| Error::Parse(format!("line {line_no}: bad {what}"));
        table.ticks.push(fields[0].parse().map_err(|_| bad("tick"))?);
        table.scores.push(fields[1].parse().map_err(|_| bad("score"))?);
        match (fields[2], table.decisions.as_mut()) {
            ("-", _) => table.decisions = None,
            (d, Some(ds)) => ds.push(d.parse().map_err(|_| bad("decision"))?),
            (_, None) => {}
        }
        table.top_channel.push(fields[3].parse().map_err(|_| bad("channel"))?);
    }
    if !seen_header {
        return Err(Error::Parse("score file has no header".into()));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelDims, Propagation, DECODER_B, DECODER_W};
    use proptest::prelude::*;

    fn errors(rows: &[Vec<f64>]) -> ErrorMatrix {
        let n = rows.len();
        let t = rows[0].len();
        ErrorMatrix::new(Matrix::from_vec(n, t, rows.concat()).unwrap(), 0).unwrap()
    }

    #[test]
    fn quartile_example() {
        let s = robust_stats(&errors(&[vec![1.0, 2.0, 3.0, 4.0, 100.0]])).unwrap();
        assert_eq!((s.median[0], s.iqr[0]), (3.0, 2.0));
        let c = robust_stats(&errors(&[vec![7.0; 6]])).unwrap();
        assert_eq!(c.iqr[0], 0.0);
        assert!(robust_stats(&errors(&[vec![1.0, 2.0, 3.0]])).is_err());
    }

    #[test]
    fn quantiles_match_independent_formula() {
        // Even count: quartile positions 0.75 and 2.25 into [1, 2, 4, 8].
        let sorted = [1.0, 2.0, 4.0, 8.0];
        assert_eq!(quantile_sorted(&sorted, 0.25), 1.75);
        assert_eq!(quantile_sorted(&sorted, 0.5), 3.0);
        assert_eq!(quantile_sorted(&sorted, 0.75), 5.0);
    }

    #[test]
    fn score_examples() {
        let e = errors(&[vec![100.0]]);
        let stats = RobustStats {
            median: vec![3.0],
            iqr: vec![2.0],
        };
        assert_eq!(normalize_and_aggregate(&e, &stats).unwrap().scores, vec![48.5]);

        let per = errors(&[vec![1.0, 5.0], vec![2.0, 3.0]]);
        let unit = RobustStats {
            median: vec![0.0, 0.0],
            iqr: vec![1.0, 1.0],
        };
        let s = normalize_and_aggregate(&per, &unit).unwrap();
        assert_eq!(s.scores, vec![2.0, 5.0]);
        assert_eq!(s.top_channel, vec![1, 0]);
    }

    #[test]
    fn constant_channel_uses_iqr_floor() {
        let e = errors(&[vec![1.0, 1.0, 1.0, 1.0, 1.5]]);
        let stats = robust_stats(&e).unwrap();
        let s = normalize_and_aggregate(&e, &stats).unwrap();
        assert!((s.scores[4] - 0.5 / EPS_IQR).abs() < 1e-6);
    }

    #[test]
    fn threshold_examples() {
        let s = normalize_and_aggregate(
            &errors(&[vec![1.0, 2.0, 3.0]]),
            &RobustStats {
                median: vec![0.0],
                iqr: vec![1.0],
            },
        )
        .unwrap();
        assert_eq!(apply_threshold(&s, f64::INFINITY).decisions.unwrap(), vec![0, 0, 0]);
        assert_eq!(apply_threshold(&s, 0.5).decisions.unwrap(), vec![1, 1, 1]);
        assert_eq!(apply_threshold(&s, 2.0).decisions.unwrap(), vec![0, 0, 1]);
    }

    /// Zero encoder/GNN input, so the decoder bias is the forecast.
    fn constant_predictor(value: f64) -> ModelParams {
        let dims = ModelDims {
            channels: 2,
            window: 6,
            pred_window: 2,
            hidden: 4,
            graphs: 2,
        };
        let mut params = ModelParams::init(dims, 0.05, Propagation::default(), 1).unwrap();
        params.store.set(DECODER_W, Matrix::zeros(4, 2)).unwrap();
        params.store.set(DECODER_B, Matrix::filled(1, 2, value)).unwrap();
        params
    }

    #[test]
    fn exact_predictor_has_zero_error() {
        let params = constant_predictor(0.7);
        let test = Matrix::filled(2, 20, 0.7);
        let err = forecast_errors(&test, &params, Mode::Full).unwrap();
        assert_eq!(err.ticks(), 20 - 6 + 1);
        assert_eq!(err.first_tick, 5);
        assert!(err.err.data().iter().all(|&e| e < 1e-12));
    }

    #[test]
    fn error_ignores_deviation_sign() {
        let params = constant_predictor(0.5);
        let up = Matrix::filled(2, 8, 0.8);
        let down = Matrix::filled(2, 8, 0.2);
        let a = forecast_errors(&up, &params, Mode::Full).unwrap();
        let b = forecast_errors(&down, &params, Mode::Full).unwrap();
        assert!(a.err.max_abs_diff(&b.err) < 1e-12);
        assert!(forecast_errors(&Matrix::zeros(2, 5), &params, Mode::Full).is_err());
        assert!(forecast_errors(&Matrix::zeros(3, 8), &params, Mode::Full).is_err());
    }

    #[test]
    fn score_file_round_trip() {
        let s = normalize_and_aggregate(
            &errors(&[vec![0.1, 2.0, 0.3, 4.0], vec![1.0, 0.5, 0.25, 0.125]]),
            &RobustStats {
                median: vec![0.0, 0.1],
                iqr: vec![1.0, 0.3],
            },
        )
        .unwrap();
        let back = parse_scores(&format_scores(&s)).unwrap();
        assert_eq!(back.scores, s.scores);
        assert!(back.decisions.is_none());
        let th = apply_threshold(&s, 1.0);
        let back = parse_scores(&format_scores(&th)).unwrap();
        assert_eq!(back.decisions, th.decisions);
        assert!(parse_scores("nonsense\n").is_err());
    }

    fn error_rows() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
        (1usize..5, 4usize..30).prop_flat_map(|(n, t)| {
            (Just(n), Just(t), prop::collection::vec(0.0f64..10.0, n * t))
        })
    }

    proptest! {
        #[test]
        fn aggregate_dominates_channels((n, t, data) in error_rows()) {
            let e = ErrorMatrix::new(Matrix::from_vec(n, t, data).unwrap(), 0).unwrap();
            let s = normalize_and_aggregate(&e, &robust_stats(&e).unwrap()).unwrap();
            for tick in 0..t {
                for c in 0..n {
                    prop_assert!(s.scores[tick] >= s.per_channel.get(c, tick));
                }
                prop_assert_eq!(s.scores[tick], s.per_channel.get(s.top_channel[tick], tick));
            }
        }

        #[test]
        fn raising_one_error_never_lowers_score(
            (n, t, data) in error_rows(),
            pick in any::<prop::sample::Index>(),
            bump in 0.0f64..5.0,
        ) {
            let e = ErrorMatrix::new(Matrix::from_vec(n, t, data.clone()).unwrap(), 0).unwrap();
            let stats = robust_stats(&e).unwrap();
            let before = normalize_and_aggregate(&e, &stats).unwrap();
            let mut raised = data;
            let i = pick.index(raised.len());
            raised[i] += bump;
            let e2 = ErrorMatrix::new(Matrix::from_vec(n, t, raised).unwrap(), 0).unwrap();
            let after = normalize_and_aggregate(&e2, &stats).unwrap();
            prop_assert!(after.scores[i % t] >= before.scores[i % t]);
        }

        #[test]
        fn stats_ignore_tick_order(mut xs in prop::collection::vec(0.0f64..10.0, 4..30), seed in any::<u64>()) {
            let a = robust_stats(&errors(std::slice::from_ref(&xs))).unwrap();
            let len = xs.len();
            xs.rotate_left((seed as usize) % len);
            xs.reverse();
            let b = robust_stats(&errors(&[xs])).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
