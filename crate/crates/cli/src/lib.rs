//! Commands behind the `pmgc` binary. Each returns its result so tests can
//! drive the pipeline without spawning processes.

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use pmgc_core::checkpoint::Checkpoint;
use pmgc_core::data::{load_csv, make_windows, synth_generate, write_csv, MissingValues, NormalizationStats, RawSeries, SynthSpec, LABEL_COLUMN};
use pmgc_core::lab::{direct_loss, homogeneous_case_loss, homogeneous_configuration, run_lab, uniform_case_loss, LabConfig, LabInit, LabReport, LossKind};
use pmgc_core::metrics::{best_f1, segments_from_labels, BestF1, F1Kind};
use pmgc_core::scoring::{apply_threshold, forecast_errors, normalize_and_aggregate, parse_scores, robust_stats, write_scores, ScoreSeries, StatsSource};
use pmgc_core::trainer::{train, TrainHistory};

pub use config::RunConfig;

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub train_csv: PathBuf,
    pub test_csv: PathBuf,
    pub anomalies: usize,
}

pub fn cmd_synth(spec_path: &Path, out_dir: &Path) -> Result<SynthOutput> {
    let text = std::fs::read_to_string(spec_path)
        .with_context(|| format!("reading synth spec {}", spec_path.display()))?;
    let spec = SynthSpec::parse(&text).with_context(|| format!("in {}", spec_path.display()))?;
    let (train, test) = synth_generate(&spec)?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let out = SynthOutput {
        train_csv: out_dir.join("train.csv"),
        test_csv: out_dir.join("test.csv"),
        anomalies: spec.anomalies.len(),
    };
    write_csv(&out.train_csv, &train)?;
    write_csv(&out.test_csv, &test)?;
    Ok(out)
}

fn has_label_column(path: &Path) -> Result<bool> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let header = text.lines().next().unwrap_or("");
    Ok(header.split(',').any(|h| h.trim() == LABEL_COLUMN))
}

fn load_series(path: &Path, missing: MissingValues) -> Result<RawSeries> {
    let labelled = has_label_column(path)?;
    Ok(load_csv(path, labelled, missing)?)
}

pub fn format_history(history: &TrainHistory) -> String {
    let mut out = String::from("epoch\ttrain_total\ttrain_pred\ttrain_cohesion\tval_total\tval_pred\tval_cohesion\n");
    for (i, e) in history.epochs.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}",
            e.train.total, e.train.prediction, e.train.cohesion, e.validation.total, e.validation.prediction, e.validation.cohesion
        );
    }
    let _ = writeln!(out, "best_epoch\t{}\t({} loss {:.6e})", history.best_epoch, history.validation_loss, history.best_value());
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub path: PathBuf,
}

/// Trains on `config.train_csv` and writes `config.checkpoint`.
pub fn cmd_train(config: &RunConfig) -> Result<TrainOutput> {
    config.train.validate()?;
    let series = load_series(&config.train_csv, config.missing)?;
    let normalization = NormalizationStats::fit(&series.values, config.normalization);
    let values = normalization.apply(&series.values)?;
    let windows = make_windows(&values, config.train.w, config.train.p)
        .with_context(|| format!("windowing {}", config.train_csv.display()))?;
    let (params, history) = train(&windows, &config.train)?;
    let checkpoint = Checkpoint {
        config: config.train,
        normalization,
        channel_names: series.channel_names,
        history,
        params,
    };
    checkpoint.save(&config.checkpoint)?;
    Ok(TrainOutput {
        checkpoint,
        path: config.checkpoint.clone(),
    })
}

/// Columns of the normalized training series covered by the validation windows.
fn validation_tail(series: &pmgc_core::Matrix, ckpt: &Checkpoint) -> Result<pmgc_core::Matrix> {
    let c = &ckpt.config;
    let t = series.cols();
    ensure!(t > c.w, "reference series too short for window {}", c.w);
    let windows = t - c.w + 1;
    let val = ((c.validation_fraction * windows as f64).ceil() as usize).clamp(1, windows - 1);
    let start = windows - val;
    Ok(series.col_slice(start, t - start)?)
}

/// Scores `test_csv` with a checkpoint and writes the score table to `out`.
pub fn cmd_score(checkpoint: &Path, test_csv: &Path, out: &Path, config: &RunConfig) -> Result<ScoreSeries> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let series = load_series(test_csv, config.missing)?;
    let expected = ckpt.channel_names.len();
    if series.channels() != expected {
        bail!(
            "{} has {} channels but checkpoint {} expects {}",
            test_csv.display(),
            series.channels(),
            checkpoint.display(),
            expected
        );
    }
    if series.channel_names != ckpt.channel_names {
        eprintln!("warning: channel names in {} differ from the checkpoint", test_csv.display());
    }
    let values = ckpt.normalization.apply(&series.values)?;
    let mode = ckpt.config.mode;
    let err = forecast_errors(&values, &ckpt.params, mode)
        .with_context(|| format!("forecasting {}", test_csv.display()))?;
    let stats = match config.stats_source {
        StatsSource::Test => robust_stats(&err)?,
        StatsSource::Reference => {
            let reference = load_series(&config.train_csv, config.missing)?;
            ensure!(
                reference.channels() == expected,
                "reference {} has {} channels, expected {expected}",
                config.train_csv.display(),
                reference.channels()
            );
            let tail = validation_tail(&ckpt.normalization.apply(&reference.values)?, &ckpt)?;
            robust_stats(&forecast_errors(&tail, &ckpt.params, mode)?)?
        }
    };
    let mut scores = normalize_and_aggregate(&err, &stats)?;
    if let Some(th) = config.threshold {
        scores = apply_threshold(&scores, th);
    }
    write_scores(out, &scores)?;
    Ok(scores)
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub pointwise: BestF1,
    pub composite: BestF1,
    pub events: usize,
    pub scored_ticks: usize,
    pub warning: Option<String>,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(w) = &self.warning {
            let _ = writeln!(out, "warning: {w}");
        }
        let _ = writeln!(out, "scored_ticks\t{}", self.scored_ticks);
        let _ = writeln!(out, "events\t{}", self.events);
        for (name, b) in [("pointwise", &self.pointwise), ("composite", &self.composite)] {
            let _ = writeln!(
                out,
                "{name}\tf1 {:.6}\tprecision {:.6}\trecall {:.6}\tthreshold {}",
                b.scores.f1, b.scores.precision, b.scores.recall, b.threshold
            );
        }
        out
    }
}

/// Best-threshold F1 for a score file against the labels of `test_csv`.
pub fn cmd_eval(scores_path: &Path, test_csv: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(scores_path)
        .with_context(|| format!("reading {}", scores_path.display()))?;
    let table = parse_scores(&text).with_context(|| format!("in {}", scores_path.display()))?;
    ensure!(!table.scores.is_empty(), "{} has no scored ticks", scores_path.display());
    let series = load_csv(test_csv, true, MissingValues::ForwardFill)
        .with_context(|| format!("{} needs a `{LABEL_COLUMN}` column", test_csv.display()))?;
    let all = series.labels.expect("requested labels");
    let mut labels = Vec::with_capacity(table.ticks.len());
    for &t in &table.ticks {
        match all.get(t) {
            Some(&l) => labels.push(l),
            None => bail!(
                "score tick {t} is beyond the {} labelled ticks of {}",
                all.len(),
                test_csv.display()
            ),
        }
    }
    let events = segments_from_labels(&labels)?.len();
    Ok(EvalReport {
        pointwise: best_f1(&table.scores, &labels, F1Kind::Pointwise)?,
        composite: best_f1(&table.scores, &labels, F1Kind::Composite)?,
        events,
        scored_ticks: labels.len(),
        warning: (events == 0).then(|| "no anomalous ticks in the scored region; F1 is 0 by convention".to_string()),
    })
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seeds: Vec<u64>,
    pub lab: LabConfig,
    /// Required gap below `k·ln k` for the contrastive runs.
    pub margin: f64,
    /// Minimum pairwise squared distance for the contrastive runs.
    pub diversity: f64,
    /// Maximum Frobenius distance to the static graph for the simple runs.
    pub collapse: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2],
            lab: LabConfig::default(),
            margin: 0.1,
            diversity: 0.05,
            collapse: 1e-2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub lines: Vec<String>,
    pub passed: bool,
    pub simple: Vec<LabReport>,
    pub full: Vec<LabReport>,
    pub uniform_start_loss: f64,
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Runs the cohesion lab for both loss kinds and checks the collapse,
/// no-collapse and closed-form properties.
pub fn cmd_verify(options: &VerifyOptions) -> Result<VerifyReport> {
    ensure!(!options.seeds.is_empty(), "verify needs at least one seed");
    let k = options.lab.k;
    let klogk = uniform_case_loss(k);
    let mut lines = Vec::new();
    let mut simple = Vec::new();
    let mut full = Vec::new();
    for &seed in &options.seeds {
        simple.push(run_lab(&LabConfig { seed, loss: LossKind::Simple, ..options.lab })?);
        full.push(run_lab(&LabConfig { seed, loss: LossKind::Full, ..options.lab })?);
    }

    let prop1 = simple.iter().all(|r| r.aborted.is_none() && r.max_to_static_norm() < options.collapse);
    for r in &simple {
        lines.push(format!(
            "  simple seed {}: loss {:.3e} -> {:.3e}, max ||A_i - A_s||_F {:.3e}",
            r.config.seed,
            r.initial_loss(),
            r.final_loss(),
            r.max_to_static_norm()
        ));
    }
    lines.push(format!("Prop1 {} (simple loss collapses every dynamic graph onto the static graph)", verdict(prop1)));

    let uniform = run_lab(&LabConfig {
        init: LabInit::Uniform,
        steps: 1,
        loss: LossKind::Full,
        ..options.lab
    })?;
    let uniform_start_loss = uniform.initial_loss();
    let uniform_ok = (uniform_start_loss - klogk).abs() < 1e-9;
    let no_collapse = full.iter().all(|r| {
        r.aborted.is_none() && r.final_loss() < klogk - options.margin && r.min_pairwise > options.diversity
    });
    for r in &full {
        lines.push(format!(
            "  full seed {}: loss {:.6} -> {:.6} (k ln k = {klogk:.6}), min pairwise dist {:.4}",
            r.config.seed,
            r.initial_loss(),
            r.final_loss(),
            r.min_pairwise
        ));
    }
    lines.push(format!("  uniform start loss {uniform_start_loss:.12} vs k ln k {klogk:.12}"));
    let prop23 = no_collapse && uniform_ok;
    lines.push(format!("Prop2-3 {} (contrastive loss beats the uniform case and keeps graphs apart)", verdict(prop23)));

    let mut closed = true;
    for kk in [2, 3, 5] {
        for c in [0.0, 0.5, 1.0] {
            let direct = direct_loss(&homogeneous_configuration(4, kk, c)?, 1.0)?;
            closed &= (direct - homogeneous_case_loss(kk, c)).abs() < 1e-9;
        }
        let at_uniform = direct_loss(&homogeneous_configuration(4, kk, 0.0)?, 1.0)?;
        closed &= (at_uniform - uniform_case_loss(kk)).abs() < 1e-9;
    }
    lines.push(format!("ClosedForm {} (direct loss equals k ln k and k ln(1+(k-1)e^(c^2)))", verdict(closed)));

    let collapsed = simple.iter().all(|r| r.min_pairwise < options.diversity);
    lines.push(format!(
        "SimpleDiversity {} (expected: the simple loss leaves min pairwise dist {:.3e})",
        if collapsed { "COLLAPSED" } else { "NOT-COLLAPSED" },
        simple.iter().map(|r| r.min_pairwise).fold(f64::INFINITY, f64::min)
    ));

    Ok(VerifyReport {
        passed: prop1 && prop23 && closed,
        lines,
        simple,
        full,
        uniform_start_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_verify_reports_each_check() {
        let report = cmd_verify(&VerifyOptions {
            seeds: vec![0],
            lab: LabConfig {
                steps: 600,
                learning_rate: 3e-2,
                ..LabConfig::default()
            },
            ..VerifyOptions::default()
        })
        .unwrap();
        let text = report.lines.join("\n");
        for tag in ["Prop1", "Prop2-3", "ClosedForm", "SimpleDiversity COLLAPSED"] {
            assert!(text.contains(tag), "{text}");
        }
        assert!(report.passed, "{text}");
    }

    #[test]
    fn validation_tail_covers_validation_windows() {
        let ckpt_cfg = pmgc_core::trainer::TrainConfig {
            w: 5,
            p: 1,
            validation_fraction: 0.2,
            ..Default::default()
        };
        // 24 ticks → 20 windows → 4 validation windows → 8 columns.
        let series = pmgc_core::Matrix::zeros(2, 24);
        let windows = 20;
        let val = (0.2f64 * windows as f64).ceil() as usize;
        assert_eq!(val, 4);
        let c = Checkpoint {
            config: ckpt_cfg,
            normalization: NormalizationStats::MinMax { min: vec![0.0; 2], max: vec![1.0; 2] },
            channel_names: vec!["a".into(), "b".into()],
            history: TrainHistory::default(),
            params: pmgc_core::model::ModelParams::init(ckpt_cfg.dims(2), 0.05, Default::default(), 0).unwrap(),
        };
        let tail = validation_tail(&series, &c).unwrap();
        assert_eq!(tail.cols(), val + ckpt_cfg.w - 1);
    }
}
