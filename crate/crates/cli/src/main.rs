use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pmgc_core::lab::{trajectory_csv, LabConfig};
use pmgc_cli::{cmd_eval, cmd_score, cmd_synth, cmd_train, cmd_verify, format_history, RunConfig, VerifyOptions};

#[derive(Parser)]
#[command(name = "pmgc", version, about = "Multivariate time-series anomaly detection by multi-graph forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train.csv and test.csv from a synthetic spec file.
    Synth {
        /// Spec file (key = value lines).
        #[arg(long)]
        spec: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Training CSV (overrides `train_csv`).
        #[arg(long)]
        train_csv: Option<PathBuf>,
        /// Checkpoint path (overrides `checkpoint`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a test series with a checkpoint.
    Score {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        test_csv: Option<PathBuf>,
        /// Score table path (overrides `scores`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Best-threshold point-wise F1 and F1-composite of a score file.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        /// Test CSV with a `label` column.
        #[arg(long)]
        test_csv: PathBuf,
    },
    /// Check the graph cohesion properties by direct optimization.
    Verify {
        /// First seed; `--seeds` consecutive seeds are run.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        nodes: usize,
        #[arg(long, default_value_t = 4)]
        dim: usize,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        /// Optional directory for per-run loss trajectories (CSV).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flags shared by train and score; each maps onto a config key.
#[derive(Args)]
struct RunArgs {
    /// Key-value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    pred_window: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
}

impl RunArgs {
    fn resolve(&self, extra: Vec<(&'static str, String)>) -> Result<RunConfig> {
        let mut overrides: Vec<(&str, String)> = Vec::new();
        let mut push = |key: &'static str, v: Option<String>| {
            if let Some(v) = v {
                overrides.push((key, v));
            }
        };
        push("seed", self.seed.map(|v| v.to_string()));
        push("mode", self.mode.clone());
        push("epochs", self.epochs.map(|v| v.to_string()));
        push("window", self.window.map(|v| v.to_string()));
        push("pred_window", self.pred_window.map(|v| v.to_string()));
        push("k", self.k.map(|v| v.to_string()));
        push("lambda", self.lambda.map(|v| format!("{v:?}")));
        push("tau", self.tau.map(|v| format!("{v:?}")));
        overrides.extend(extra);
        RunConfig::resolve(self.config.as_deref(), std::env::vars(), &overrides)
    }
}

fn path_override(key: &'static str, p: &Option<PathBuf>) -> Option<(&'static str, String)> {
    p.as_ref().map(|p| (key, p.display().to_string()))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Synth { spec, out } => {
            let o = cmd_synth(&spec, &out)?;
            println!(
                "wrote {} and {} ({} anomalies)",
                o.train_csv.display(),
                o.test_csv.display(),
                o.anomalies
            );
        }
        Command::Train { run, train_csv, out } => {
            let extra = [path_override("train_csv", &train_csv), path_override("checkpoint", &out)];
            let config = run.resolve(extra.into_iter().flatten().collect())?;
            let o = cmd_train(&config)?;
            print!("{}", format_history(&o.checkpoint.history));
            println!("checkpoint {}", o.path.display());
        }
        Command::Score { run, checkpoint, test_csv, out, threshold } => {
            let extra = [
                path_override("checkpoint", &checkpoint),
                path_override("test_csv", &test_csv),
                path_override("scores", &out),
                threshold.map(|t| ("threshold", format!("{t:?}"))),
            ];
            let config = run.resolve(extra.into_iter().flatten().collect())?;
            let s = cmd_score(&config.checkpoint, &config.test_csv, &config.scores, &config)?;
            println!("scored {} ticks -> {}", s.scores.len(), config.scores.display());
        }
        Command::Eval { scores, test_csv } => {
            let report = cmd_eval(&scores, &test_csv)?;
            print!("{}", report.to_text());
        }
        Command::Verify { seed, seeds, k, nodes, dim, steps, lr, tau, out } => {
            let options = VerifyOptions {
                seeds: (seed..seed + seeds).collect(),
                lab: LabConfig {
                    k,
                    nodes,
                    dim,
                    steps,
                    learning_rate: lr,
                    tau,
                    ..LabConfig::default()
                },
                ..VerifyOptions::default()
            };
            let report = cmd_verify(&options)?;
            for line in &report.lines {
                println!("{line}");
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                for r in report.simple.iter().chain(&report.full) {
                    let path = dir.join(format!("{}_seed{}.csv", r.config.loss, r.config.seed));
                    std::fs::write(&path, trajectory_csv(r)).with_context(|| format!("writing {}", path.display()))?;
                }
            }
            return Ok(report.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
