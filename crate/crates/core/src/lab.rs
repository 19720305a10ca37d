//! Direct optimization of the cohesion losses over free graph parameters,
//! with no forecaster in the loop.
//!
//! Each sample owns `k` free `N×d` embedding matrices whose cosine graphs are
//! the dynamic graphs; all samples share one `ξ` whose cosine graph is the
//! static graph. Minimizing the simple loss collapses every dynamic graph onto
//! the static one. The contrastive loss instead keeps them apart.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::adam::{adam_step, AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::graph::{cohesion_loss, cohesion_on_tape, cohesion_simple_on_tape, cosine_graph_on_tape, distance_on_tape, AdjacencyMatrix, GraphSet};
use crate::init::{init_with, rng_from_seed, InitScheme};
use crate::matrix::Matrix;
use crate::params::ParamStore;
use crate::tape::{Tape, Var};

/// `k·ln k`: the contrastive loss when every dynamic graph equals the static one.
pub fn uniform_case_loss(k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let k = k as f64;
    k * k.ln()
}

/// `k·ln(1 + (k−1)·e^{c²})` at `τ = 1`: all dynamic graphs equal to each other,
/// each at squared distance `c²` from the static graph.
pub fn homogeneous_case_loss(k: usize, c: f64) -> f64 {
    let kf = k as f64;
    kf * (1.0 + (kf - 1.0) * (c * c).exp()).ln()
}

/// A static graph and `k` copies of one dynamic graph at Frobenius distance
/// `c` from it, built explicitly so the closed forms can be checked against
/// the literal loss. Needs `n ≥ 3` and `c ≤ 1`.
pub fn homogeneous_configuration(n: usize, k: usize, c: f64) -> Result<GraphSet> {
    if n < 3 || !(0.0..=1.0).contains(&c) {
        return Err(Error::Config(format!("need n >= 3 and 0 <= c <= 1, got n={n}, c={c}")));
    }
    let off = n * (n - 1);
    let delta = c / (off as f64).sqrt();
    let mut s = Matrix::filled(n, n, 0.25);
    let mut d = Matrix::filled(n, n, 0.25 + delta);
    for i in 0..n {
        s.set(i, i, 1.0);
        d.set(i, i, 1.0);
    }
    let dynamic = AdjacencyMatrix::new(d)?;
    GraphSet::new(vec![dynamic; k], AdjacencyMatrix::new(s)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    Full,
    Simple,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Full => "full",
            LossKind::Simple => "simple",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "simple" => Ok(Self::Simple),
            other => Err(Error::Config(format!("unknown loss kind `{other}` (expected full or simple)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parameterization {
    /// Graphs are cosine graphs of free `N×d` embeddings.
    #[default]
    Cosine,
    /// Graphs are `clamp01((M + Mᵀ)/2)` of free `N×N` matrices.
    Raw,
}

impl FromStr for Parameterization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "raw" => Ok(Self::Raw),
            other => Err(Error::Config(format!("unknown parameterization `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabInit {
    #[default]
    Random,
    /// Every dynamic parameter starts as a copy of the static one.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabConfig {
    pub nodes: usize,
    pub dim: usize,
    pub k: usize,
    pub tau: f64,
    pub loss: LossKind,
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub samples: usize,
    pub parameterization: Parameterization,
    pub init: LabInit,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            nodes: 5,
            dim: 4,
            k: 3,
            tau: 1.0,
            loss: LossKind::Full,
            steps: 2000,
            learning_rate: 1e-2,
            seed: 0,
            samples: 1,
            parameterization: Parameterization::Cosine,
            init: LabInit::Random,
        }
    }
}

impl LabConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.k < 2 {
            return Err(Error::Config(format!("k must be at least 2, got {}", self.k)));
        }
        if self.nodes == 0 || self.dim == 0 || self.samples == 0 {
            return Err(Error::Config("nodes, dim and samples must be positive".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

const STATIC: &str = "static";

fn dynamic_name(sample: usize, graph: usize) -> String {
    format!("dynamic.{sample}.{graph}")
}

fn init_params(config: &LabConfig) -> Result<ParamStore> {
    let mut rng = rng_from_seed(config.seed);
    let shape = match config.parameterization {
        Parameterization::Cosine => (config.nodes, config.dim),
        Parameterization::Raw => (config.nodes, config.nodes),
    };
    let scheme = match config.parameterization {
        Parameterization::Cosine => InitScheme::Normal { mean: 0.0, std: 1.0 },
        Parameterization::Raw => InitScheme::Normal { mean: 0.5, std: 0.25 },
    };
    let mut store = ParamStore::new();
    let xi = init_with(&mut rng, shape, scheme)?;
    store.insert(STATIC, xi.clone())?;
    for s in 0..config.samples {
        for g in 0..config.k {
            let value = match config.init {
                LabInit::Random => init_with(&mut rng, shape, scheme)?,
                LabInit::Uniform => xi.clone(),
            };
            store.insert(dynamic_name(s, g), value)?;
        }
    }
    Ok(store)
}

struct LabGraphs {
    static_graph: Var,
    dynamic: Vec<Vec<Var>>,
}

fn graph_on_tape(tape: &mut Tape, param: Var, parameterization: Parameterization) -> Result<Var> {
    match parameterization {
        Parameterization::Cosine => cosine_graph_on_tape(tape, param),
        Parameterization::Raw => {
            let t = tape.transpose(param);
            let sum = tape.add(param, t)?;
            let half = tape.scale(sum, 0.5);
            Ok(tape.clamp01(half))
        }
    }
}

fn build(tape: &mut Tape, store: &ParamStore, config: &LabConfig) -> Result<LabGraphs> {
    let xi = tape.param(STATIC, store.expect(STATIC)?.clone());
    let static_graph = graph_on_tape(tape, xi, config.parameterization)?;
    let mut dynamic = Vec::with_capacity(config.samples);
    for s in 0..config.samples {
        let mut graphs = Vec::with_capacity(config.k);
        for g in 0..config.k {
            let name = dynamic_name(s, g);
            let v = tape.param(name.clone(), store.expect(&name)?.clone());
            graphs.push(graph_on_tape(tape, v, config.parameterization)?);
        }
        dynamic.push(graphs);
    }
    Ok(LabGraphs { static_graph, dynamic })
}

fn objective(tape: &mut Tape, graphs: &LabGraphs, config: &LabConfig) -> Result<Var> {
    let mut terms = Vec::with_capacity(config.samples);
    for sample in &graphs.dynamic {
        terms.push(match config.loss {
            LossKind::Full => cohesion_on_tape(tape, graphs.static_graph, sample, config.tau)?,
            LossKind::Simple => cohesion_simple_on_tape(tape, graphs.static_graph, sample)?,
        });
    }
    tape.sum(&terms)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleDistances {
    /// `max_i ‖Aⁱ − Aˢ‖²_F`
    pub max_to_static: f64,
    /// `min_{i≠j} ‖Aⁱ − Aʲ‖²_F`
    pub min_pairwise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabReport {
    pub config: LabConfig,
    /// Loss before each step, then the final loss (`steps + 1` entries when complete).
    pub losses: Vec<f64>,
    pub per_sample: Vec<SampleDistances>,
    /// Squared Frobenius distances, maximized / minimized over samples.
    pub max_to_static: f64,
    pub min_pairwise: f64,
    pub uniform_reference: f64,
    /// Set when the run stopped on a non-finite loss.
    pub aborted: Option<String>,
}

impl LabReport {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("at least the initial loss")
    }

    /// `max_i ‖Aⁱ − Aˢ‖_F` (not squared).
    pub fn max_to_static_norm(&self) -> f64 {
        self.max_to_static.sqrt()
    }

    pub fn min_pairwise_norm(&self) -> f64 {
        self.min_pairwise.sqrt()
    }
}

fn distances(tape: &mut Tape, graphs: &LabGraphs) -> Result<Vec<SampleDistances>> {
    let mut out = Vec::with_capacity(graphs.dynamic.len());
    for sample in &graphs.dynamic {
        let mut max_to_static: f64 = 0.0;
        let mut min_pairwise = f64::INFINITY;
        for (i, &a) in sample.iter().enumerate() {
            let d = distance_on_tape(tape, graphs.static_graph, a)?;
            max_to_static = max_to_static.max(tape.scalar(d));
            for &b in &sample[i + 1..] {
                let d = distance_on_tape(tape, a, b)?;
                min_pairwise = min_pairwise.min(tape.scalar(d));
            }
        }
        out.push(SampleDistances {
            max_to_static,
            min_pairwise,
        });
    }
    Ok(out)
}

/// Optimizes the chosen loss with Adam and reports the trajectory and final
/// distance statistics.
pub fn run_lab(config: &LabConfig) -> Result<LabReport> {
    config.validate()?;
    let mut store = init_params(config)?;
    let mut adam = AdamState::new(&store, AdamConfig::with_learning_rate(config.learning_rate));
    let mut losses = Vec::with_capacity(config.steps + 1);
    let mut aborted = None;
    for step in 0..=config.steps {
        let mut tape = Tape::new();
        let graphs = build(&mut tape, &store, config)?;
        let loss = objective(&mut tape, &graphs, config)?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            aborted = Some(format!("non-finite loss at step {step}"));
            break;
        }
        losses.push(value);
        if step == config.steps {
            break;
        }
        let grads = tape.param_grads(&tape.backward(loss)?, &store)?;
        if let Err(e) = adam_step(&mut store, &grads, &mut adam) {
            aborted = Some(format!("step {step}: {e}"));
            break;
        }
    }
    if losses.is_empty() {
        return Err(Error::NonFinite("lab loss at initialization".into()));
    }
    let mut tape = Tape::new();
    let graphs = build(&mut tape, &store, config)?;
    let per_sample = distances(&mut tape, &graphs)?;
    Ok(LabReport {
        config: *config,
        max_to_static: per_sample.iter().map(|s| s.max_to_static).fold(0.0, f64::max),
        min_pairwise: per_sample.iter().map(|s| s.min_pairwise).fold(f64::INFINITY, f64::min),
        per_sample,
        losses,
        uniform_reference: uniform_case_loss(config.k),
        aborted,
    })
}

/// Literal cohesion loss of an explicit graph set, for closed-form checks.
pub fn direct_loss(graphs: &GraphSet, tau: f64) -> Result<f64> {
    cohesion_loss(graphs, tau)
}

pub fn format_report(report: &LabReport) -> String {
    let c = &report.config;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "loss={} k={} nodes={} dim={} samples={} steps={} lr={} seed={}",
        c.loss, c.k, c.nodes, c.dim, c.samples, c.steps, c.learning_rate, c.seed
    );
    let _ = writeln!(out, "initial_loss\t{:.9}", report.initial_loss());
    let _ = writeln!(out, "final_loss\t{:.9}", report.final_loss());
    let _ = writeln!(out, "k_log_k\t{:.9}", report.uniform_reference);
    let _ = writeln!(out, "max_dist_to_static\t{:.6e}", report.max_to_static);
    let _ = writeln!(out, "max_frobenius_to_static\t{:.6e}", report.max_to_static_norm());
    let _ = writeln!(out, "min_pairwise_dist\t{:.6e}", report.min_pairwise);
    for (i, s) in report.per_sample.iter().enumerate() {
        let _ = writeln!(out, "sample {i}\tmax_to_static {:.6e}\tmin_pairwise {:.6e}", s.max_to_static, s.min_pairwise);
    }
    if let Some(reason) = &report.aborted {
        let _ = writeln!(out, "aborted\t{reason}");
    }
    out
}

/// `step,loss` rows.
pub fn trajectory_csv(report: &LabReport) -> String {
    let mut out = String::from("step,loss\n");
    for (i, l) in report.losses.iter().enumerate() {
        let _ = writeln!(out, "{i},{l}");
    }
    out
}
