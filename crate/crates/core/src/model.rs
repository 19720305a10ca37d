//! Prospective multi-graph forecaster.
//!
//! For one window `X` (N channels × w ticks) split into a context of `w − p`
//! ticks and a target of `p` ticks:
//!
//! 1. the window encoder turns `X` (or the zero-padded context when
//!    prospective graphing is off) into `k` head representations, each
//!    giving one cosine graph; `ξ` gives the static graph;
//! 2. `S = context · W_e + b_e`;
//! 3. per graph `A`: `Z₁ = ReLU(βS + (1−β)ÃSW₁)`, `Z₂ = βZ₁ + (1−β)ÃZ₁W₂`,
//!    `ŷ_A = Z₂ W_d + b_d`, where `Ã` is the normalized adjacency;
//! 4. the forecast is the mean of the per-graph predictions.
//!
//! `W₁`, `W₂` and the decoder are shared by every graph branch.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{
    cohesion_on_tape, cohesion_simple_on_tape, cosine_graph_on_tape, encode_window_on_tape,
    AdjacencyMatrix, CohesionConfig, EncoderVars, GraphSet, NodeEmbeddings,
};
use crate::gradcheck::Evaluation;
use crate::init::{init_with, rng_from_seed, InitScheme};
use crate::matrix::Matrix;
use crate::params::ParamStore;
use crate::tape::{Tape, Var};

pub const ENCODER_W1: &str = "encoder.w1";
pub const ENCODER_B1: &str = "encoder.b1";
pub const ENCODER_W2: &str = "encoder.w2";
pub const ENCODER_B2: &str = "encoder.b2";
pub const CONTEXT_W: &str = "context.w";
pub const CONTEXT_B: &str = "context.b";
pub const GNN_W1: &str = "gnn.w1";
pub const GNN_W2: &str = "gnn.w2";
pub const DECODER_W: &str = "decoder.w";
pub const DECODER_B: &str = "decoder.b";
pub const XI: &str = "xi";

/// One stride-1 window with its context/target split.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub full: Matrix,
    pub context: Matrix,
    pub target: Matrix,
    /// Index of the window's last tick in the source series.
    pub end_tick: usize,
}

impl WindowSample {
    pub fn new(full: Matrix, pred_window: usize, end_tick: usize) -> Result<Self> {
        let w = full.cols();
        if pred_window == 0 || pred_window >= w {
            return Err(Error::Config(format!(
                "prediction window must satisfy 0 < p < w, got p={pred_window}, w={w}"
            )));
        }
        let context = full.col_slice(0, w - pred_window)?;
        let target = full.col_slice(w - pred_window, pred_window)?;
        Ok(Self {
            full,
            context,
            target,
            end_tick,
        })
    }

    pub fn channels(&self) -> usize {
        self.full.rows()
    }

    pub fn width(&self) -> usize {
        self.full.cols()
    }

    pub fn pred_window(&self) -> usize {
        self.target.cols()
    }
}

/// Model sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// Channels `N`.
    pub channels: usize,
    /// Window length `w`.
    pub window: usize,
    /// Prediction window `p`.
    pub pred_window: usize,
    /// Hidden width `d`.
    pub hidden: usize,
    /// Number of dynamic graphs `k`.
    pub graphs: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        let ModelDims {
            channels,
            window,
            pred_window,
            hidden,
            graphs,
        } = *self;
        if channels == 0 || hidden == 0 || graphs == 0 {
            return Err(Error::Config(format!("model dimensions must be positive: {self:?}")));
        }
        if pred_window == 0 || pred_window >= window {
            return Err(Error::Config(format!(
                "need 0 < p < w, got p={pred_window}, w={window}"
            )));
        }
        Ok(())
    }

    pub fn context_width(&self) -> usize {
        self.window - self.pred_window
    }
}

/// How the adjacency is normalized before propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Propagation {
    /// `D^{-1/2} A D^{-1/2}`
    #[default]
    NormalizedAdjacency,
    /// `I − D^{-1/2} A D^{-1/2}`
    NormalizedLaplacian,
}

impl fmt::Display for Propagation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Propagation::NormalizedAdjacency => "adjacency",
            Propagation::NormalizedLaplacian => "laplacian",
        })
    }
}

impl FromStr for Propagation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adjacency" => Ok(Propagation::NormalizedAdjacency),
            "laplacian" => Ok(Propagation::NormalizedLaplacian),
            other => Err(Error::Config(format!(
                "unknown propagation `{other}` (expected adjacency or laplacian)"
            ))),
        }
    }
}

/// Full model and its ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Full,
    /// Static graph only; no dynamic graphs, no cohesion loss.
    WithoutDynamic,
    /// Dynamic graphs only; no static graph, no cohesion loss.
    WithoutStatic,
    /// Dynamic graphs built from the zero-padded context.
    WithoutProspective,
    /// Static branch averaged together with the `k` dynamic branches.
    StaticDynamicAverage,
    /// Cohesion term replaced by `Σ_i ‖Aˢ − Aⁱ‖²_F`.
    SimpleCohesion,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Full,
        Mode::WithoutDynamic,
        Mode::WithoutStatic,
        Mode::WithoutProspective,
        Mode::StaticDynamicAverage,
        Mode::SimpleCohesion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::WithoutDynamic => "no-dynamic",
            Mode::WithoutStatic => "no-static",
            Mode::WithoutProspective => "no-prospective",
            Mode::StaticDynamicAverage => "static-dynamic-avg",
            Mode::SimpleCohesion => "simple-cohesion",
        }
    }

    fn prospective(self) -> bool {
        self != Mode::WithoutProspective
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Mode::ALL.iter().map(|m| m.name()).collect();
                Error::Config(format!("unknown mode `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// All learnable state plus the fixed hyperparameters that shape it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    /// Share of the previous state kept by each propagation layer.
    pub beta: f64,
    pub propagation: Propagation,
    pub store: ParamStore,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, `ξ ~ N(0, 0.1²)`.
    pub fn init(dims: ModelDims, beta: f64, propagation: Propagation, seed: u64) -> Result<Self> {
        dims.validate()?;
        check_beta(beta)?;
        let kd = dims.graphs * dims.hidden;
        let d = dims.hidden;
        let mut rng = rng_from_seed(seed);
        let glorot = InitScheme::GlorotUniform;
        let mut store = ParamStore::new();
        store.insert(ENCODER_W1, init_with(&mut rng, (dims.window, kd), glorot)?)?;
        store.insert(ENCODER_B1, Matrix::zeros(1, kd))?;
        store.insert(ENCODER_W2, init_with(&mut rng, (kd, kd), glorot)?)?;
        store.insert(ENCODER_B2, Matrix::zeros(1, kd))?;
        store.insert(CONTEXT_W, init_with(&mut rng, (dims.context_width(), d), glorot)?)?;
        store.insert(CONTEXT_B, Matrix::zeros(1, d))?;
        store.insert(GNN_W1, init_with(&mut rng, (d, d), glorot)?)?;
        store.insert(GNN_W2, init_with(&mut rng, (d, d), glorot)?)?;
        store.insert(DECODER_W, init_with(&mut rng, (d, dims.pred_window), glorot)?)?;
        store.insert(DECODER_B, Matrix::zeros(1, dims.pred_window))?;
        store.insert(XI, init_with(&mut rng, (dims.channels, d), InitScheme::SMALL_NORMAL)?)?;
        Ok(Self {
            dims,
            beta,
            propagation,
            store,
        })
    }

    /// Wraps an existing store after checking every expected shape.
    pub fn from_store(dims: ModelDims, beta: f64, propagation: Propagation, store: ParamStore) -> Result<Self> {
        dims.validate()?;
        check_beta(beta)?;
        let reference = Self::init(dims, beta, propagation, 0)?;
        reference.store.check_compatible(&store)?;
        Ok(Self {
            dims,
            beta,
            propagation,
            store,
        })
    }

    pub fn embeddings(&self) -> NodeEmbeddings {
        NodeEmbeddings {
            xi: self.store.get(XI).expect("validated store").clone(),
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::Config(format!("beta must lie in [0, 1], got {beta}")))
    }
}

/// Model parameters registered on a tape.
#[derive(Debug, Clone, Copy)]
pub struct ModelVars {
    pub encoder: EncoderVars,
    pub context_w: Var,
    pub context_b: Var,
    pub gnn_w1: Var,
    pub gnn_w2: Var,
    pub decoder_w: Var,
    pub decoder_b: Var,
    pub xi: Var,
}

impl ModelVars {
    /// Places every parameter on the tape, as a named parameter when
    /// `trainable` and as a constant otherwise.
    pub fn register(tape: &mut Tape, params: &ModelParams, trainable: bool) -> Result<Self> {
        let mut put = |name: &str| -> Result<Var> {
            let value = params.store.expect(name)?.clone();
            Ok(if trainable {
                tape.param(name, value)
            } else {
                tape.input(value)
            })
        };
        Ok(Self {
            encoder: EncoderVars {
                w1: put(ENCODER_W1)?,
                b1: put(ENCODER_B1)?,
                w2: put(ENCODER_W2)?,
                b2: put(ENCODER_B2)?,
            },
            context_w: put(CONTEXT_W)?,
            context_b: put(CONTEXT_B)?,
            gnn_w1: put(GNN_W1)?,
            gnn_w2: put(GNN_W2)?,
            decoder_w: put(DECODER_W)?,
            decoder_b: put(DECODER_B)?,
            xi: put(XI)?,
        })
    }
}

/// Graph construction on a tape: `(dynamic, static)`.
pub fn build_graphs_on_tape(
    tape: &mut Tape,
    sample: &WindowSample,
    vars: &ModelVars,
    k: usize,
    prospective: bool,
) -> Result<(Vec<Var>, Var)> {
    let encoder_input = if prospective {
        sample.full.clone()
    } else {
        sample.context.zero_pad_cols(sample.width())?
    };
    let x = tape.input(encoder_input);
    let heads = encode_window_on_tape(tape, x, vars.encoder, k)?;
    let dynamic = heads
        .into_iter()
        .map(|h| cosine_graph_on_tape(tape, h))
        .collect::<Result<Vec<_>>>()?;
    let static_graph = cosine_graph_on_tape(tape, vars.xi)?;
    Ok((dynamic, static_graph))
}

fn check_sample(sample: &WindowSample, dims: &ModelDims) -> Result<()> {
    let expected = (dims.channels, dims.window);
    if sample.full.shape() != expected || sample.pred_window() != dims.pred_window {
        return Err(Error::ShapeMismatch {
            op: "window sample",
            left: sample.full.shape(),
            right: expected,
        });
    }
    Ok(())
}

/// `k` dynamic graphs and the static graph for one window.
pub fn build_graphs(sample: &WindowSample, params: &ModelParams, prospective: bool) -> Result<GraphSet> {
    check_sample(sample, &params.dims)?;
    let mut tape = Tape::new();
    let vars = ModelVars::register(&mut tape, params, false)?;
    let (dynamic, stat) = build_graphs_on_tape(&mut tape, sample, &vars, params.dims.graphs, prospective)?;
    graph_set_from_tape(&tape, &dynamic, stat)
}

fn graph_set_from_tape(tape: &Tape, dynamic: &[Var], stat: Var) -> Result<GraphSet> {
    GraphSet::new(
        dynamic
            .iter()
            .map(|&a| AdjacencyMatrix::from_trusted(tape.value(a).clone()))
            .collect(),
        AdjacencyMatrix::from_trusted(tape.value(stat).clone()),
    )
}

/// Normalized adjacency `D^{-1/2} A D^{-1/2}`; zero-degree rows stay zero.
pub fn normalize_adjacency(a: &AdjacencyMatrix) -> Result<Matrix> {
    a.matrix().sym_normalize()
}

/// Propagation operator for the chosen [`Propagation`].
pub fn propagation_operator(a: &AdjacencyMatrix, propagation: Propagation) -> Result<Matrix> {
    let norm = normalize_adjacency(a)?;
    match propagation {
        Propagation::NormalizedAdjacency => Ok(norm),
        Propagation::NormalizedLaplacian => Matrix::identity(a.size()).sub(&norm),
    }
}

fn propagation_on_tape(tape: &mut Tape, a: Var, propagation: Propagation) -> Result<Var> {
    let norm = tape.sym_normalize(a)?;
    match propagation {
        Propagation::NormalizedAdjacency => Ok(norm),
        Propagation::NormalizedLaplacian => {
            let n = tape.value(a).rows();
            let eye = tape.input(Matrix::identity(n));
            tape.sub(eye, norm)
        }
    }
}

/// `βZ + (1−β)·Ã·Z·W`
pub fn mixhop_layer(z: &Matrix, a_norm: &Matrix, w: &Matrix, beta: f64) -> Result<Matrix> {
    let propagated = a_norm.matmul(z)?.matmul(w)?;
    z.scale(beta).add(&propagated.scale(1.0 - beta))
}

pub fn mixhop_on_tape(tape: &mut Tape, z: Var, a_norm: Var, w: Var, beta: f64) -> Result<Var> {
    let az = tape.matmul(a_norm, z)?;
    let azw = tape.matmul(az, w)?;
    let keep = tape.scale(z, beta);
    let mixed = tape.scale(azw, 1.0 - beta);
    tape.add(keep, mixed)
}

/// Forward pass recorded on a tape.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub dynamic: Vec<Var>,
    pub static_graph: Var,
    pub per_graph: Vec<Var>,
    pub mean: Var,
}

pub fn forward_on_tape(
    tape: &mut Tape,
    sample: &WindowSample,
    params: &ModelParams,
    vars: &ModelVars,
    mode: Mode,
) -> Result<ForwardVars> {
    check_sample(sample, &params.dims)?;
    let (dynamic, static_graph) =
        build_graphs_on_tape(tape, sample, vars, params.dims.graphs, mode.prospective())?;

    let branches: Vec<Var> = match mode {
        Mode::WithoutDynamic => vec![static_graph],
        Mode::StaticDynamicAverage => {
            let mut b = dynamic.clone();
            b.push(static_graph);
            b
        }
        _ => dynamic.clone(),
    };

    let ctx = tape.input(sample.context.clone());
    let s = tape.matmul(ctx, vars.context_w)?;
    let s = tape.add_row_bias(s, vars.context_b)?;

    let mut per_graph = Vec::with_capacity(branches.len());
    for &a in &branches {
        let a_norm = propagation_on_tape(tape, a, params.propagation)?;
        let z1 = mixhop_on_tape(tape, s, a_norm, vars.gnn_w1, params.beta)?;
        let z1 = tape.relu(z1);
        let z2 = mixhop_on_tape(tape, z1, a_norm, vars.gnn_w2, params.beta)?;
        let y = tape.matmul(z2, vars.decoder_w)?;
        per_graph.push(tape.add_row_bias(y, vars.decoder_b)?);
    }
    let total = tape.sum(&per_graph)?;
    let mean = tape.scale(total, 1.0 / per_graph.len() as f64);
    Ok(ForwardVars {
        dynamic,
        static_graph,
        per_graph,
        mean,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastOutput {
    /// One `N×p` prediction per graph branch.
    pub per_graph: Vec<Matrix>,
    /// Mean of `per_graph`.
    pub mean: Matrix,
    pub graphs: GraphSet,
}

pub fn forecast(sample: &WindowSample, params: &ModelParams, mode: Mode) -> Result<ForecastOutput> {
    let mut tape = Tape::new();
    let vars = ModelVars::register(&mut tape, params, false)?;
    let fwd = forward_on_tape(&mut tape, sample, params, &vars, mode)?;
    Ok(ForecastOutput {
        per_graph: fwd.per_graph.iter().map(|&v| tape.value(v).clone()).collect(),
        mean: tape.value(fwd.mean).clone(),
        graphs: graph_set_from_tape(&tape, &fwd.dynamic, fwd.static_graph)?,
    })
}

/// Mean squared error between the mean forecast and the target.
pub fn prediction_loss(out: &ForecastOutput, target: &Matrix) -> Result<f64> {
    let diff = out.mean.sub(target)?;
    Ok(diff.sum_squares() / diff.len() as f64)
}

/// Total loss and its parts. `cohesion` is unweighted.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub prediction: f64,
    pub cohesion: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.prediction.is_finite() && self.cohesion.is_finite()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub prediction: Var,
    pub cohesion: Option<Var>,
}

pub fn loss_on_tape(
    tape: &mut Tape,
    sample: &WindowSample,
    params: &ModelParams,
    vars: &ModelVars,
    cohesion: CohesionConfig,
    mode: Mode,
) -> Result<LossVars> {
    cohesion.validate()?;
    let fwd = forward_on_tape(tape, sample, params, vars, mode)?;
    let target = tape.input(sample.target.clone());
    let diff = tape.sub(fwd.mean, target)?;
    let sq = tape.sum_squares(diff);
    let prediction = tape.scale(sq, 1.0 / sample.target.len() as f64);
    let gc = match mode {
        Mode::WithoutDynamic | Mode::WithoutStatic => None,
        Mode::SimpleCohesion => Some(cohesion_simple_on_tape(tape, fwd.static_graph, &fwd.dynamic)?),
        _ => Some(cohesion_on_tape(tape, fwd.static_graph, &fwd.dynamic, cohesion.tau)?),
    };
    let total = match gc {
        Some(gc) if cohesion.lambda != 0.0 => {
            let weighted = tape.scale(gc, cohesion.lambda);
            tape.add(prediction, weighted)?
        }
        _ => prediction,
    };
    Ok(LossVars {
        total,
        prediction,
        cohesion: gc,
    })
}

fn breakdown(tape: &Tape, vars: &LossVars) -> LossBreakdown {
    LossBreakdown {
        total: tape.scalar(vars.total),
        prediction: tape.scalar(vars.prediction),
        cohesion: vars.cohesion.map_or(0.0, |v| tape.scalar(v)),
    }
}

pub fn total_loss(
    sample: &WindowSample,
    params: &ModelParams,
    cohesion: CohesionConfig,
    mode: Mode,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let vars = ModelVars::register(&mut tape, params, false)?;
    let lv = loss_on_tape(&mut tape, sample, params, &vars, cohesion, mode)?;
    Ok(breakdown(&tape, &lv))
}

/// Loss, parameter gradients, and kink bookkeeping for one window.
#[derive(Debug, Clone)]
pub struct SampleGradient {
    pub loss: LossBreakdown,
    pub grads: ParamStore,
    pub signature: u64,
    pub kink_margin: f64,
}

pub fn loss_and_grad(
    sample: &WindowSample,
    params: &ModelParams,
    cohesion: CohesionConfig,
    mode: Mode,
) -> Result<SampleGradient> {
    let mut tape = Tape::new();
    let vars = ModelVars::register(&mut tape, params, true)?;
    let lv = loss_on_tape(&mut tape, sample, params, &vars, cohesion, mode)?;
    let grads = tape.backward(lv.total)?;
    Ok(SampleGradient {
        loss: breakdown(&tape, &lv),
        grads: tape.param_grads(&grads, &params.store)?,
        signature: tape.activation_signature(),
        kink_margin: tape.kink_margin(),
    })
}

/// Mean loss and mean gradient over a batch, reduced in batch order.
pub fn batch_loss_and_grad(
    samples: &[&WindowSample],
    params: &ModelParams,
    cohesion: CohesionConfig,
    mode: Mode,
) -> Result<(LossBreakdown, ParamStore)> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    let mut grads = params.store.zeros_like();
    let mut loss = LossBreakdown::default();
    for sample in samples {
        let g = loss_and_grad(sample, params, cohesion, mode)?;
        grads.add_scaled(&g.grads, 1.0)?;
        loss.total += g.loss.total;
        loss.prediction += g.loss.prediction;
        loss.cohesion += g.loss.cohesion;
    }
    let inv = 1.0 / samples.len() as f64;
    grads.scale(inv);
    loss.total *= inv;
    loss.prediction *= inv;
    loss.cohesion *= inv;
    Ok((loss, grads))
}

/// Total loss over a window set as a [`crate::gradcheck::Objective`].
pub fn model_objective<'a>(
    samples: &'a [WindowSample],
    template: &'a ModelParams,
    cohesion: CohesionConfig,
    mode: Mode,
) -> impl Fn(&ParamStore, bool) -> Result<Evaluation> + 'a {
    move |store: &ParamStore, with_grad: bool| {
        let params = ModelParams {
            store: store.clone(),
            ..template.clone()
        };
        let mut loss = 0.0;
        let mut grads = with_grad.then(|| store.zeros_like());
        let mut signature = 0u64;
        let mut kink_margin = f64::INFINITY;
        for sample in samples {
            let g = loss_and_grad(sample, &params, cohesion, mode)?;
            loss += g.loss.total;
            if let Some(acc) = grads.as_mut() {
                acc.add_scaled(&g.grads, 1.0)?;
            }
            signature = signature.rotate_left(7) ^ g.signature;
            kink_margin = kink_margin.min(g.kink_margin);
        }
        Ok(Evaluation {
            loss,
            grads,
            signature,
            kink_margin,
        })
    }
}
