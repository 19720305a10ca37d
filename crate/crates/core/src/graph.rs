//! Graph structure learning: window encoder, cosine graph generator, and the
//! graph cohesion objectives tying the dynamic graphs to the static one.
//!
//! Each operation exists twice. The `*_on_tape` forms record onto a
//! [`Tape`] and are what the model and the trainer differentiate. The plain
//! forms evaluate on concrete matrices. For the cohesion loss the plain form
//! evaluates the ratio of exponentials literally while the tape form goes
//! through log-sum-exp, and tests hold the two against each other.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tape::{Tape, Var};

/// Rows with Euclidean norm below this are divided by it instead.
pub const NORM_EPS: f64 = 1e-12;

/// Learnable per-channel embeddings `ξ` behind the static graph.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbeddings {
    pub xi: Matrix,
}

/// The `k` per-head representations of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadRepresentations {
    pub heads: Vec<Matrix>,
}

/// Symmetric `N×N` matrix with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix(Matrix);

impl AdjacencyMatrix {
    /// Validates squareness, symmetry and the `[0, 1]` range (with `1e-12`
    /// slack at the top for rounding in cosine diagonals).
    pub fn new(m: Matrix) -> Result<Self> {
        let (r, c) = m.shape();
        if r != c {
            return Err(Error::InvalidShape(format!("adjacency must be square, got {r}x{c}")));
        }
        for i in 0..r {
            for j in 0..r {
                let v = m.get(i, j);
                if !(0.0..=1.0 + 1e-12).contains(&v) {
                    return Err(Error::InvalidShape(format!("adjacency entry ({i},{j}) = {v}")));
                }
                if (v - m.get(j, i)).abs() > 1e-12 {
                    return Err(Error::InvalidShape(format!("adjacency not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self(m))
    }

    pub(crate) fn from_trusted(m: Matrix) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn size(&self) -> usize {
        self.0.rows()
    }
}

/// The `k` dynamic graphs of one window plus the static graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSet {
    pub dynamic: Vec<AdjacencyMatrix>,
    pub static_graph: AdjacencyMatrix,
}

impl GraphSet {
    pub fn new(dynamic: Vec<AdjacencyMatrix>, static_graph: AdjacencyMatrix) -> Result<Self> {
        if dynamic.is_empty() {
            return Err(Error::Config("a graph set needs at least one dynamic graph".into()));
        }
        let n = static_graph.size();
        if let Some(bad) = dynamic.iter().find(|a| a.size() != n) {
            return Err(Error::ShapeMismatch {
                op: "graph set",
                left: (n, n),
                right: bad.matrix().shape(),
            });
        }
        Ok(Self {
            dynamic,
            static_graph,
        })
    }

    pub fn k(&self) -> usize {
        self.dynamic.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohesionConfig {
    /// Temperature of `h(A, B) = exp(−‖A − B‖²_F / τ)`.
    pub tau: f64,
    /// Weight of the cohesion term in the total loss.
    pub lambda: f64,
}

impl Default for CohesionConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            lambda: 1e-5,
        }
    }
}

impl CohesionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Two-layer window encoder weights: `w → hidden → k·d` with ReLU between.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

/// Encoder weights already placed on a tape.
#[derive(Debug, Clone, Copy)]
pub struct EncoderVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl EncoderParams {
    pub fn on_tape(&self, tape: &mut Tape) -> EncoderVars {
        EncoderVars {
            w1: tape.input(self.w1.clone()),
            b1: tape.input(self.b1.clone()),
            w2: tape.input(self.w2.clone()),
            b2: tape.input(self.b2.clone()),
        }
    }
}

/// Applies the encoder row-wise and splits the `k·d` output into `k`
/// contiguous column blocks.
pub fn encode_window_on_tape(
    tape: &mut Tape,
    window: Var,
    enc: EncoderVars,
    k: usize,
) -> Result<Vec<Var>> {
    let in_width = tape.value(enc.w1).rows();
    if tape.value(window).cols() != in_width {
        return Err(Error::ShapeMismatch {
            op: "encode_window",
            left: tape.value(window).shape(),
            right: tape.value(enc.w1).shape(),
        });
    }
    let out_width = tape.value(enc.w2).cols();
    if k == 0 || !out_width.is_multiple_of(k) {
        return Err(Error::Config(format!(
            "encoder output width {out_width} is not divisible into {k} heads"
        )));
    }
    let d = out_width / k;
    let pre = tape.matmul(window, enc.w1)?;
    let pre = tape.add_row_bias(pre, enc.b1)?;
    let hidden = tape.relu(pre);
    let out = tape.matmul(hidden, enc.w2)?;
    let out = tape.add_row_bias(out, enc.b2)?;
    if k == 1 {
        return Ok(vec![out]);
    }
    (0..k).map(|i| tape.col_slice(out, i * d, d)).collect()
}

pub fn encode_window(window: &Matrix, enc: &EncoderParams, k: usize) -> Result<HeadRepresentations> {
    let mut tape = Tape::new();
    let vars = enc.on_tape(&mut tape);
    let x = tape.input(window.clone());
    let heads = encode_window_on_tape(&mut tape, x, vars, k)?;
    Ok(HeadRepresentations {
        heads: heads.into_iter().map(|h| tape.value(h).clone()).collect(),
    })
}

/// `ReLU(cos(H_i, H_j))` over all row pairs.
pub fn cosine_graph_on_tape(tape: &mut Tape, h: Var) -> Result<Var> {
    let unit = tape.row_normalize(h, NORM_EPS);
    let cos = tape.matmul_t(unit, unit)?;
    Ok(tape.relu(cos))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GraphDiagnostics {
    /// Rows whose norm fell below [`NORM_EPS`].
    pub guarded_rows: usize,
}

pub fn generate_graph_with_diagnostics(h: &Matrix) -> Result<(AdjacencyMatrix, GraphDiagnostics)> {
    let mut tape = Tape::new();
    let x = tape.input(h.clone());
    let a = cosine_graph_on_tape(&mut tape, x)?;
    let diagnostics = GraphDiagnostics {
        guarded_rows: tape.guarded_rows(),
    };
    Ok((AdjacencyMatrix::from_trusted(tape.value(a).clone()), diagnostics))
}

pub fn generate_graph(h: &Matrix) -> Result<AdjacencyMatrix> {
    generate_graph_with_diagnostics(h).map(|(a, _)| a)
}

pub fn static_graph(xi: &NodeEmbeddings) -> Result<AdjacencyMatrix> {
    generate_graph(&xi.xi)
}

/// `‖A − B‖²_F`
pub fn graph_distance(a: &AdjacencyMatrix, b: &AdjacencyMatrix) -> Result<f64> {
    Ok(a.matrix().sub(b.matrix())?.sum_squares())
}

pub fn distance_on_tape(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let diff = tape.sub(a, b)?;
    Ok(tape.sum_squares(diff))
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("tau must be > 0, got {tau}")))
    }
}

/// `exp(−dist(A, B) / τ)`
pub fn graph_similarity(a: &AdjacencyMatrix, b: &AdjacencyMatrix, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok((-graph_distance(a, b)? / tau).exp())
}

/// Contrastive cohesion loss
/// `Σ_i −log[h(Aˢ, Aⁱ) / (h(Aˢ, Aⁱ) + Σ_{j≠i} h(Aⁱ, Aʲ))]`, evaluated literally.
///
/// With a single dynamic graph the inner sum is empty and the loss is zero.
pub fn cohesion_loss(graphs: &GraphSet, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let k = graphs.k();
    let mut pair = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let h = graph_similarity(&graphs.dynamic[i], &graphs.dynamic[j], tau)?;
            pair[i][j] = h;
            pair[j][i] = h;
        }
    }
    let mut loss = 0.0;
    for i in 0..k {
        let anchor = graph_similarity(&graphs.static_graph, &graphs.dynamic[i], tau)?;
        let others: f64 = (0..k).filter(|&j| j != i).map(|j| pair[i][j]).sum();
        loss -= (anchor / (anchor + others)).ln();
    }
    Ok(loss)
}

/// Same objective as [`cohesion_loss`] written as
/// `Σ_i [logsumexp(−d_si/τ, −d_ij/τ …) + d_si/τ]` so large distances cannot
/// underflow.
pub fn cohesion_on_tape(tape: &mut Tape, static_graph: Var, dynamic: &[Var], tau: f64) -> Result<Var> {
    check_tau(tau)?;
    let k = dynamic.len();
    if k == 0 {
        return Err(Error::Config("cohesion loss needs at least one dynamic graph".into()));
    }
    let to_static: Vec<Var> = dynamic
        .iter()
        .map(|&a| distance_on_tape(tape, static_graph, a))
        .collect::<Result<_>>()?;
    let mut pair = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let d = distance_on_tape(tape, dynamic[i], dynamic[j])?;
            pair[i][j] = Some(d);
            pair[j][i] = Some(d);
        }
    }
    let mut terms = Vec::with_capacity(k);
    for i in 0..k {
        let mut args = vec![to_static[i]];
        args.extend((0..k).filter(|&j| j != i).map(|j| pair[i][j].expect("filled above")));
        let lse = tape.log_sum_exp(&args, -1.0 / tau)?;
        let anchor = tape.scale(to_static[i], 1.0 / tau);
        terms.push(tape.add(lse, anchor)?);
    }
    tape.sum(&terms)
}

/// `Σ_i dist(Aˢ, Aⁱ)`
pub fn cohesion_loss_simple(graphs: &GraphSet) -> Result<f64> {
    graphs
        .dynamic
        .iter()
        .map(|a| graph_distance(&graphs.static_graph, a))
        .sum()
}

pub fn cohesion_simple_on_tape(tape: &mut Tape, static_graph: Var, dynamic: &[Var]) -> Result<Var> {
    let terms: Vec<Var> = dynamic
        .iter()
        .map(|&a| distance_on_tape(tape, static_graph, a))
        .collect::<Result<_>>()?;
    tape.sum(&terms)
}

/// Evaluates the tape form of a cohesion loss on concrete graphs.
pub fn cohesion_loss_via_tape(graphs: &GraphSet, tau: f64, simple: bool) -> Result<f64> {
    let mut tape = Tape::new();
    let s = tape.input(graphs.static_graph.matrix().clone());
    let dyn_vars: Vec<Var> = graphs
        .dynamic
        .iter()
        .map(|a| tape.input(a.matrix().clone()))
        .collect();
    let l = if simple {
        cohesion_simple_on_tape(&mut tape, s, &dyn_vars)?
    } else {
        cohesion_on_tape(&mut tape, s, &dyn_vars, tau)?
    };
    Ok(tape.scalar(l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{seeded_init, InitScheme};
    use proptest::prelude::*;

    fn adj(rows: &[&[f64]]) -> AdjacencyMatrix {
        AdjacencyMatrix::new(Matrix::from_rows(rows)).unwrap()
    }

    fn id2() -> AdjacencyMatrix {
        adj(&[&[1.0, 0.0], &[0.0, 1.0]])
    }

    fn zero2() -> AdjacencyMatrix {
        adj(&[&[0.0, 0.0], &[0.0, 0.0]])
    }

    fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        a.max_abs_diff(b) <= tol
    }

    #[test]
    fn encoder_zero_weights_give_zero_heads() {
        let enc = EncoderParams {
            w1: Matrix::zeros(6, 4),
            b1: Matrix::zeros(1, 4),
            w2: Matrix::zeros(4, 4),
            b2: Matrix::zeros(1, 4),
        };
        let window = seeded_init(1, (3, 6), InitScheme::GlorotUniform).unwrap();
        let heads = encode_window(&window, &enc, 2).unwrap();
        assert_eq!(heads.heads.len(), 2);
        assert!(heads.heads.iter().all(|h| h == &Matrix::zeros(3, 2)));
    }

    #[test]
    fn encoder_identity_weights_slice_relu_window() {
        let enc = EncoderParams {
            w1: Matrix::identity(4),
            b1: Matrix::zeros(1, 4),
            w2: Matrix::identity(4),
            b2: Matrix::zeros(1, 4),
        };
        let window = Matrix::from_rows(&[[1.0, -2.0, 3.0, -4.0], [-0.5, 0.5, 0.0, 2.0]]);
        let heads = encode_window(&window, &enc, 2).unwrap();
        assert_eq!(heads.heads[0], Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.5]]));
        assert_eq!(heads.heads[1], Matrix::from_rows(&[[3.0, 0.0], [0.0, 2.0]]));

        let single = encode_window(&window, &enc, 1).unwrap();
        assert_eq!(single.heads, vec![window.relu()]);
    }

    #[test]
    fn encoder_rejects_wrong_window_width() {
        let enc = EncoderParams {
            w1: Matrix::zeros(6, 4),
            b1: Matrix::zeros(1, 4),
            w2: Matrix::zeros(4, 4),
            b2: Matrix::zeros(1, 4),
        };
        assert!(encode_window(&Matrix::zeros(3, 5), &enc, 2).is_err());
        assert!(encode_window(&Matrix::zeros(3, 6), &enc, 3).is_err());
    }

    #[test]
    fn cosine_graph_examples() {
        let parallel = generate_graph(&Matrix::from_rows(&[[1.0, 0.0], [2.0, 0.0]])).unwrap();
        assert!(close(parallel.matrix(), &Matrix::filled(2, 2, 1.0), 1e-15));
        let orthogonal = generate_graph(&Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]])).unwrap();
        assert_eq!(orthogonal.matrix(), &Matrix::identity(2));
        let opposite = generate_graph(&Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]])).unwrap();
        assert_eq!(opposite.matrix(), &Matrix::identity(2));
    }

    #[test]
    fn zero_rows_are_guarded_and_counted() {
        let (a, diag) =
            generate_graph_with_diagnostics(&Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]])).unwrap();
        assert_eq!(diag.guarded_rows, 1);
        assert!(a.matrix().is_finite());
        assert_eq!(a.matrix().get(1, 1), 0.0);
    }

    #[test]
    fn static_graph_examples() {
        let same = NodeEmbeddings {
            xi: Matrix::from_rows(&[[0.3, -0.2, 0.5]; 4]),
        };
        assert!(close(static_graph(&same).unwrap().matrix(), &Matrix::filled(4, 4, 1.0), 1e-14));
        let ident = NodeEmbeddings { xi: Matrix::identity(3) };
        assert_eq!(static_graph(&ident).unwrap().matrix(), &Matrix::identity(3));
        let random = NodeEmbeddings {
            xi: seeded_init(9, (6, 4), InitScheme::SMALL_NORMAL).unwrap(),
        };
        let a = static_graph(&random).unwrap();
        assert!(AdjacencyMatrix::new(a.matrix().clone()).is_ok());
        for i in 0..6 {
            assert!((a.matrix().get(i, i) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_examples() {
        assert_eq!(graph_distance(&id2(), &id2()).unwrap(), 0.0);
        assert_eq!(graph_distance(&id2(), &zero2()).unwrap(), 2.0);
        let three = AdjacencyMatrix::new(Matrix::identity(3)).unwrap();
        assert!(graph_distance(&id2(), &three).is_err());
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(graph_similarity(&id2(), &id2(), 1.0).unwrap(), 1.0);
        assert!((graph_similarity(&id2(), &zero2(), 1.0).unwrap() - 0.135335283).abs() < 1e-8);
        assert!((graph_similarity(&id2(), &zero2(), 2.0).unwrap() - 0.367879441).abs() < 1e-8);
        assert!(graph_similarity(&id2(), &zero2(), 0.0).is_err());
        assert!(graph_similarity(&id2(), &zero2(), -1.0).is_err());
    }

    #[test]
    fn cohesion_uniform_case_is_k_log_k() {
        let s = adj(&[&[1.0, 0.3], &[0.3, 1.0]]);
        let set = GraphSet::new(vec![s.clone(); 3], s).unwrap();
        let l = cohesion_loss(&set, 1.0).unwrap();
        assert!((l - 3.0 * 3f64.ln()).abs() < 1e-12);
        assert!((l - 3.295837).abs() < 1e-6);
    }

    #[test]
    fn cohesion_homogeneous_pair() {
        // Both dynamic graphs equal, squared distance 1 from static.
        let s = adj(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let d = adj(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let set = GraphSet::new(vec![d.clone(), d], s).unwrap();
        let expected = 2.0 * (1.0 + 1f64.exp()).ln();
        assert!((cohesion_loss(&set, 1.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 2.626523).abs() < 1e-6);
        assert!((cohesion_loss_via_tape(&set, 1.0, false).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn cohesion_single_graph_is_zero() {
        let set = GraphSet::new(vec![zero2()], id2()).unwrap();
        assert_eq!(cohesion_loss(&set, 1.0).unwrap(), 0.0);
        assert_eq!(cohesion_loss_via_tape(&set, 1.0, false).unwrap(), 0.0);
    }

    #[test]
    fn simple_cohesion_examples() {
        let set = GraphSet::new(vec![id2(), id2()], id2()).unwrap();
        assert_eq!(cohesion_loss_simple(&set).unwrap(), 0.0);
        let one = GraphSet::new(vec![zero2()], id2()).unwrap();
        assert_eq!(cohesion_loss_simple(&one).unwrap(), 2.0);
        let two = GraphSet::new(vec![zero2(), zero2()], id2()).unwrap();
        assert_eq!(cohesion_loss_simple(&two).unwrap(), 4.0);
        assert_eq!(cohesion_loss_via_tape(&two, 1.0, true).unwrap(), 4.0);
    }

    #[test]
    fn cohesion_underflow_is_handled_on_tape() {
        let n = 30;
        let s = AdjacencyMatrix::new(Matrix::identity(n)).unwrap();
        let full = AdjacencyMatrix::new(Matrix::filled(n, n, 1.0)).unwrap();
        let set = GraphSet::new(vec![full.clone(), full], s).unwrap();
        // dist = 870, so exp(−870) underflows; the log-sum-exp form stays finite.
        let l = cohesion_loss_via_tape(&set, 0.5, false).unwrap();
        assert!(l.is_finite());
        assert!((l - 2.0 * 870.0 / 0.5).abs() < 1e-9);
    }

    fn random_adjacency(seed: u64, n: usize) -> AdjacencyMatrix {
        let h = seeded_init(seed, (n, 3), InitScheme::GlorotUniform).unwrap();
        generate_graph(&h).unwrap()
    }

    proptest! {
        #[test]
        fn row_scaling_leaves_graph_unchanged(
            seed in 0u64..1000,
            scales in prop::collection::vec(0.01f64..100.0, 5),
        ) {
            let h = seeded_init(seed, (5, 4), InitScheme::GlorotUniform).unwrap();
            let mut scaled = h.clone();
            for (r, s) in scales.iter().enumerate() {
                for v in scaled.row_mut(r) {
                    *v *= s;
                }
            }
            let a = generate_graph(&h).unwrap();
            let b = generate_graph(&scaled).unwrap();
            prop_assert!(a.matrix().max_abs_diff(b.matrix()) < 1e-10);
        }

        #[test]
        fn generated_graphs_are_valid(seed in 0u64..1000) {
            let h = seeded_init(seed, (6, 3), InitScheme::SMALL_NORMAL).unwrap();
            let a = generate_graph(&h).unwrap();
            prop_assert!(AdjacencyMatrix::new(a.matrix().clone()).is_ok());
            for i in 0..6 {
                prop_assert!((a.matrix().get(i, i) - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn distance_is_symmetric(s1 in 0u64..500, s2 in 500u64..1000) {
            let a = random_adjacency(s1, 5);
            let b = random_adjacency(s2, 5);
            prop_assert_eq!(graph_distance(&a, &b).unwrap(), graph_distance(&b, &a).unwrap());
        }

        #[test]
        fn cohesion_forms_agree_and_are_nonnegative(
            seeds in prop::collection::vec(0u64..10_000, 4),
            tau in 0.2f64..5.0,
        ) {
            let set = GraphSet::new(
                seeds[1..].iter().map(|&s| random_adjacency(s, 5)).collect(),
                random_adjacency(seeds[0], 5),
            ).unwrap();
            let literal = cohesion_loss(&set, tau).unwrap();
            let stable = cohesion_loss_via_tape(&set, tau, false).unwrap();
            prop_assert!(literal >= 0.0);
            prop_assert!((literal - stable).abs() < 1e-9 * literal.max(1.0));
        }

        #[test]
        fn cohesion_is_permutation_invariant(seeds in prop::collection::vec(0u64..10_000, 4)) {
            let stat = random_adjacency(seeds[0], 4);
            let dynamic: Vec<_> = seeds[1..].iter().map(|&s| random_adjacency(s, 4)).collect();
            let mut reversed = dynamic.clone();
            reversed.reverse();
            let a = cohesion_loss(&GraphSet::new(dynamic, stat.clone()).unwrap(), 1.0).unwrap();
            let b = cohesion_loss(&GraphSet::new(reversed, stat).unwrap(), 1.0).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn homogeneous_case_exceeds_uniform(k in 2usize..6, c in 0.05f64..2.0) {
            // Static identity, dynamic graphs equal with one off-diagonal pair
            // set so that ‖Aˢ − A‖²_F = c².
            let n = 3;
            let off = (c * c / 2.0).sqrt();
            let stat = AdjacencyMatrix::new(Matrix::identity(n)).unwrap();
            let mut d = Matrix::identity(n);
            d.set(0, 1, off);
            d.set(1, 0, off);
            prop_assume!(off <= 1.0);
            let dynamic = AdjacencyMatrix::new(d).unwrap();
            let set = GraphSet::new(vec![dynamic; k], stat).unwrap();
            let l = cohesion_loss(&set, 1.0).unwrap();
            let kf = k as f64;
            let closed = kf * (1.0 + (kf - 1.0) * (c * c).exp()).ln();
            prop_assert!((l - closed).abs() < 1e-9);
            prop_assert!(l > kf * kf.ln());
        }

        #[test]
        fn simple_cohesion_zero_iff_all_equal(seeds in prop::collection::vec(0u64..10_000, 3)) {
            let stat = random_adjacency(seeds[0], 4);
            let collapsed = GraphSet::new(vec![stat.clone(); 2], stat.clone()).unwrap();
            prop_assert_eq!(cohesion_loss_simple(&collapsed).unwrap(), 0.0);
            let other = random_adjacency(seeds[1], 4);
            prop_assume!(other != stat);
            let mixed = GraphSet::new(vec![stat.clone(), other], stat).unwrap();
            prop_assert!(cohesion_loss_simple(&mixed).unwrap() > 0.0);
        }
    }
}
