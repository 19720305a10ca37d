//! Matrix-level reverse-mode differentiation.
//!
//! A [`Tape`] records every operation as it is evaluated. Calling
//! [`Tape::backward`] on a `1×1` output walks the record in reverse and
//! produces the gradient of that output with respect to every node. Nodes
//! created with [`Tape::param`] are the ones reported back by name.
//!
//! The tape also tracks where non-smooth operations (ReLU, clamp) sit relative
//! to their kinks: [`Tape::kink_margin`] is the smallest distance of any such
//! input from a kink and [`Tape::activation_signature`] hashes the on/off
//! pattern, so a finite-difference check can tell when a perturbation crossed
//! a kink.

use crate::error::{Error, Result};
use crate::matrix::{inverse_sqrt_degrees, Matrix};
use crate::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(String),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    AddRowBias(Var, Var),
    Relu(Var),
    Clamp01(Var),
    RowNormalize { input: Var, denominators: Vec<f64>, guarded: Vec<bool> },
    SymNormalize { input: Var, inv_sqrt: Vec<f64> },
    ColSlice { input: Var, start: usize },
    Transpose(Var),
    SumSquares(Var),
    Mean(Var),
    Sum(Vec<Var>),
    LogSumExp { inputs: Vec<Var>, scale: f64 },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    signature: u64,
    kink_margin: f64,
    guarded_rows: usize,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of one scalar output with respect to every tape node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            signature: FNV_OFFSET,
            kink_margin: f64::INFINITY,
            guarded_rows: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Matrix {
        &self.nodes[var.0].value
    }

    pub fn scalar(&self, var: Var) -> f64 {
        let v = self.value(var);
        debug_assert_eq!(v.shape(), (1, 1));
        v.get(0, 0)
    }

    /// Smallest distance from any ReLU/clamp input to its kink.
    pub fn kink_margin(&self) -> f64 {
        self.kink_margin
    }

    /// Hash of every ReLU/clamp on/off decision made so far.
    pub fn activation_signature(&self) -> u64 {
        self.signature
    }

    /// Rows that hit the zero-norm guard in [`Tape::row_normalize`].
    pub fn guarded_rows(&self) -> usize {
        self.guarded_rows
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn record_activation(&mut self, bits: impl Iterator<Item = (u8, f64)>) {
        for (bit, margin) in bits {
            self.signature = (self.signature ^ bit as u64).wrapping_mul(FNV_PRIME);
            if margin < self.kink_margin {
                self.kink_margin = margin;
            }
        }
    }

    /// A constant input; no gradient is reported for it.
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, name: impl Into<String>, value: Matrix) -> Var {
        self.push(value, Op::Param(name.into()))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul_t(self.value(b))?;
        Ok(self.push(v, Op::MatMulT(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let v = self.value(a).add_row_bias(self.value(bias))?;
        Ok(self.push(v, Op::AddRowBias(a, bias)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let input = self.value(a);
        let v = input.relu();
        let bits: Vec<(u8, f64)> = input
            .data()
            .iter()
            .map(|&x| (u8::from(x > 0.0), x.abs()))
            .collect();
        self.record_activation(bits.into_iter());
        self.push(v, Op::Relu(a))
    }

    /// Elementwise clamp into `[0, 1]`.
    pub fn clamp01(&mut self, a: Var) -> Var {
        let input = self.value(a);
        let v = input.map(|x| x.clamp(0.0, 1.0));
        let bits: Vec<(u8, f64)> = input
            .data()
            .iter()
            .map(|&x| {
                let state = if x <= 0.0 {
                    0
                } else if x >= 1.0 {
                    2
                } else {
                    1
                };
                (state, x.abs().min((x - 1.0).abs()))
            })
            .collect();
        self.record_activation(bits.into_iter());
        self.push(v, Op::Clamp01(a))
    }

    /// Row-wise division by the Euclidean norm, with `eps` standing in for
    /// norms below `eps`.
    pub fn row_normalize(&mut self, a: Var, eps: f64) -> Var {
        let input = self.value(a);
        let (v, guarded_count) = input.row_normalize(eps);
        let mut denominators = Vec::with_capacity(input.rows());
        let mut guarded = Vec::with_capacity(input.rows());
        for r in 0..input.rows() {
            let norm = input.row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
            guarded.push(norm < eps);
            denominators.push(norm.max(eps));
        }
        self.guarded_rows += guarded_count;
        self.push(
            v,
            Op::RowNormalize {
                input: a,
                denominators,
                guarded,
            },
        )
    }

    /// `D^{-1/2} A D^{-1/2}` with row-sum degrees.
    pub fn sym_normalize(&mut self, a: Var) -> Result<Var> {
        let input = self.value(a);
        let v = input.sym_normalize()?;
        let inv_sqrt = inverse_sqrt_degrees(input);
        Ok(self.push(v, Op::SymNormalize { input: a, inv_sqrt }))
    }

    pub fn col_slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(a).col_slice(start, len)?;
        Ok(self.push(v, Op::ColSlice { input: a, start }))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    /// Squared Frobenius norm as a `1×1` node.
    pub fn sum_squares(&mut self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).sum_squares());
        self.push(v, Op::SumSquares(a))
    }

    /// Mean of all entries as a `1×1` node.
    pub fn mean(&mut self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).mean());
        self.push(v, Op::Mean(a))
    }

    /// Elementwise sum of equally shaped nodes.
    pub fn sum(&mut self, vars: &[Var]) -> Result<Var> {
        let first = vars
            .first()
            .ok_or_else(|| Error::InvalidShape("sum of zero terms".into()))?;
        let mut acc = self.value(*first).clone();
        for v in &vars[1..] {
            let other = self.value(*v);
            acc.check_same(other, "sum")?;
            acc.add_assign(other);
        }
        Ok(self.push(acc, Op::Sum(vars.to_vec())))
    }

    /// `ln Σ_j exp(scale · x_j)` over `1×1` nodes.
    pub fn log_sum_exp(&mut self, vars: &[Var], scale: f64) -> Result<Var> {
        if vars.is_empty() {
            return Err(Error::InvalidShape("log-sum-exp of zero terms".into()));
        }
        let xs: Vec<f64> = vars
            .iter()
            .map(|v| {
                let m = self.value(*v);
                if m.shape() != (1, 1) {
                    Err(Error::InvalidShape(format!(
                        "log-sum-exp expects 1x1 terms, got {:?}",
                        m.shape()
                    )))
                } else {
                    Ok(scale * m.get(0, 0))
                }
            })
            .collect::<Result<_>>()?;
        let v = Matrix::scalar(log_sum_exp(&xs));
        Ok(self.push(
            v,
            Op::LogSumExp {
                inputs: vars.to_vec(),
                scale,
            },
        ))
    }

    /// Reverse sweep from a `1×1` output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.shape() != (1, 1) {
            return Err(Error::InvalidShape(format!(
                "backward needs a scalar output, got {:?}",
                out.shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Matrix::scalar(1.0));

        fn accumulate(grads: &mut [Option<Matrix>], var: Var, g: Matrix) {
            match &mut grads[var.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b))?;
                    let gb = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.matmul(self.value(*b))?;
                    let gb = g.t_matmul(self.value(*a))?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.scale(-1.0));
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.scale(*s)),
                Op::AddRowBias(a, bias) => {
                    accumulate(&mut grads, *bias, g.column_sums());
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let mut ga = g.clone();
                    for (gv, &xv) in ga.data_mut().iter_mut().zip(x.data()) {
                        if xv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Clamp01(a) => {
                    let x = self.value(*a);
                    let mut ga = g.clone();
                    for (gv, &xv) in ga.data_mut().iter_mut().zip(x.data()) {
                        if xv <= 0.0 || xv >= 1.0 {
                            *gv = 0.0;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::RowNormalize {
                    input,
                    denominators,
                    guarded,
                } => {
                    // y = x/‖x‖  ⇒  ∂x = (g − y·⟨y, g⟩)/‖x‖
                    let y = &node.value;
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let den = denominators[r];
                        let gr = g.row(r);
                        let out = ga.row_mut(r);
                        if guarded[r] {
                            for (o, gv) in out.iter_mut().zip(gr) {
                                *o = gv / den;
                            }
                        } else {
                            let yr = y.row(r);
                            let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                            for ((o, gv), yv) in out.iter_mut().zip(gr).zip(yr) {
                                *o = (gv - yv * dot) / den;
                            }
                        }
                    }
                    accumulate(&mut grads, *input, ga);
                }
                Op::SymNormalize { input, inv_sqrt } => {
                    let a = self.value(*input);
                    let n = a.rows();
                    let mut ga = Matrix::zeros(n, n);
                    // ∂/∂s_i of Σ G_ij s_i A_ij s_j, counting i as both row and column.
                    let mut g_s = vec![0.0; n];
                    for i in 0..n {
                        for j in 0..n {
                            let gij = g.get(i, j);
                            let aij = a.get(i, j);
                            ga.set(i, j, gij * inv_sqrt[i] * inv_sqrt[j]);
                            g_s[i] += gij * aij * inv_sqrt[j];
                            g_s[j] += gij * aij * inv_sqrt[i];
                        }
                    }
                    for i in 0..n {
                        // s = deg^{-1/2}  ⇒  ds/ddeg = -½ s³
                        let s = inv_sqrt[i];
                        let g_deg = -0.5 * s * s * s * g_s[i];
                        if g_deg != 0.0 {
                            for v in ga.row_mut(i) {
                                *v += g_deg;
                            }
                        }
                    }
                    accumulate(&mut grads, *input, ga);
                }
                Op::ColSlice { input, start } => {
                    let x = self.value(*input);
                    let mut ga = Matrix::zeros(x.rows(), x.cols());
                    let len = g.cols();
                    for r in 0..x.rows() {
                        ga.row_mut(r)[*start..start + len].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *input, ga);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::SumSquares(a) => {
                    let s = 2.0 * g.get(0, 0);
                    accumulate(&mut grads, *a, self.value(*a).scale(s));
                }
                Op::Mean(a) => {
                    let x = self.value(*a);
                    let s = g.get(0, 0) / x.len() as f64;
                    accumulate(&mut grads, *a, Matrix::filled(x.rows(), x.cols(), s));
                }
                Op::Sum(vars) => {
                    for v in vars {
                        accumulate(&mut grads, *v, g.clone());
                    }
                }
                Op::LogSumExp { inputs, scale } => {
                    let xs: Vec<f64> = inputs
                        .iter()
                        .map(|v| scale * self.value(*v).get(0, 0))
                        .collect();
                    let lse = node.value.get(0, 0);
                    let upstream = g.get(0, 0);
                    for (v, x) in inputs.iter().zip(xs) {
                        let weight = (x - lse).exp();
                        accumulate(&mut grads, *v, Matrix::scalar(upstream * scale * weight));
                    }
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Collects parameter gradients into a store laid out like `template`.
    /// Parameters absent from the tape (or unreached) get zeros.
    pub fn param_grads(&self, grads: &Gradients, template: &ParamStore) -> Result<ParamStore> {
        let mut out = template.zeros_like();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Param(name) = &node.op {
                if let Some(g) = grads.grads.get(idx).and_then(Option::as_ref) {
                    let slot = out.get_mut(name).ok_or_else(|| {
                        Error::KeyMismatch(format!("tape parameter `{name}` not in store"))
                    })?;
                    slot.check_same(g, "param grad")?;
                    slot.add_assign(g);
                }
            }
        }
        Ok(out)
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
