//! Tape-based reverse-mode differentiation over [`DenseMatrix`] values.
//!
//! A [`Tape`] records every primitive applied during a forward pass together
//! with whatever it needs for the backward pass (dropout masks, max-pool
//! winners, loss gradients). [`Tape::gradients`] then walks the records in
//! exact reverse order. An inference tape ([`Tape::inference`]) runs the
//! same forward kernels but saves nothing, so its values are bit-identical
//! to a recording tape's.
//!
//! Sparse operators and graphs are borrowed for the lifetime of the tape.

mod gradcheck;
mod param;

pub use gradcheck::{grad_check, GradCheckReport, GRAD_CHECK_EPS};
pub use param::{adam_step, glorot_init, Adam, ParamSet, Parameter};

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{DenseMatrix, Graph, SparseMatrix};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<'g> {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    Spmm(&'g SparseMatrix, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Dropout(Var, Vec<f64>),
    Concat(Var, Var),
    NeighborMax(Var, Vec<u32>),
    /// Loss node; the saved matrix is d(loss)/d(logits).
    Loss(Var, DenseMatrix),
}

struct Node<'g> {
    value: DenseMatrix,
    op: Op<'g>,
    requires_grad: bool,
}

const NO_WINNER: u32 = u32::MAX;

#[cfg(test)]
thread_local! {
    /// Mutation hook: scales the ReLU backward rule so tests can confirm
    /// that gradient checking notices a wrong derivative.
    pub(crate) static CORRUPT_RELU_BACKWARD: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

pub struct Tape<'g> {
    nodes: Vec<Node<'g>>,
    recording: bool,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'g> Tape<'g> {
    /// A tape that records for a backward pass.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            recording: true,
        }
    }

    /// A forward-only tape.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: DenseMatrix, op: Op<'g>, requires_grad: bool) -> Var {
        let requires_grad = requires_grad && self.recording;
        let op = if self.recording { op } else { Op::Constant };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Loads parameter `index` of `params` as a differentiable leaf.
    pub fn param(&mut self, params: &ParamSet, index: usize) -> Var {
        self.push(params.get(index).value.clone(), Op::Param(index), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn spmm(&mut self, s: &'g SparseMatrix, x: Var) -> Result<Var> {
        let value = s.spmm(self.value(x))?;
        let rg = self.requires(x);
        Ok(self.push(value, Op::Spmm(s, x), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape(
                "mul",
                format!("{:?} vs {:?}", va.shape(), vb.shape()),
            ));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let value = DenseMatrix::from_vec(va.rows(), va.cols(), data)?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// Sums a non-empty list of same-shaped values left to right.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let (&first, rest) = terms
            .split_first()
            .ok_or_else(|| Error::Invalid("add_all of an empty list".into()))?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.requires(x);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        let rg = self.requires(x);
        self.push(value, Op::Sigmoid(x), rg)
    }

    /// Inverted dropout: kept entries are scaled by `1/(1-rate)`. Returns
    /// `x` unchanged when not training or when `rate == 0`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Invalid(format!("dropout rate {rate} not in [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let input = self.value(x);
        let mask: Vec<f64> = (0..input.data().len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep_scale })
            .collect();
        let data = input.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = DenseMatrix::from_vec(input.rows(), input.cols(), data)?;
        let rg = self.requires(x);
        Ok(self.push(value, Op::Dropout(x, mask), rg))
    }

    /// Column-wise concatenation `[a, b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hconcat(self.value(b))?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::Concat(a, b), rg))
    }

    /// Elementwise max over each node's full neighborhood. Nodes without
    /// neighbors aggregate to zero; ties go to the lowest neighbor index.
    pub fn neighbor_max(&mut self, graph: &'g Graph, x: Var) -> Result<Var> {
        let input = self.value(x);
        if input.rows() != graph.num_nodes() {
            return Err(Error::shape(
                "neighbor_max",
                format!("{} nodes vs {:?}", graph.num_nodes(), input.shape()),
            ));
        }
        let cols = input.cols();
        let mut value = DenseMatrix::zeros(input.rows(), cols);
        let mut winners = vec![NO_WINNER; input.rows() * cols];
        for i in 0..graph.num_nodes() {
            let nbrs = graph.neighbors(i);
            let Some(&first) = nbrs.first() else { continue };
            let out = value.row_mut(i);
            out.copy_from_slice(input.row(first));
            let win = &mut winners[i * cols..(i + 1) * cols];
            win.fill(first as u32);
            for &j in &nbrs[1..] {
                for (c, &v) in input.row(j).iter().enumerate() {
                    if v > out[c] {
                        out[c] = v;
                        win[c] = j as u32;
                    }
                }
            }
        }
        let rg = self.requires(x);
        Ok(self.push(value, Op::NeighborMax(x, winners), rg))
    }

    /// Weighted softmax cross-entropy averaged over the masked rows.
    ///
    /// Row `i` contributes `Σ_l w_l·y_il·(logsumexp(z_i) − z_il)`.
    pub fn softmax_xent(
        &mut self,
        logits: Var,
        onehot: &DenseMatrix,
        mask: &[bool],
        class_weights: &[f64],
    ) -> Result<Var> {
        let z = self.value(logits);
        check_loss_inputs("softmax_xent", z, onehot, mask, class_weights)?;
        let count = mask.iter().filter(|&&m| m).count() as f64;
        let mut loss = 0.0;
        let mut grad = DenseMatrix::zeros(z.rows(), z.cols());
        for i in (0..z.rows()).filter(|&i| mask[i]) {
            let row = z.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let lse = max + sum_exp.ln();
            let y = onehot.row(i);
            let mut row_weight = 0.0;
            for l in 0..row.len() {
                let wy = class_weights[l] * y[l];
                loss += wy * (lse - row[l]);
                row_weight += wy;
            }
            if self.recording {
                let g = grad.row_mut(i);
                for l in 0..row.len() {
                    let p = (row[l] - lse).exp();
                    g[l] = (row_weight * p - class_weights[l] * y[l]) / count;
                }
            }
        }
        let value = DenseMatrix::filled(1, 1, loss / count);
        let rg = self.requires(logits);
        Ok(self.push(value, Op::Loss(logits, grad), rg))
    }

    /// Weighted per-entry binary cross-entropy on logits, summed over labels
    /// and averaged over the masked rows. Uses the stable form
    /// `max(z,0) − z·t + ln(1 + e^{−|z|})`.
    pub fn sigmoid_bce(
        &mut self,
        logits: Var,
        targets: &DenseMatrix,
        mask: &[bool],
        class_weights: &[f64],
    ) -> Result<Var> {
        let z = self.value(logits);
        check_loss_inputs("sigmoid_bce", z, targets, mask, class_weights)?;
        let count = mask.iter().filter(|&&m| m).count() as f64;
        let mut loss = 0.0;
        let mut grad = DenseMatrix::zeros(z.rows(), z.cols());
        for i in (0..z.rows()).filter(|&i| mask[i]) {
            let row = z.row(i);
            let t = targets.row(i);
            for l in 0..row.len() {
                let v = row[l];
                loss += class_weights[l] * (v.max(0.0) - v * t[l] + (-v.abs()).exp().ln_1p());
            }
            if self.recording {
                let g = grad.row_mut(i);
                for l in 0..row.len() {
                    g[l] = class_weights[l] * (sigmoid(row[l]) - t[l]) / count;
                }
            }
        }
        let value = DenseMatrix::filled(1, 1, loss / count);
        let rg = self.requires(logits);
        Ok(self.push(value, Op::Loss(logits, grad), rg))
    }

    /// Reverse pass from a scalar `loss`. Returns the gradient of every
    /// recorded value that depends on a parameter.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        if !self.recording {
            return Err(Error::Invalid("backward on an inference tape".into()));
        }
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("loss must be 1x1, got {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(DenseMatrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    if self.requires(*a) {
                        let ga = g.matmul_t(self.value(*b))?;
                        accumulate(&mut grads, *a, ga)?;
                    }
                    if self.requires(*b) {
                        let gb = self.value(*a).t_matmul(&g)?;
                        accumulate(&mut grads, *b, gb)?;
                    }
                }
                Op::Spmm(s, x) => {
                    if self.requires(*x) {
                        accumulate(&mut grads, *x, s.spmm_transpose(&g)?)?;
                    }
                }
                Op::Add(a, b) => {
                    if self.requires(*a) {
                        accumulate(&mut grads, *a, g.clone())?;
                    }
                    if self.requires(*b) {
                        accumulate(&mut grads, *b, g.clone())?;
                    }
                }
                Op::Mul(a, b) => {
                    for (this, other) in [(*a, *b), (*b, *a)] {
                        if self.requires(this) {
                            let data = g
                                .data()
                                .iter()
                                .zip(self.value(other).data())
                                .map(|(gv, o)| gv * o)
                                .collect();
                            let gm = DenseMatrix::from_vec(g.rows(), g.cols(), data)?;
                            accumulate(&mut grads, this, gm)?;
                        }
                    }
                }
                Op::Relu(x) => {
                    #[allow(unused_mut)]
                    let mut slope = 1.0;
                    #[cfg(test)]
                    if CORRUPT_RELU_BACKWARD.with(|c| c.get()) {
                        slope = 1.5;
                    }
                    let input = self.value(*x);
                    let data = g
                        .data()
                        .iter()
                        .zip(input.data())
                        .map(|(gv, &xv)| if xv > 0.0 { gv * slope } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *x, DenseMatrix::from_vec(g.rows(), g.cols(), data)?)?;
                }
                Op::Sigmoid(x) => {
                    let data = g
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .map(|(gv, s)| gv * s * (1.0 - s))
                        .collect();
                    accumulate(&mut grads, *x, DenseMatrix::from_vec(g.rows(), g.cols(), data)?)?;
                }
                Op::Dropout(x, mask) => {
                    let data = g.data().iter().zip(mask).map(|(gv, m)| gv * m).collect();
                    accumulate(&mut grads, *x, DenseMatrix::from_vec(g.rows(), g.cols(), data)?)?;
                }
                Op::Concat(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    if self.requires(*a) {
                        let ga = DenseMatrix::from_fn(g.rows(), ca, |i, j| g.get(i, j));
                        accumulate(&mut grads, *a, ga)?;
                    }
                    if self.requires(*b) {
                        let gb = DenseMatrix::from_fn(g.rows(), cb, |i, j| g.get(i, ca + j));
                        accumulate(&mut grads, *b, gb)?;
                    }
                }
                Op::NeighborMax(x, winners) => {
                    let cols = g.cols();
                    let mut gx = DenseMatrix::zeros(g.rows(), cols);
                    for i in 0..g.rows() {
                        for c in 0..cols {
                            let w = winners[i * cols + c];
                            if w != NO_WINNER {
                                let j = w as usize;
                                gx.set(j, c, gx.get(j, c) + g.get(i, c));
                            }
                        }
                    }
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Loss(x, dlogits) => {
                    accumulate(&mut grads, *x, dlogits.scale(g.get(0, 0)))?;
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Runs [`Tape::gradients`] and adds each parameter's gradient into
    /// `params[i].grad`.
    pub fn backward(&self, loss: Var, params: &mut ParamSet) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (idx, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(p), Some(g)) = (&node.op, &grads.grads[idx]) {
                params.get_mut(*p).grad.add_assign(g)?;
            }
        }
        Ok(())
    }
}

/// Per-value gradients produced by [`Tape::gradients`].
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&DenseMatrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn accumulate(grads: &mut [Option<DenseMatrix>], v: Var, g: DenseMatrix) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn check_loss_inputs(
    op: &'static str,
    logits: &DenseMatrix,
    targets: &DenseMatrix,
    mask: &[bool],
    class_weights: &[f64],
) -> Result<()> {
    if logits.shape() != targets.shape() {
        return Err(Error::shape(
            op,
            format!("logits {:?} vs targets {:?}", logits.shape(), targets.shape()),
        ));
    }
    if mask.len() != logits.rows() {
        return Err(Error::shape(
            op,
            format!("mask length {} vs {} rows", mask.len(), logits.rows()),
        ));
    }
    if class_weights.len() != logits.cols() {
        return Err(Error::shape(
            op,
            format!("{} class weights vs {} labels", class_weights.len(), logits.cols()),
        ));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyMask(op));
    }
    Ok(())
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
