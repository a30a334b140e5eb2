//! Reverse-mode differentiation over a linear tape.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! [`Graph::backward`] replays the tape in reverse, returning gradients for
//! every node that depends on a trainable parameter or a grad-requiring leaf,
//! and accumulating parameter gradients into the [`ParamStore`].

use std::sync::atomic::{AtomicU64, Ordering};

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Handle to a node in a specific graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    graph: u64,
    idx: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(usize, usize),
    MatMulBt(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Gelu(usize),
    Softmax(usize),
    LogSumExp(usize),
    Gather { x: usize, idx: Vec<usize> },
    Scatter { x: usize, idx: Vec<usize> },
    SliceCols { x: usize, start: usize },
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    LayerNorm { x: usize, gain: usize, bias: usize, xhat: Vec<f64>, inv_std: Vec<f64> },
    Combine { outs: Vec<usize>, lses: Vec<usize>, weights: Vec<Vec<f64>> },
    CrossEntropy { logits: usize, targets: Vec<usize>, mask: Vec<bool>, probs: Vec<f64> },
    Sum(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Grads {
    graph: u64,
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn of(&self, v: Var) -> Option<&Tensor> {
        if v.graph != self.graph {
            return None;
        }
        self.grads.get(v.idx).and_then(|g| g.as_ref())
    }
}

#[derive(Debug)]
pub struct Graph {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var {
            graph: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    fn ix(&self, v: Var) -> usize {
        assert_eq!(v.graph, self.id, "variable belongs to a different graph");
        v.idx
    }

    fn ng(&self, idx: usize) -> bool {
        self.nodes[idx].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[self.ix(v)].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; gradients are reported for it only if `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        self.push(p.value.clone(), Op::Param(id), p.trainable)
    }

    pub fn param_named(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        Ok(self.param(store, store.expect_id(name)?))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ai, bi) = (self.ix(a), self.ix(b));
        let out = self.nodes[ai].value.matmul(&self.nodes[bi].value);
        let ng = self.ng(ai) || self.ng(bi);
        self.push(out, Op::MatMul(ai, bi), ng)
    }

    /// `a [m×k] · bᵀ` for `b [n×k]`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let (ai, bi) = (self.ix(a), self.ix(b));
        let out = matmul_bt(&self.nodes[ai].value, &self.nodes[bi].value);
        let ng = self.ng(ai) || self.ng(bi);
        self.push(out, Op::MatMulBt(ai, bi), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ai, bi) = (self.ix(a), self.ix(b));
        let (x, y) = (&self.nodes[ai].value, &self.nodes[bi].value);
        assert_eq!(x.shape(), y.shape(), "add shape mismatch");
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let out = Tensor::from_parts(x.shape().to_vec(), data);
        let ng = self.ng(ai) || self.ng(bi);
        self.push(out, Op::Add(ai, bi), ng)
    }

    /// Adds the vector `b [d]` to every row of `a [n×d]`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (ai, bi) = (self.ix(a), self.ix(b));
        let (x, bias) = (&self.nodes[ai].value, &self.nodes[bi].value);
        let d = x.cols();
        assert_eq!(bias.len(), d, "bias width mismatch");
        let mut data = x.data().to_vec();
        for row in data.chunks_mut(d) {
            for (v, b) in row.iter_mut().zip(bias.data()) {
                *v += b;
            }
        }
        let out = Tensor::from_parts(x.shape().to_vec(), data);
        let ng = self.ng(ai) || self.ng(bi);
        self.push(out, Op::AddRow(ai, bi), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ai, bi) = (self.ix(a), self.ix(b));
        let (x, y) = (&self.nodes[ai].value, &self.nodes[bi].value);
        assert_eq!(x.shape(), y.shape(), "mul shape mismatch");
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::from_parts(x.shape().to_vec(), data);
        let ng = self.ng(ai) || self.ng(bi);
        self.push(out, Op::Mul(ai, bi), ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let ai = self.ix(a);
        let out = self.nodes[ai].value.map(|v| v * c);
        let ng = self.ng(ai);
        self.push(out, Op::Scale(ai, c), ng)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let ai = self.ix(a);
        let out = self.nodes[ai].value.map(|x| {
            let u = GELU_C * (x + 0.044715 * x * x * x);
            0.5 * x * (1.0 + u.tanh())
        });
        let ng = self.ng(ai);
        self.push(out, Op::Gelu(ai), ng)
    }

    /// Row-wise softmax over the last axis. `mask[i*cols + j] == false`
    /// excludes key `j` from row `i`; a fully masked row yields zeros.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<&[bool]>) -> Var {
        let ai = self.ix(a);
        let x = &self.nodes[ai].value;
        let c = x.cols();
        if let Some(m) = mask {
            assert_eq!(m.len(), x.len(), "mask size mismatch");
        }
        let mut out = vec![0.0; x.len()];
        for (r, (xr, or)) in x.data().chunks(c).zip(out.chunks_mut(c)).enumerate() {
            let allowed = |j: usize| mask.is_none_or(|m| m[r * c + j]);
            let max = (0..c)
                .filter(|&j| allowed(j))
                .map(|j| xr[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut sum = 0.0;
            for j in (0..c).filter(|&j| allowed(j)) {
                let e = (xr[j] - max).exp();
                or[j] = e;
                sum += e;
            }
            or.iter_mut().for_each(|v| *v /= sum);
        }
        let out = Tensor::from_parts(x.shape().to_vec(), out);
        let ng = self.ng(ai);
        self.push(out, Op::Softmax(ai), ng)
    }

    /// Row-wise log-sum-exp of `a [n×m]`, giving `[n]`.
    pub fn logsumexp_rows(&mut self, a: Var) -> Var {
        let ai = self.ix(a);
        let x = &self.nodes[ai].value;
        let c = x.cols();
        let data: Vec<f64> = x.data().chunks(c).map(logsumexp).collect();
        let out = Tensor::from_parts(vec![data.len()], data);
        let ng = self.ng(ai);
        self.push(out, Op::LogSumExp(ai), ng)
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let ai = self.ix(a);
        assert!(!idx.is_empty(), "gather of zero rows");
        let out = self.nodes[ai].value.select_rows(idx);
        let ng = self.ng(ai);
        self.push(out, Op::Gather { x: ai, idx: idx.to_vec() }, ng)
    }

    /// Places row `k` of `a` at row `idx[k]` of a zero `[n × cols]` tensor.
    /// Works for 1-D inputs too (each value is a row of width 1).
    pub fn scatter_rows(&mut self, a: Var, idx: &[usize], n: usize) -> Var {
        let ai = self.ix(a);
        let x = &self.nodes[ai].value;
        let one_d = x.shape().len() == 1;
        let c = if one_d { 1 } else { x.cols() };
        assert_eq!(x.len(), idx.len() * c, "scatter index count mismatch");
        let mut out = vec![0.0; n * c];
        for (k, &i) in idx.iter().enumerate() {
            out[i * c..(i + 1) * c].copy_from_slice(&x.data()[k * c..(k + 1) * c]);
        }
        let shape = if one_d { vec![n] } else { vec![n, c] };
        let ng = self.ng(ai);
        self.push(Tensor::from_parts(shape, out), Op::Scatter { x: ai, idx: idx.to_vec() }, ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let ai = self.ix(a);
        let x = &self.nodes[ai].value;
        let (r, c) = (x.rows(), x.cols());
        assert!(start + len <= c, "column slice out of range");
        let mut out = Vec::with_capacity(r * len);
        for row in x.data().chunks(c) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let ng = self.ng(ai);
        self.push(Tensor::from_parts(vec![r, len], out), Op::SliceCols { x: ai, start }, ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let idx: Vec<usize> = parts.iter().map(|&p| self.ix(p)).collect();
        let r = self.nodes[idx[0]].value.rows();
        let total: usize = idx.iter().map(|&i| self.nodes[i].value.cols()).sum();
        let mut out = Vec::with_capacity(r * total);
        for row in 0..r {
            for &i in &idx {
                let t = &self.nodes[i].value;
                assert_eq!(t.rows(), r, "concat_cols row mismatch");
                out.extend_from_slice(t.row(row));
            }
        }
        let ng = idx.iter().any(|&i| self.ng(i));
        self.push(Tensor::from_parts(vec![r, total], out), Op::ConcatCols(idx), ng)
    }

    /// Stacks matrices vertically; 1-D inputs are joined into one longer vector.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let idx: Vec<usize> = parts.iter().map(|&p| self.ix(p)).collect();
        if idx.iter().all(|&i| self.nodes[i].value.shape().len() == 1) {
            let data: Vec<f64> = idx.iter().flat_map(|&i| self.nodes[i].value.data().iter().copied()).collect();
            let ng = idx.iter().any(|&i| self.ng(i));
            return self.push(Tensor::from_parts(vec![data.len()], data), Op::ConcatRows(idx), ng);
        }
        let c = self.nodes[idx[0]].value.cols();
        let mut out = Vec::new();
        let mut rows = 0;
        for &i in &idx {
            let t = &self.nodes[i].value;
            assert_eq!(t.cols(), c, "concat_rows width mismatch");
            out.extend_from_slice(t.data());
            rows += t.rows();
        }
        let ng = idx.iter().any(|&i| self.ng(i));
        self.push(Tensor::from_parts(vec![rows, c], out), Op::ConcatRows(idx), ng)
    }

    /// Layer normalization over the last axis with learned gain and bias.
    pub fn layer_norm(&mut self, a: Var, gain: Var, bias: Var) -> Var {
        let (ai, gi, bi) = (self.ix(a), self.ix(gain), self.ix(bias));
        let x = &self.nodes[ai].value;
        let (g, b) = (&self.nodes[gi].value, &self.nodes[bi].value);
        let d = x.cols();
        assert_eq!(g.len(), d);
        assert_eq!(b.len(), d);
        let mut out = vec![0.0; x.len()];
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = Vec::with_capacity(x.rows());
        for (r, row) in x.data().chunks(d).enumerate() {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(inv);
            for j in 0..d {
                let h = (row[j] - mean) * inv;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g.data()[j] + b.data()[j];
            }
        }
        let out = Tensor::from_parts(x.shape().to_vec(), out);
        let ng = self.ng(ai) || self.ng(gi) || self.ng(bi);
        self.push(
            out,
            Op::LayerNorm { x: ai, gain: gi, bias: bi, xhat, inv_std },
            ng,
        )
    }

    /// Mixes per-branch outputs `outs[b] [n×d]` with weights proportional to
    /// `exp(lses[b][i])` among branches where `active[b][i]` holds. Positions
    /// active in no branch produce zero.
    pub fn combine_branches(&mut self, outs: &[Var], lses: &[Var], active: &[Vec<bool>]) -> Var {
        assert!(!outs.is_empty() && outs.len() == lses.len() && lses.len() == active.len());
        let oi: Vec<usize> = outs.iter().map(|&v| self.ix(v)).collect();
        let li: Vec<usize> = lses.iter().map(|&v| self.ix(v)).collect();
        let n = self.nodes[oi[0]].value.rows();
        let d = self.nodes[oi[0]].value.cols();
        let weights = branch_weights(
            &li.iter().map(|&i| self.nodes[i].value.data()).collect::<Vec<_>>(),
            active,
            n,
        );
        let mut out = vec![0.0; n * d];
        for (b, &o) in oi.iter().enumerate() {
            let ob = &self.nodes[o].value;
            for i in 0..n {
                let w = weights[b][i];
                if w == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out[i * d + j] += w * ob.data()[i * d + j];
                }
            }
        }
        let ng = oi.iter().chain(&li).any(|&i| self.ng(i));
        self.push(
            Tensor::from_parts(vec![n, d], out),
            Op::Combine { outs: oi, lses: li, weights },
            ng,
        )
    }

    /// Mean negative log-likelihood of `targets` under row-softmax of
    /// `logits [T×V]`, over rows where `mask` is true.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let li = self.ix(logits);
        let x = &self.nodes[li].value;
        let (t, v) = (x.rows(), x.cols());
        if targets.len() != t || mask.len() != t {
            return Err(Error::usage(format!(
                "cross_entropy: {t} rows but {} targets / {} mask entries",
                targets.len(),
                mask.len()
            )));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::usage("cross_entropy: every position is masked out"));
        }
        if let Some(bad) = targets.iter().zip(mask).find(|(&tg, &m)| m && tg >= v) {
            return Err(Error::usage(format!("target id {} outside vocab {v}", bad.0)));
        }
        let mut probs = vec![0.0; t * v];
        let mut loss = 0.0;
        for r in 0..t {
            if !mask[r] {
                continue;
            }
            let row = x.row(r);
            let lse = logsumexp(row);
            for j in 0..v {
                probs[r * v + j] = (row[j] - lse).exp();
            }
            loss -= row[targets[r]] - lse;
        }
        loss /= count as f64;
        let ng = self.ng(li);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy { logits: li, targets: targets.to_vec(), mask: mask.to_vec(), probs },
            ng,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let ai = self.ix(a);
        let s = self.nodes[ai].value.data().iter().sum();
        let ng = self.ng(ai);
        self.push(Tensor::scalar(s), Op::Sum(ai), ng)
    }

    /// Reverse pass from a scalar `loss`. Parameter gradients are added to
    /// `store` for trainable parameters only.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Grads> {
        let grads = self.backward_grads(loss)?;
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads.grads[i]) {
                let p = store.get_mut(*id);
                if p.trainable {
                    p.grad.add_assign(g);
                }
            }
        }
        Ok(grads)
    }

    /// Reverse pass without touching any parameter store.
    pub fn backward_grads(&self, loss: Var) -> Result<Grads> {
        if loss.graph != self.id || loss.idx >= self.nodes.len() {
            return Err(Error::usage("backward on a value detached from this graph"));
        }
        if self.nodes[loss.idx].value.len() != 1 {
            return Err(Error::usage("backward needs a scalar loss"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.idx] = Some(Tensor::filled(self.nodes[loss.idx].value.shape(), 1.0));
        for i in (0..=loss.idx).rev() {
            let Some(g) = grads[i].take() else { continue };
            if self.nodes[i].needs_grad {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if !n.needs_grad {
                grads[i] = None;
            }
        }
        Ok(Grads { graph: self.id, grads })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |k: usize| &self.nodes[k].value;
        let acc = |k: usize, t: Tensor, grads: &mut [Option<Tensor>]| {
            if !self.nodes[k].needs_grad {
                return;
            }
            match &mut grads[k] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match &self.nodes[i].op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                if self.ng(a) {
                    acc(a, matmul_bt(g, val(b)), grads);
                }
                if self.ng(b) {
                    acc(b, val(a).transpose().matmul(g), grads);
                }
            }
            Op::MatMulBt(a, b) => {
                let (a, b) = (*a, *b);
                if self.ng(a) {
                    acc(a, g.matmul(val(b)), grads);
                }
                if self.ng(b) {
                    acc(b, g.transpose().matmul(val(a)), grads);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone(), grads);
                acc(*b, g.clone(), grads);
            }
            Op::AddRow(a, b) => {
                acc(*a, g.clone(), grads);
                let d = g.cols();
                let mut gb = vec![0.0; d];
                for row in g.data().chunks(d) {
                    for (s, v) in gb.iter_mut().zip(row) {
                        *s += v;
                    }
                }
                acc(*b, Tensor::from_parts(val(*b).shape().to_vec(), gb), grads);
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                let ga = zip_map(g, val(b), |x, y| x * y);
                let gb = zip_map(g, val(a), |x, y| x * y);
                acc(a, ga, grads);
                acc(b, gb, grads);
            }
            Op::Scale(a, c) => acc(*a, g.map(|v| v * c), grads),
            Op::Gelu(a) => {
                let d = zip_map(g, val(*a), |gv, x| {
                    let u = GELU_C * (x + 0.044715 * x * x * x);
                    let t = u.tanh();
                    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                    gv * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
                });
                acc(*a, d, grads);
            }
            Op::Softmax(a) => {
                let y = &self.nodes[i].value;
                let c = y.cols();
                let mut d = vec![0.0; y.len()];
                for ((yr, gr), dr) in y.data().chunks(c).zip(g.data().chunks(c)).zip(d.chunks_mut(c)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..c {
                        dr[j] = yr[j] * (gr[j] - dot);
                    }
                }
                acc(*a, Tensor::from_parts(y.shape().to_vec(), d), grads);
            }
            Op::LogSumExp(a) => {
                let x = val(*a);
                let c = x.cols();
                let lse = &self.nodes[i].value;
                let mut d = vec![0.0; x.len()];
                for (r, (xr, dr)) in x.data().chunks(c).zip(d.chunks_mut(c)).enumerate() {
                    for j in 0..c {
                        dr[j] = (xr[j] - lse.data()[r]).exp() * g.data()[r];
                    }
                }
                acc(*a, Tensor::from_parts(x.shape().to_vec(), d), grads);
            }
            Op::Gather { x, idx } => {
                let src = val(*x);
                let c = src.cols();
                let mut d = vec![0.0; src.len()];
                for (k, &r) in idx.iter().enumerate() {
                    for j in 0..c {
                        d[r * c + j] += g.data()[k * c + j];
                    }
                }
                acc(*x, Tensor::from_parts(src.shape().to_vec(), d), grads);
            }
            Op::Scatter { x, idx } => {
                let src = val(*x);
                let c = if src.shape().len() == 1 { 1 } else { src.cols() };
                let mut d = Vec::with_capacity(src.len());
                for &r in idx {
                    d.extend_from_slice(&g.data()[r * c..(r + 1) * c]);
                }
                acc(*x, Tensor::from_parts(src.shape().to_vec(), d), grads);
            }
            Op::SliceCols { x, start } => {
                let src = val(*x);
                let (c, len) = (src.cols(), g.cols());
                let mut d = vec![0.0; src.len()];
                for (r, gr) in g.data().chunks(len).enumerate() {
                    d[r * c + start..r * c + start + len].copy_from_slice(gr);
                }
                acc(*x, Tensor::from_parts(src.shape().to_vec(), d), grads);
            }
            Op::ConcatCols(parts) => {
                let total = g.cols();
                let mut off = 0;
                for &p in parts {
                    let w = val(p).cols();
                    let mut d = Vec::with_capacity(val(p).len());
                    for row in g.data().chunks(total) {
                        d.extend_from_slice(&row[off..off + w]);
                    }
                    acc(p, Tensor::from_parts(val(p).shape().to_vec(), d), grads);
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = val(p).len();
                    let d = g.data()[off..off + n].to_vec();
                    acc(p, Tensor::from_parts(val(p).shape().to_vec(), d), grads);
                    off += n;
                }
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let gamma = val(*gain);
                let d = gamma.len();
                let rows = g.rows();
                let mut dx = vec![0.0; g.len()];
                let mut dg = vec![0.0; d];
                let mut db = vec![0.0; d];
                for r in 0..rows {
                    let gr = &g.data()[r * d..(r + 1) * d];
                    let hr = &xhat[r * d..(r + 1) * d];
                    let mut sum_dh = 0.0;
                    let mut sum_dh_h = 0.0;
                    for j in 0..d {
                        let dh = gr[j] * gamma.data()[j];
                        sum_dh += dh;
                        sum_dh_h += dh * hr[j];
                        dg[j] += gr[j] * hr[j];
                        db[j] += gr[j];
                    }
                    let inv = inv_std[r];
                    for j in 0..d {
                        let dh = gr[j] * gamma.data()[j];
                        dx[r * d + j] = inv / d as f64 * (d as f64 * dh - sum_dh - hr[j] * sum_dh_h);
                    }
                }
                acc(*x, Tensor::from_parts(g.shape().to_vec(), dx), grads);
                acc(*gain, Tensor::from_parts(gamma.shape().to_vec(), dg), grads);
                acc(*bias, Tensor::from_parts(val(*bias).shape().to_vec(), db), grads);
            }
            Op::Combine { outs, lses, weights } => {
                let (n, d) = (g.rows(), g.cols());
                // <g_i, out_b_i> per branch and position
                let dots: Vec<Vec<f64>> = outs
                    .iter()
                    .map(|&o| {
                        (0..n)
                            .map(|r| g.row(r).iter().zip(val(o).row(r)).map(|(p, q)| p * q).sum())
                            .collect()
                    })
                    .collect();
                for (b, &o) in outs.iter().enumerate() {
                    let mut d_out = vec![0.0; n * d];
                    let mut d_lse = vec![0.0; n];
                    for r in 0..n {
                        let w = weights[b][r];
                        if w == 0.0 {
                            continue;
                        }
                        for j in 0..d {
                            d_out[r * d + j] = w * g.data()[r * d + j];
                        }
                        let mixed: f64 = (0..outs.len()).map(|q| weights[q][r] * dots[q][r]).sum();
                        d_lse[r] = w * (dots[b][r] - mixed);
                    }
                    acc(o, Tensor::from_parts(vec![n, d], d_out), grads);
                    acc(lses[b], Tensor::from_parts(val(lses[b]).shape().to_vec(), d_lse), grads);
                }
            }
            Op::CrossEntropy { logits, targets, mask, probs } => {
                let x = val(*logits);
                let (t, v) = (x.rows(), x.cols());
                let count = mask.iter().filter(|&&m| m).count() as f64;
                let scale = g.item() / count;
                let mut d = vec![0.0; t * v];
                for r in 0..t {
                    if !mask[r] {
                        continue;
                    }
                    for j in 0..v {
                        d[r * v + j] = probs[r * v + j] * scale;
                    }
                    d[r * v + targets[r]] -= scale;
                }
                acc(*logits, Tensor::from_parts(vec![t, v], d), grads);
            }
            Op::Sum(a) => {
                let s = g.item();
                acc(*a, Tensor::filled(val(*a).shape(), s), grads);
            }
        }
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

pub(crate) fn logsumexp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `a [m×k] · bᵀ` where `b` is `[n×k]`.
pub(crate) fn matmul_bt(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.rows(), a.cols());
    let (n, k2) = (b.rows(), b.cols());
    assert_eq!(k, k2, "matmul_bt inner dimension mismatch");
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let ar = &a.data()[i * k..(i + 1) * k];
        for j in 0..n {
            let br = &b.data()[j * k..(j + 1) * k];
            out[i * n + j] = ar.iter().zip(br).map(|(x, y)| x * y).sum();
        }
    }
    Tensor::from_parts(vec![m, n], out)
}

/// Normalized branch weights `w[b][i] ∝ exp(lse[b][i])` over active branches.
pub(crate) fn branch_weights(lses: &[&[f64]], active: &[Vec<bool>], n: usize) -> Vec<Vec<f64>> {
    let nb = lses.len();
    let mut w = vec![vec![0.0; n]; nb];
    for i in 0..n {
        let max = (0..nb)
            .filter(|&b| active[b][i])
            .map(|b| lses[b][i])
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut total = 0.0;
        for b in (0..nb).filter(|&b| active[b][i]) {
            let e = (lses[b][i] - max).exp();
            w[b][i] = e;
            total += e;
        }
        for wb in w.iter_mut() {
            wb[i] /= total;
        }
    }
    w
}
