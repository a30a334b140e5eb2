//! Dilated sparse attention.
//!
//! For a branch `(w, r)` and head `h`, the sequence is cut into
//! `ceil(N / w)` segments. Inside each segment the rows at offsets
//! `h mod r, h mod r + r, …` attend densely among themselves; all other rows
//! get nothing from the branch. The last segment is conceptually padded to
//! `w` with masked keys, so it simply contains fewer real rows.

use super::config::Branch;
use crate::error::Result;
use crate::numerics::{Graph, Tensor, Var};

/// Row indices of each segment's attending group.
pub fn branch_groups(n: usize, branch: Branch, head: usize) -> Vec<Vec<usize>> {
    let (w, r) = (branch.segment, branch.dilation);
    let offset = head % r;
    (0..n.div_ceil(w))
        .map(|s| {
            let start = s * w;
            let end = (start + w).min(n);
            (start + offset..end).step_by(r).collect::<Vec<_>>()
        })
        .filter(|g| !g.is_empty())
        .collect()
}

/// Output of one branch for one head.
pub struct BranchOutput {
    /// `[N × head_dim]`, zero on rows the branch does not cover.
    pub out: Var,
    /// `[N]` log of each row's softmax denominator (zero where inactive).
    pub lse: Var,
    pub active: Vec<bool>,
}

/// Dilated attention of one head. `q`, `k`, `v` are `[N × head_dim]`.
pub fn dilated_attention(g: &mut Graph, q: Var, k: Var, v: Var, branch: Branch, head: usize) -> Result<BranchOutput> {
    branch.validate()?;
    let n = g.value(q).rows();
    let dh = g.value(q).cols();
    let scale = 1.0 / (dh as f64).sqrt();
    let groups = branch_groups(n, branch, head);
    let mut active = vec![false; n];
    let mut outs = Vec::with_capacity(groups.len());
    let mut lses = Vec::with_capacity(groups.len());
    let mut all_idx = Vec::with_capacity(n);
    for idx in &groups {
        let (qs, ks, vs) = (g.gather_rows(q, idx), g.gather_rows(k, idx), g.gather_rows(v, idx));
        let raw = g.matmul_bt(qs, ks);
        let scores = g.scale(raw, scale);
        let lse = g.logsumexp_rows(scores);
        let probs = g.softmax_rows(scores, None);
        outs.push(g.matmul(probs, vs));
        lses.push(lse);
        for &i in idx {
            active[i] = true;
        }
        all_idx.extend_from_slice(idx);
    }
    let out_sel = g.concat_rows(&outs);
    let lse_sel = g.concat_rows(&lses);
    let out = g.scatter_rows(out_sel, &all_idx, n);
    let lse = g.scatter_rows(lse_sel, &all_idx, n);
    Ok(BranchOutput { out, lse, active })
}

/// Multi-branch dilated attention for one head, mixing branches by their
/// softmax denominators.
pub fn multi_branch_attention(g: &mut Graph, q: Var, k: Var, v: Var, branches: &[Branch], head: usize) -> Result<Var> {
    let mut outs = Vec::with_capacity(branches.len());
    let mut lses = Vec::with_capacity(branches.len());
    let mut active = Vec::with_capacity(branches.len());
    for &b in branches {
        let o = dilated_attention(g, q, k, v, b, head)?;
        outs.push(o.out);
        lses.push(o.lse);
        active.push(o.active);
    }
    Ok(g.combine_branches(&outs, &lses, &active))
}

/// Tensor-level convenience: one branch, one head, no gradients.
pub fn dilated_attention_tensor(q: &Tensor, k: &Tensor, v: &Tensor, branch: Branch, head: usize) -> Result<Tensor> {
    let mut g = Graph::new();
    let (qv, kv, vv) = (g.constant(q.clone()), g.constant(k.clone()), g.constant(v.clone()));
    let o = dilated_attention(&mut g, qv, kv, vv, branch, head)?;
    Ok(g.value(o.out).clone())
}

/// Branch mixing weights at every position (rows sum to one where any branch is active).
pub fn branch_mixing_weights(q: &Tensor, k: &Tensor, v: &Tensor, branches: &[Branch], head: usize) -> Result<Vec<Vec<f64>>> {
    let mut g = Graph::new();
    let (qv, kv, vv) = (g.constant(q.clone()), g.constant(k.clone()), g.constant(v.clone()));
    let mut lses = Vec::new();
    let mut active = Vec::new();
    for &b in branches {
        let o = dilated_attention(&mut g, qv, kv, vv, b, head)?;
        lses.push(g.value(o.lse).data().to_vec());
        active.push(o.active);
    }
    let refs: Vec<&[f64]> = lses.iter().map(Vec::as_slice).collect();
    Ok(crate::numerics::graph::branch_weights(&refs, &active, q.rows()))
}
