use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::language_model::AttentionTrace;
use crate::slide_io::PatchGrid;

pub const DEFAULT_TOP_K: usize = 5;

/// How a `(token, layer, head)` row enters the average.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowNorm {
    /// Rescale each row to sum to 1 over the visual positions.
    #[default]
    Renormalized,
    /// Use the stored attention as is.
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchSaliency {
    /// `(patch index, score)` by descending score, ties by lower index.
    pub ranked: Vec<(usize, f64)>,
    pub k: usize,
    /// Number of generated tokens averaged over.
    pub tokens: usize,
    pub norm: RowNorm,
}

/// Mean attention per patch over tokens, layers and heads.
pub fn patch_scores(trace: &AttentionTrace, norm: RowNorm) -> Result<Vec<f64>> {
    if trace.is_empty() {
        return Err(Error::usage("attention trace is empty"));
    }
    let n = trace.n_visual;
    let mut scores = vec![0.0; n];
    let rows = trace.tokens * trace.layers * trace.heads;
    for row in trace.values.chunks(n) {
        let scale = match norm {
            RowNorm::Raw => 1.0,
            RowNorm::Renormalized => {
                let s: f64 = row.iter().sum();
                if s > 0.0 {
                    1.0 / s
                } else {
                    0.0
                }
            }
        };
        for (acc, v) in scores.iter_mut().zip(row) {
            *acc += v * scale;
        }
    }
    scores.iter_mut().for_each(|s| *s /= rows as f64);
    Ok(scores)
}

/// Top-`k` patches by mean attention. `k > N` is clamped to `N`.
pub fn saliency(trace: &AttentionTrace, k: usize, norm: RowNorm) -> Result<PatchSaliency> {
    let scores = patch_scores(trace, norm)?;
    let n = scores.len();
    let k = if k > n {
        log::warn!("requested top-{k} of {n} patches; using {n}");
        n
    } else {
        k
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let ranked = order.into_iter().take(k).map(|i| (i, scores[i])).collect();
    Ok(PatchSaliency { ranked, k, tokens: trace.tokens, norm })
}

/// `rank,patch_index,row,col,score` with ranks from 1.
pub fn saliency_csv(sal: &PatchSaliency, grid: &PatchGrid) -> Result<String> {
    let tiles: Vec<_> = grid.tissue_entries().collect();
    let mut s = String::from("rank,patch_index,row,col,score\n");
    for (rank, &(idx, score)) in sal.ranked.iter().enumerate() {
        let e = tiles
            .get(idx)
            .ok_or_else(|| Error::usage(format!("patch index {idx} outside the grid's {} tissue tiles", tiles.len())))?;
        writeln!(s, "{},{idx},{},{},{score}", rank + 1, e.row, e.col).expect("string write");
    }
    Ok(s)
}
