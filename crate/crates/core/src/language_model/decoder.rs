use serde::{Deserialize, Serialize};

use super::sequence::MultimodalSequence;
use crate::encoder_stack::{add_layer_norm, add_linear, add_projection, feed_forward, layer_norm, linear, projection};
use crate::error::{Error, Result};
use crate::numerics::{rng::fan_in_uniform, Graph, ParamStore, SeedStream, Tensor, Var};

pub const LM_GROUP: &str = "lm";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn_mult: usize,
    /// Number of learned text positions.
    pub max_text_len: usize,
    /// Visual positions attend causally instead of bidirectionally.
    pub causal_visual: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig { dim: 128, heads: 4, layers: 2, ffn_mult: 4, max_text_len: 128, causal_visual: false }
    }
}

impl DecoderConfig {
    pub fn head_dim(&self) -> usize {
        self.dim / self.heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.dim == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::config("lm.heads", format!("heads ({}) must divide dim ({})", self.heads, self.dim)));
        }
        if self.max_text_len == 0 {
            return Err(Error::config("lm.max_text_len", "must be positive"));
        }
        Ok(())
    }
}

/// Registers the decoder: token and position tables, pre-LN blocks, final
/// layer norm and an untied output head.
pub fn init_decoder(store: &mut ParamStore, cfg: &DecoderConfig, vocab_size: usize, seeds: &SeedStream) -> Result<()> {
    cfg.validate()?;
    let mut rng = seeds.rng("lm");
    let d = cfg.dim;
    store.insert("lm.tok_emb", fan_in_uniform(&mut rng, &[vocab_size, d], d), true);
    store.insert("lm.pos_emb", fan_in_uniform(&mut rng, &[cfg.max_text_len, d], d), true);
    for l in 0..cfg.layers {
        let p = format!("lm.block{l}");
        add_layer_norm(store, &format!("{p}.ln1"), d);
        for m in ["q", "v", "o"] {
            add_linear(store, &mut rng, &format!("{p}.attn.{m}"), d, d);
        }
        add_projection(store, &mut rng, &format!("{p}.attn.k"), d, d);
        add_layer_norm(store, &format!("{p}.ln2"), d);
        add_linear(store, &mut rng, &format!("{p}.ffn.fc1"), d, d * cfg.ffn_mult);
        add_linear(store, &mut rng, &format!("{p}.ffn.fc2"), d * cfg.ffn_mult, d);
    }
    add_layer_norm(store, "lm.ln_f", d);
    add_linear(store, &mut rng, "lm.head", d, vocab_size);
    Ok(())
}

/// Vocabulary size implied by the registered token table.
pub fn vocab_size(store: &ParamStore) -> Result<usize> {
    let id = store.expect_id("lm.tok_emb")?;
    Ok(store.get(id).value.rows())
}

/// `allowed[i*T + j]`: may position `i` attend to position `j`.
pub fn attention_mask(seq: &MultimodalSequence, causal_visual: bool) -> Vec<bool> {
    let t = seq.len();
    let mut m = vec![false; t * t];
    for i in 0..t {
        for j in 0..t {
            m[i * t + j] = j <= i || (!causal_visual && seq.is_visual(i) && seq.is_visual(j));
        }
    }
    m
}

pub struct DecoderOutput {
    /// `[T × V]`; row `t` scores the token at `t + 1`.
    pub logits: Var,
    /// Attention probabilities `[T × T]` indexed `[layer][head]`.
    pub attention: Vec<Vec<Var>>,
}

/// Runs the decoder over `seq`, taking visual embeddings from `visual`
/// (`[N × dim]`, rows in patch order).
pub fn forward_logits(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &DecoderConfig,
    visual: Var,
    seq: &MultimodalSequence,
) -> Result<DecoderOutput> {
    let t = seq.len();
    let vis = g.value(visual);
    if vis.rows() != seq.n_visual || vis.cols() != cfg.dim {
        return Err(Error::usage(format!(
            "visual tokens are {}x{}, sequence expects {}x{}",
            vis.rows(),
            vis.cols(),
            seq.n_visual,
            cfg.dim
        )));
    }
    let text_pos: Vec<usize> = (0..t).filter(|&p| !seq.is_visual(p)).collect();
    if text_pos.len() > cfg.max_text_len {
        return Err(Error::usage(format!(
            "{} text positions exceed max_text_len {}",
            text_pos.len(),
            cfg.max_text_len
        )));
    }
    let ids: Vec<usize> = text_pos.iter().map(|&p| seq.tokens[p]).collect();
    let tok_tab = g.param_named(store, "lm.tok_emb")?;
    if let Some(&bad) = ids.iter().find(|&&id| id >= g.value(tok_tab).rows()) {
        return Err(Error::usage(format!("token id {bad} outside the vocabulary")));
    }
    let pos_tab = g.param_named(store, "lm.pos_emb")?;
    let tok = g.gather_rows(tok_tab, &ids);
    let order: Vec<usize> = (0..text_pos.len()).collect();
    let pos = g.gather_rows(pos_tab, &order);
    let text = g.add(tok, pos);
    let mut x = g.scatter_rows(text, &text_pos, t);
    if seq.n_visual > 0 {
        let vis_pos: Vec<usize> = seq.visual_range().collect();
        let v = g.scatter_rows(visual, &vis_pos, t);
        x = g.add(x, v);
    }

    let mask = attention_mask(seq, cfg.causal_visual);
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut attention = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let p = format!("lm.block{l}");
        let h_in = layer_norm(g, store, &format!("{p}.ln1"), x)?;
        let q = linear(g, store, &format!("{p}.attn.q"), h_in)?;
        let k = projection(g, store, &format!("{p}.attn.k"), h_in)?;
        let v = linear(g, store, &format!("{p}.attn.v"), h_in)?;
        let mut heads = Vec::with_capacity(cfg.heads);
        let mut probs = Vec::with_capacity(cfg.heads);
        for h in 0..cfg.heads {
            let (qh, kh, vh) = (g.slice_cols(q, h * dh, dh), g.slice_cols(k, h * dh, dh), g.slice_cols(v, h * dh, dh));
            let s = g.matmul_bt(qh, kh);
            let s = g.scale(s, scale);
            let a = g.softmax_rows(s, Some(&mask));
            probs.push(a);
            heads.push(g.matmul(a, vh));
        }
        attention.push(probs);
        let merged = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads) };
        let attn = linear(g, store, &format!("{p}.attn.o"), merged)?;
        x = g.add(x, attn);
        let h_in = layer_norm(g, store, &format!("{p}.ln2"), x)?;
        let f = feed_forward(g, store, &format!("{p}.ffn"), h_in)?;
        x = g.add(x, f);
    }
    let x = layer_norm(g, store, "lm.ln_f", x)?;
    let logits = linear(g, store, "lm.head", x)?;
    if !g.value(logits).is_finite() {
        return Err(Error::NonFinite("decoder logits".into()));
    }
    Ok(DecoderOutput { logits, attention })
}

/// Mean next-token cross-entropy over the loss-masked positions.
pub fn answer_loss(g: &mut Graph, out: &DecoderOutput, seq: &MultimodalSequence) -> Result<Var> {
    let (targets, mask) = seq.shifted_targets();
    g.cross_entropy(out.logits, &targets, &mask)
}

/// Constant-valued forward pass, for callers that only need numbers.
pub fn logits_tensor(store: &ParamStore, cfg: &DecoderConfig, visual: &Tensor, seq: &MultimodalSequence) -> Result<Tensor> {
    let mut g = Graph::new();
    let v = g.constant(visual.clone());
    let out = forward_logits(&mut g, store, cfg, v, seq)?;
    Ok(g.value(out.logits).clone())
}
