use serde::{Deserialize, Serialize};

use super::decoder::{forward_logits, DecoderConfig};
use super::sequence::MultimodalSequence;
use super::vocab::{Vocab, EOS};
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamStore, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    pub max_len: usize,
    pub capture_attention: bool,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig { max_len: 64, capture_attention: true }
    }
}

/// Attention from each generated token to each visual position, stored
/// as `[tokens × layers × heads × N]`.
///
/// Values are the decoder's attention probabilities at the query position
/// that produced the token, restricted to the visual span without
/// renormalization; each `(token, layer, head)` row sums to at most 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub tokens: usize,
    pub layers: usize,
    pub heads: usize,
    pub n_visual: usize,
    pub values: Vec<f64>,
}

impl AttentionTrace {
    pub fn new(tokens: usize, layers: usize, heads: usize, n_visual: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != tokens * layers * heads * n_visual {
            return Err(Error::usage(format!(
                "trace has {} values, expected {tokens}x{layers}x{heads}x{n_visual}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0 + 1e-12) {
            return Err(Error::usage("trace values must lie in [0, 1]"));
        }
        Ok(AttentionTrace { tokens, layers, heads, n_visual, values })
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.tokens, self.layers, self.heads, self.n_visual]
    }

    pub fn row(&self, token: usize, layer: usize, head: usize) -> &[f64] {
        let start = ((token * self.layers + layer) * self.heads + head) * self.n_visual;
        &self.values[start..start + self.n_visual]
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct Generation {
    /// Emitted ids, including a final `<eos>` when one was produced.
    pub tokens: Vec<usize>,
    pub text: String,
    pub trace: Option<AttentionTrace>,
}

/// Lowest index among the maxima.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Greedy decoding from an answer-less sequence. Each step recomputes the
/// full forward pass over the sequence so far.
pub fn generate(
    store: &ParamStore,
    cfg: &DecoderConfig,
    vocab: &Vocab,
    visual: &Tensor,
    prompt: &MultimodalSequence,
    gen: &GenerateConfig,
) -> Result<Generation> {
    if gen.max_len == 0 {
        return Err(Error::usage("max_len must be at least 1"));
    }
    if prompt.answer_len > 0 {
        return Err(Error::usage("generation starts from a sequence without an answer"));
    }
    let n = prompt.n_visual;
    let mut tokens = Vec::new();
    let mut trace = Vec::new();
    while tokens.len() < gen.max_len {
        let seq = prompt.with_continuation(&tokens);
        if !tokens.is_empty() && seq.len() - n > cfg.max_text_len {
            break;
        }
        let mut g = Graph::new();
        let v = g.constant(visual.clone());
        let out = forward_logits(&mut g, store, cfg, v, &seq)?;
        let last = seq.len() - 1;
        let next = argmax(g.value(out.logits).row(last));
        if gen.capture_attention {
            for layer in &out.attention {
                for &head in layer {
                    trace.extend_from_slice(&g.value(head).row(last)[1..1 + n]);
                }
            }
        }
        tokens.push(next);
        if next == EOS {
            break;
        }
    }
    let trace = if gen.capture_attention {
        Some(AttentionTrace::new(tokens.len(), cfg.layers, cfg.heads, n, trace)?)
    } else {
        None
    };
    let text = vocab.detokenize(&tokens);
    Ok(Generation { tokens, text, trace })
}
