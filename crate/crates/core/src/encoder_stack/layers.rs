//! Parameter-registration and forward helpers shared by the encoders and the
//! decoder.

use crate::error::Result;
use crate::numerics::{rng::fan_in_uniform, Graph, ParamStore, Tensor, Var};

pub(crate) fn add_linear(store: &mut ParamStore, rng: &mut impl rand::Rng, prefix: &str, d_in: usize, d_out: usize) {
    store.insert(format!("{prefix}.w"), fan_in_uniform(rng, &[d_in, d_out], d_in), true);
    store.insert(format!("{prefix}.b"), Tensor::zeros(&[d_out]), true);
}

/// Weight-only projection, used for attention keys: a key bias only shifts
/// each score row by a constant and never reaches the output.
pub(crate) fn add_projection(store: &mut ParamStore, rng: &mut impl rand::Rng, prefix: &str, d_in: usize, d_out: usize) {
    store.insert(format!("{prefix}.w"), fan_in_uniform(rng, &[d_in, d_out], d_in), true);
}

pub(crate) fn add_layer_norm(store: &mut ParamStore, prefix: &str, d: usize) {
    store.insert(format!("{prefix}.g"), Tensor::filled(&[d], 1.0), true);
    store.insert(format!("{prefix}.b"), Tensor::zeros(&[d]), true);
}

pub(crate) fn linear(g: &mut Graph, store: &ParamStore, prefix: &str, x: Var) -> Result<Var> {
    let w = g.param_named(store, &format!("{prefix}.w"))?;
    let b = g.param_named(store, &format!("{prefix}.b"))?;
    let y = g.matmul(x, w);
    Ok(g.add_row(y, b))
}

pub(crate) fn projection(g: &mut Graph, store: &ParamStore, prefix: &str, x: Var) -> Result<Var> {
    let w = g.param_named(store, &format!("{prefix}.w"))?;
    Ok(g.matmul(x, w))
}

pub(crate) fn layer_norm(g: &mut Graph, store: &ParamStore, prefix: &str, x: Var) -> Result<Var> {
    let gain = g.param_named(store, &format!("{prefix}.g"))?;
    let bias = g.param_named(store, &format!("{prefix}.b"))?;
    Ok(g.layer_norm(x, gain, bias))
}

/// Two-layer GELU feed-forward block.
pub(crate) fn feed_forward(g: &mut Graph, store: &ParamStore, prefix: &str, x: Var) -> Result<Var> {
    let h = linear(g, store, &format!("{prefix}.fc1"), x)?;
    let h = g.gelu(h);
    linear(g, store, &format!("{prefix}.fc2"), h)
}
