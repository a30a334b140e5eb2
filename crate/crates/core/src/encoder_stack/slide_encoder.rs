use super::config::{EncoderConfig, Positional};
use super::dilated::multi_branch_attention;
use super::layers::{add_layer_norm, add_linear, add_projection, feed_forward, layer_norm, linear, projection};
use crate::error::{Error, Result};
use crate::numerics::{rng::fan_in_uniform, Graph, ParamStore, SeedStream, Var};

pub const SLIDE_ENCODER_GROUP: &str = "slide_encoder";

/// Registers slide-encoder parameters. No-op when the encoder is bypassed.
pub fn init_slide_encoder(store: &mut ParamStore, cfg: &EncoderConfig, seeds: &SeedStream) -> Result<()> {
    cfg.validate()?;
    if cfg.bypass_slide_encoder {
        return Ok(());
    }
    let mut rng = seeds.rng("slide_encoder");
    let d = cfg.slide_dim;
    add_linear(store, &mut rng, "slide_encoder.in_proj", cfg.patch_dim, d);
    if cfg.positional == Positional::Grid {
        store.insert("slide_encoder.pos_row", fan_in_uniform(&mut rng, &[cfg.max_grid, d], d), true);
        store.insert("slide_encoder.pos_col", fan_in_uniform(&mut rng, &[cfg.max_grid, d], d), true);
    }
    for l in 0..cfg.layers {
        let p = format!("slide_encoder.layer{l}");
        for m in ["q", "v", "o"] {
            add_linear(store, &mut rng, &format!("{p}.attn.{m}"), d, d);
        }
        add_projection(store, &mut rng, &format!("{p}.attn.k"), d, d);
        add_layer_norm(store, &format!("{p}.ln1"), d);
        add_linear(store, &mut rng, &format!("{p}.ffn.fc1"), d, d * cfg.ffn_mult);
        add_linear(store, &mut rng, &format!("{p}.ffn.fc2"), d * cfg.ffn_mult, d);
        add_layer_norm(store, &format!("{p}.ln2"), d);
    }
    Ok(())
}

/// Contextualizes patch features `[N × patch_dim]` into `[N × slide_dim]`.
/// `positions` gives each row's `(grid row, grid col)` and is required when
/// grid positional embeddings are configured.
pub fn slide_encode(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &EncoderConfig,
    patches: Var,
    positions: Option<&[(usize, usize)]>,
) -> Result<Var> {
    let n = g.value(patches).rows();
    if n == 0 {
        return Err(Error::usage("slide encoder needs at least one patch"));
    }
    if g.value(patches).cols() != cfg.patch_dim {
        return Err(Error::config(
            "encoder.patch_dim",
            format!("features are {} wide, encoder expects {}", g.value(patches).cols(), cfg.patch_dim),
        ));
    }
    let mut x = linear(g, store, "slide_encoder.in_proj", patches)?;
    if cfg.positional == Positional::Grid {
        let pos = positions.ok_or_else(|| Error::usage("grid positional embedding needs patch positions"))?;
        if pos.len() != n {
            return Err(Error::usage(format!("{} positions for {n} patches", pos.len())));
        }
        if let Some(&(r, c)) = pos.iter().find(|&&(r, c)| r >= cfg.max_grid || c >= cfg.max_grid) {
            return Err(Error::usage(format!("grid position ({r},{c}) exceeds max_grid {}", cfg.max_grid)));
        }
        let rows_tab = g.param_named(store, "slide_encoder.pos_row")?;
        let cols_tab = g.param_named(store, "slide_encoder.pos_col")?;
        let ri: Vec<usize> = pos.iter().map(|p| p.0).collect();
        let ci: Vec<usize> = pos.iter().map(|p| p.1).collect();
        let pr = g.gather_rows(rows_tab, &ri);
        let pc = g.gather_rows(cols_tab, &ci);
        x = g.add(x, pr);
        x = g.add(x, pc);
    }
    let dh = cfg.head_dim();
    for l in 0..cfg.layers {
        let p = format!("slide_encoder.layer{l}");
        let q = linear(g, store, &format!("{p}.attn.q"), x)?;
        let k = projection(g, store, &format!("{p}.attn.k"), x)?;
        let v = linear(g, store, &format!("{p}.attn.v"), x)?;
        let mut heads = Vec::with_capacity(cfg.heads);
        for h in 0..cfg.heads {
            let (qh, kh, vh) = (g.slice_cols(q, h * dh, dh), g.slice_cols(k, h * dh, dh), g.slice_cols(v, h * dh, dh));
            heads.push(multi_branch_attention(g, qh, kh, vh, &cfg.branches, h)?);
        }
        let merged = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads) };
        let attn = linear(g, store, &format!("{p}.attn.o"), merged)?;
        let res = g.add(x, attn);
        x = layer_norm(g, store, &format!("{p}.ln1"), res)?;
        let f = feed_forward(g, store, &format!("{p}.ffn"), x)?;
        let res = g.add(x, f);
        x = layer_norm(g, store, &format!("{p}.ln2"), res)?;
    }
    Ok(x)
}
