//! Patch features, the dilated-attention slide encoder and the multimodal
//! projector.

pub mod config;
pub mod dilated;
pub mod embeddings;
mod layers;
pub mod patch_encoder;
pub mod projector;
pub mod slide_encoder;

pub use config::{Branch, EncoderConfig, Positional, ProjectorKind};
pub use dilated::{branch_groups, dilated_attention, dilated_attention_tensor, multi_branch_attention};
pub use embeddings::{load_embeddings, EmbeddingMatrix};
pub use patch_encoder::{ToyPatchEncoder, PATCH_ENCODER_GROUP};
pub use projector::{project, set_identity_projector, PROJECTOR_GROUP};
pub use slide_encoder::{init_slide_encoder, slide_encode, SLIDE_ENCODER_GROUP};

pub(crate) use layers::{add_layer_norm, add_linear, add_projection, feed_forward, layer_norm, linear, projection};

use crate::error::Result;
use crate::numerics::{Graph, ParamStore, SeedStream, Var};

/// Registers slide-encoder (unless bypassed) and projector parameters.
pub fn init_encoder_stack(store: &mut ParamStore, cfg: &EncoderConfig, lm_dim: usize, seeds: &SeedStream) -> Result<()> {
    init_slide_encoder(store, cfg, seeds)?;
    projector::init_projector(store, cfg.projector, cfg.projector_in(), lm_dim, seeds);
    Ok(())
}

/// Patch features → (slide encoder, unless bypassed) → projector → visual tokens.
pub fn visual_tokens(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &EncoderConfig,
    patches: Var,
    positions: Option<&[(usize, usize)]>,
) -> Result<Var> {
    let features = if cfg.bypass_slide_encoder {
        patches
    } else {
        slide_encode(g, store, cfg, patches, positions)?
    };
    project(g, store, cfg.projector, features)
}
