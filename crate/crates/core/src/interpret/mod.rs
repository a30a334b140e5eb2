//! Attention-based patch saliency and thumbnail overlays.

pub mod overlay;
pub mod saliency;

pub use crate::language_model::AttentionTrace;
pub use overlay::{render_overlay, thumbnail_rect, RANK_COLORS};
pub use saliency::{patch_scores, saliency, saliency_csv, PatchSaliency, RowNorm, DEFAULT_TOP_K};

#[cfg(test)]
mod tests;
