//! Word-level vocabulary, multimodal sequence layout, a small pre-LN
//! decoder and greedy generation with attention capture.

pub mod decoder;
pub mod generate;
pub mod sequence;
pub mod vocab;

pub use decoder::{
    answer_loss, attention_mask, forward_logits, init_decoder, logits_tensor, vocab_size, DecoderConfig, DecoderOutput,
    LM_GROUP,
};
pub use generate::{argmax, generate, AttentionTrace, GenerateConfig, Generation};
pub use sequence::{assemble, assemble_ids, MultimodalSequence};
pub use vocab::Vocab;

#[cfg(test)]
mod tests;
