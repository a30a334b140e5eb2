//! The assembled model: frozen patch encoder, slide encoder, projector and
//! decoder sharing one parameter store.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder_stack::{init_encoder_stack, visual_tokens, EmbeddingMatrix, EncoderConfig, ToyPatchEncoder};
use crate::error::{Error, Result};
use crate::language_model::{
    answer_loss, assemble, forward_logits, generate, init_decoder, DecoderConfig, GenerateConfig, Generation, Vocab,
};
use crate::numerics::{load_checkpoint, save_checkpoint, CheckpointMeta, Graph, ParamStore, SeedStream, Tensor, Var};
use crate::slide_io::{PatchGrid, Raster};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub patch_size: usize,
    pub encoder: EncoderConfig,
    pub lm: DecoderConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { patch_size: crate::slide_io::DEFAULT_PATCH_SIZE, encoder: EncoderConfig::default(), lm: DecoderConfig::default() }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::config("model.patch_size", "must be positive"));
        }
        self.encoder.validate()?;
        self.lm.validate()
    }
}

/// Patch features of one slide plus their grid coordinates.
#[derive(Clone, Debug)]
pub struct SlideInput {
    pub features: Tensor,
    pub positions: Vec<(usize, usize)>,
}

impl SlideInput {
    pub fn new(features: Tensor, positions: Vec<(usize, usize)>) -> Result<Self> {
        if features.rows() != positions.len() {
            return Err(Error::usage(format!("{} feature rows for {} positions", features.rows(), positions.len())));
        }
        Ok(SlideInput { features, positions })
    }

    /// Pairs an embedding file with the tissue tiles of its grid.
    pub fn from_embeddings(emb: &EmbeddingMatrix, grid: &PatchGrid) -> Result<Self> {
        let positions: Vec<(usize, usize)> = grid.tissue_entries().map(|e| (e.row, e.col)).collect();
        if positions.len() != emb.n_patches() {
            return Err(Error::usage(format!(
                "embedding has {} rows but the grid has {} tissue tiles",
                emb.n_patches(),
                positions.len()
            )));
        }
        SlideInput::new(emb.to_tensor()?, positions)
    }

    pub fn n_patches(&self) -> usize {
        self.positions.len()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ModelMeta {
    config: ModelConfig,
    vocab: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct SlideChat {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub store: ParamStore,
}

impl SlideChat {
    pub fn init(config: ModelConfig, vocab: Vocab, seeds: &SeedStream) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        ToyPatchEncoder::init(&mut store, &seeds.child("patch_encoder"), config.patch_size, config.encoder.patch_dim);
        init_encoder_stack(&mut store, &config.encoder, config.lm.dim, &seeds.child("encoder"))?;
        init_decoder(&mut store, &config.lm, vocab.len(), &seeds.child("lm"))?;
        Ok(SlideChat { config, vocab, store })
    }

    pub fn patch_encoder(&self) -> ToyPatchEncoder {
        ToyPatchEncoder { patch_size: self.config.patch_size, dim: self.config.encoder.patch_dim }
    }

    pub fn encode_patches(&self, patches: &[Raster]) -> Result<EmbeddingMatrix> {
        if patches.is_empty() {
            return Err(Error::usage("no tissue patches to encode"));
        }
        let rows = self.patch_encoder().encode_all(&self.store, patches)?;
        EmbeddingMatrix::from_rows(&rows, self.config.encoder.patch_dim)
    }

    pub fn visual(&self, g: &mut Graph, slide: &SlideInput) -> Result<Var> {
        let x = g.constant(slide.features.clone());
        visual_tokens(g, &self.store, &self.config.encoder, x, Some(&slide.positions))
    }

    pub fn visual_tensor(&self, slide: &SlideInput) -> Result<Tensor> {
        let mut g = Graph::new();
        let v = self.visual(&mut g, slide)?;
        Ok(g.value(v).clone())
    }

    /// Masked answer cross-entropy of `answer` given the slide and prompt.
    pub fn sample_loss(&self, g: &mut Graph, slide: &SlideInput, prompt: &str, answer: &str) -> Result<Var> {
        let vis = self.visual(g, slide)?;
        let seq = assemble(&self.vocab, g.value(vis), self.config.lm.dim, prompt, Some(answer))?;
        let out = forward_logits(g, &self.store, &self.config.lm, vis, &seq)?;
        answer_loss(g, &out, &seq)
    }

    pub fn respond(&self, slide: &SlideInput, prompt: &str, gen: &GenerateConfig) -> Result<Generation> {
        let vis = self.visual_tensor(slide)?;
        let seq = assemble(&self.vocab, &vis, self.config.lm.dim, prompt, None)?;
        generate(&self.store, &self.config.lm, &self.vocab, &vis, &seq, gen)
    }

    pub fn save(&self, path: &Path, mut meta: CheckpointMeta) -> Result<()> {
        meta.model = serde_json::to_value(ModelMeta { config: self.config.clone(), vocab: self.vocab.tokens().to_vec() })
            .expect("model metadata serializes");
        save_checkpoint(path, &self.store, &meta)
    }

    pub fn load(path: &Path) -> Result<(Self, CheckpointMeta)> {
        let (store, meta) = load_checkpoint(path)?;
        let m: ModelMeta = serde_json::from_value(meta.model.clone())
            .map_err(|e| Error::format(path, format!("model metadata: {e}")))?;
        let vocab = Vocab::from_tokens(m.vocab).map_err(|e| Error::format(path, e.to_string()))?;
        m.config.validate()?;
        Ok((SlideChat { config: m.config, vocab, store }, meta))
    }
}
