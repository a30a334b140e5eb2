use indexmap::IndexMap;
use rand::seq::SliceRandom;

use super::config::{StageConfig, TaskKind};
use super::data::{Dataset, TrainSample};
use super::run::{run_stage, StageReport};
use crate::encoder_stack::{Branch, EncoderConfig, ProjectorKind};
use crate::error::{Error, Result};
use crate::language_model::{DecoderConfig, GenerateConfig};
use crate::model::{ModelConfig, SlideChat, SlideInput};
use crate::numerics::{Graph, SeedStream};
use crate::slide_io::{synth_slide, tile_slide, tissue_patches, PatchGrid, Raster, SynthSpec, TissueFilter, TissueKind};

pub const CAPTION_PROMPT: &str = "describe this whole slide image";
pub const VQA_PROMPT: &str = "which tissue is most abundant in this whole slide image";

/// Tile grid of every synthetic cohort slide (columns × rows).
pub const COHORT_GRID: (usize, usize) = (3, 2);

const TISSUES: [TissueKind; 3] = [TissueKind::Tumor, TissueKind::Stroma, TissueKind::Necrosis];
const COUNT_WORDS: [&str; 7] = ["zero", "one", "two", "three", "four", "five", "six"];

#[derive(Clone, Debug)]
pub struct SynthSlide {
    pub id: String,
    pub raster: Raster,
    /// Per-tile kinds, row-major.
    pub labels: Vec<TissueKind>,
    pub caption: String,
    pub dominant: TissueKind,
}

/// Caption listing tissue counts, e.g. `"three tumor two stroma one necrosis"`.
pub fn describe(labels: &[TissueKind]) -> String {
    TISSUES
        .iter()
        .filter_map(|&k| {
            let n = labels.iter().filter(|&&l| l == k).count();
            (n > 0).then(|| format!("{} {}", COUNT_WORDS[n], k.name()))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Most frequent tissue; ties go to the earlier of tumor, stroma, necrosis.
pub fn dominant(labels: &[TissueKind]) -> TissueKind {
    let count = |k: TissueKind| labels.iter().filter(|&&l| l == k).count();
    let mut best = TISSUES[0];
    for &k in &TISSUES[1..] {
        if count(k) > count(best) {
            best = k;
        }
    }
    best
}

/// `k` slides with pairwise distinct tissue compositions on a 3×2 tile grid.
pub fn synthetic_cohort(k: usize, patch_size: usize, seed: u64) -> Result<Vec<SynthSlide>> {
    let (cols, rows) = COHORT_GRID;
    let n = cols * rows;
    let mut compositions = Vec::new();
    for a in 0..=n {
        for b in 0..=n - a {
            compositions.push([a, b, n - a - b]);
        }
    }
    if k == 0 || k > compositions.len() {
        return Err(Error::usage(format!("cohort size must be in 1..={}", compositions.len())));
    }
    let seeds = SeedStream::new(seed);
    let mut rng = seeds.rng("cohort");
    compositions.shuffle(&mut rng);
    compositions
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, counts)| {
            let mut tiles: Vec<TissueKind> =
                TISSUES.iter().zip(counts).flat_map(|(&t, c)| std::iter::repeat_n(t, c)).collect();
            tiles.shuffle(&mut rng);
            let layout: Vec<Vec<TissueKind>> = tiles.chunks(cols).map(<[TissueKind]>::to_vec).collect();
            let spec = SynthSpec::from_tiles(&layout, patch_size);
            let (raster, labels) = synth_slide(seeds.child("slide").seed().wrapping_add(i as u64), &spec)?;
            Ok(SynthSlide {
                id: format!("synth-{i:02}"),
                caption: describe(&labels),
                dominant: dominant(&labels),
                raster,
                labels,
            })
        })
        .collect()
}

/// Tiles a raster and encodes its tissue patches with the model's frozen
/// patch encoder.
pub fn encode_slide(model: &SlideChat, raster: &Raster, filter: &TissueFilter) -> Result<(PatchGrid, SlideInput)> {
    let grid = tile_slide(raster, model.config.patch_size, filter)?;
    let patches = tissue_patches(raster, &grid)?;
    let emb = model.encode_patches(&patches)?;
    let input = SlideInput::from_embeddings(&emb, &grid)?;
    Ok((grid, input))
}

/// Caption and VQA samples for a cohort.
pub fn cohort_samples(slides: &[SynthSlide]) -> Vec<TrainSample> {
    slides
        .iter()
        .flat_map(|s| {
            [
                TrainSample { slide_id: s.id.clone(), task: TaskKind::Caption, prompt: CAPTION_PROMPT.into(), target: s.caption.clone() },
                TrainSample { slide_id: s.id.clone(), task: TaskKind::Vqa, prompt: VQA_PROMPT.into(), target: s.dominant.name().into() },
            ]
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ProbeConfig {
    pub k: usize,
    pub patch_size: usize,
    pub seed: u64,
    pub model: ModelConfig,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
}

impl ProbeConfig {
    /// Small model trained full-batch; stage 2 trains on captions with a
    /// raised learning rate so memorization finishes in a few hundred steps.
    pub fn new(k: usize, seed: u64) -> Self {
        let patch_size = 32;
        let model = ModelConfig {
            patch_size,
            encoder: EncoderConfig {
                patch_dim: 16,
                slide_dim: 16,
                heads: 2,
                layers: 1,
                ffn_mult: 2,
                branches: vec![Branch::new(2, 1), Branch::new(4, 2)],
                projector: ProjectorKind::Linear,
                ..EncoderConfig::default()
            },
            lm: DecoderConfig { dim: 32, heads: 2, layers: 1, ffn_mult: 2, max_text_len: 24, causal_visual: false },
        };
        let batch_size = k.max(1);
        let stage1 = StageConfig { epochs: 100, batch_size, ..StageConfig::stage1() };
        let stage2 =
            StageConfig { lr: 3e-3, epochs: 500, batch_size, tasks: vec![TaskKind::Caption], ..StageConfig::stage2() };
        ProbeConfig { k, patch_size, seed, model, stage1, stage2 }
    }

    pub fn steps(&self) -> usize {
        let per_epoch = |s: &StageConfig| self.k.div_ceil(s.batch_size);
        per_epoch(&self.stage1) * self.stage1.epochs as usize + per_epoch(&self.stage2) * self.stage2.epochs as usize
    }
}

#[derive(Clone, Debug)]
pub struct ProbeReport {
    pub k: usize,
    /// Mean masked answer cross-entropy over the cohort after training.
    pub final_loss: f64,
    pub exact_matches: usize,
    pub stage1: StageReport,
    pub stage2: StageReport,
    pub model: SlideChat,
}

impl ProbeReport {
    /// Per-step losses of both stages in order.
    pub fn loss_curve(&self) -> Vec<f64> {
        self.stage1.losses.iter().chain(&self.stage2.losses).map(|r| r.loss).collect()
    }
}

/// Stage 1 then stage 2 on `k` synthetic caption slides, then scores
/// answer cross-entropy and greedy exact matches.
pub fn overfit_probe(cfg: &ProbeConfig) -> Result<ProbeReport> {
    let slides = synthetic_cohort(cfg.k, cfg.patch_size, cfg.seed)?;
    let seeds = SeedStream::new(cfg.seed);
    let mut data = Dataset { slides: IndexMap::new(), samples: cohort_samples(&slides) };
    data.samples.retain(|s| s.task == TaskKind::Caption);
    let mut model = SlideChat::init(cfg.model.clone(), data.vocab(), &seeds.child("model"))?;
    for s in &slides {
        let (_, input) = encode_slide(&model, &s.raster, &TissueFilter::default())?;
        data.slides.insert(s.id.clone(), input);
    }
    let stage1 = run_stage(&mut model, &data, &cfg.stage1, &seeds.child("train"), None)?;
    let stage2 = run_stage(&mut model, &data, &cfg.stage2, &seeds.child("train"), None)?;

    let mut total = 0.0;
    let mut exact = 0;
    let gen = GenerateConfig { max_len: cfg.model.lm.max_text_len, capture_attention: false };
    for s in &data.samples {
        let slide = &data.slides[&s.slide_id];
        let mut g = Graph::new();
        let l = model.sample_loss(&mut g, slide, &s.prompt, &s.target)?;
        total += g.value(l).item();
        if model.respond(slide, &s.prompt, &gen)?.text == s.target {
            exact += 1;
        }
    }
    Ok(ProbeReport {
        k: cfg.k,
        final_loss: total / data.samples.len() as f64,
        exact_matches: exact,
        stage1,
        stage2,
        model,
    })
}
