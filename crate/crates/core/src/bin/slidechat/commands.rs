use std::collections::HashMap;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::Rng;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::json;
use slidechat::config::{ClientConfig, RunConfig};
use slidechat::curation::{self, ChatClient, LiveClient, PromptCache, ReplayClient};
use slidechat::encoder_stack::{load_embeddings, ToyPatchEncoder};
use slidechat::evaluation::{
    self, caption_eval, caption_scores_csv, load_records, majority_vote_baseline, random_predictions, records_to_jsonl,
    summary_csv, synthetic_benchmark, text_only_baseline, thumbnail_baseline, vqa_eval, CaptionRecord, ChatModel,
    QARecord, SlideChatModel,
};
use slidechat::interpret::{render_overlay, saliency, saliency_csv, AttentionTrace, RowNorm};
use slidechat::language_model::GenerateConfig;
use slidechat::model::{SlideChat, SlideInput};
use slidechat::numerics::{CheckpointMeta, ParamStore, SeedStream};
use slidechat::slide_io::{
    synth_slide, thumbnail, tile_slide, tissue_patches, PatchGrid, Raster, SlideManifest, SynthSpec, TissueKind,
    THUMBNAIL_SIDE,
};
use slidechat::training::{cohort_samples, run_stage, synthetic_cohort, Dataset, TrainSample};
use slidechat::{Error, Result};

use crate::run_dir::RunDir;
use crate::{Command, Predictor, Protocol};

pub fn dispatch(cmd: &Command, cfg: &RunConfig, dir: &mut RunDir) -> Result<serde_json::Value> {
    match cmd {
        Command::Synth { width, height, id, cohort, benchmark } => synth(cfg, dir, *width, *height, id, *cohort, *benchmark),
        Command::Tile { raster, id } => tile(cfg, dir, raster, id.as_deref()),
        Command::Encode { slide, checkpoint } => encode(cfg, dir, slide, checkpoint.as_deref()),
        Command::Train { stage, slides, samples, init } => train(cfg, dir, *stage, slides, samples, init.as_deref()),
        Command::Infer { checkpoint, slides, prompt, records } => {
            infer(cfg, dir, checkpoint, slides, prompt.as_deref(), records.as_deref())
        }
        Command::Interpret { trace, slide, top_k, raw_rows } => interpret(cfg, dir, trace, slide, *top_k, *raw_rows),
        Command::CaptionEval { references, predictions, judge } => caption_evaluate(cfg, dir, references, predictions, *judge),
        Command::VqaEval { records, predictions, predictor, model_name } => {
            vqa_evaluate(cfg, dir, records, predictions.as_deref(), *predictor, model_name.as_deref())
        }
        Command::Baseline { protocol, records, slides, checkpoint } => {
            baseline(cfg, dir, *protocol, records, slides, checkpoint.as_deref())
        }
        Command::Curate { reports, labels } => curate(cfg, dir, reports.as_deref(), labels.as_deref()),
    }
}

fn jsonl<T: serde::Serialize>(items: &[T]) -> String {
    items.iter().map(|x| serde_json::to_string(x).expect("serializes") + "\n").collect()
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1))))
        .collect()
}

fn labels_text(labels: &[TissueKind]) -> String {
    labels.iter().map(|k| format!("{}\n", k.name())).collect()
}

fn synth(
    cfg: &RunConfig,
    dir: &mut RunDir,
    width: usize,
    height: usize,
    id: &str,
    cohort: Option<usize>,
    benchmark: Option<usize>,
) -> Result<serde_json::Value> {
    let ps = cfg.model.patch_size;
    if let Some(n) = benchmark {
        let recs = synthetic_benchmark(n, cfg.seed);
        dir.write("bench_vqa.jsonl", records_to_jsonl(&recs))?;
        return Ok(json!({ "records": n }));
    }
    if let Some(k) = cohort {
        let slides = synthetic_cohort(k, ps, cfg.seed)?;
        for s in &slides {
            dir.write(&format!("{}.ppm", s.id), s.raster.encode_pnm())?;
            dir.write(&format!("{}.labels.txt", s.id), labels_text(&s.labels))?;
        }
        let captions: Vec<CaptionRecord> = slides
            .iter()
            .map(|s| CaptionRecord { id: s.id.clone(), slide_id: s.id.clone(), caption: s.caption.clone() })
            .collect();
        dir.write("samples.jsonl", jsonl(&cohort_samples(&slides)))?;
        dir.write("captions.jsonl", jsonl(&captions))?;
        return Ok(json!({ "slides": k }));
    }
    let (rows, cols) = (height / ps, width / ps);
    let mut rng = SeedStream::new(cfg.seed).rng("synth.layout");
    let mut spec = SynthSpec::new(width, height, ps);
    for r in 0..rows {
        for c in 0..cols {
            let kind = TissueKind::ALL[rng.gen_range(0..TissueKind::ALL.len())];
            if kind != spec.fill {
                spec = spec.with_region(c * ps, r * ps, ps, ps, kind);
            }
        }
    }
    let (raster, labels) = synth_slide(cfg.seed, &spec)?;
    dir.write(&format!("{id}.ppm"), raster.encode_pnm())?;
    dir.write(&format!("{id}.labels.txt"), labels_text(&labels))?;
    let tissue = labels.iter().filter(|k| k.is_tissue()).count();
    Ok(json!({ "slide": id, "tiles": labels.len(), "tissue_tiles": tissue }))
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::fs::canonicalize(p).map_err(|e| Error::io(p, e))
}

fn tile(cfg: &RunConfig, dir: &mut RunDir, raster_path: &Path, id: Option<&str>) -> Result<serde_json::Value> {
    let raster = Raster::read(raster_path)?;
    let id = match id {
        Some(i) => i.to_string(),
        None => raster_path.file_stem().and_then(|s| s.to_str()).unwrap_or("slide").to_string(),
    };
    let grid = tile_slide(&raster, cfg.model.patch_size, &cfg.tiling)?;
    dir.write(&format!("{id}.grid"), grid.to_text())?;
    let m = SlideManifest {
        slide_id: id.clone(),
        raster: absolute(raster_path)?,
        grid: format!("{id}.grid").into(),
        embeddings: None,
        caption_ids: vec![],
        qa_ids: vec![],
    };
    dir.write(&format!("{id}.toml"), m.to_toml())?;
    Ok(json!({ "slide": id, "tiles": grid.entries.len(), "tissue_tiles": grid.tissue_count() }))
}

fn encode(cfg: &RunConfig, dir: &mut RunDir, slide: &Path, checkpoint: Option<&Path>) -> Result<serde_json::Value> {
    let m = SlideManifest::load(slide)?;
    let grid = PatchGrid::load(&m.grid)?;
    let raster = Raster::read(&m.raster)?;
    let (store, encoder) = match checkpoint {
        Some(c) => {
            let (model, _) = SlideChat::load(c)?;
            let enc = model.patch_encoder();
            (model.store, enc)
        }
        None => {
            let mut store = ParamStore::new();
            let seeds = SeedStream::new(cfg.seed).child("patch_encoder");
            let enc = ToyPatchEncoder::init(&mut store, &seeds, cfg.model.patch_size, cfg.model.encoder.patch_dim);
            (store, enc)
        }
    };
    if grid.patch_size != encoder.patch_size {
        return Err(Error::usage(format!("grid uses {}-pixel tiles, encoder expects {}", grid.patch_size, encoder.patch_size)));
    }
    let patches = tissue_patches(&raster, &grid)?;
    if patches.is_empty() {
        return Err(Error::usage(format!("slide {} has no tissue tiles", m.slide_id)));
    }
    let rows = encoder.encode_all(&store, &patches)?;
    let emb = slidechat::encoder_stack::EmbeddingMatrix::from_rows(&rows, encoder.dim)?;
    let emb_name = format!("{}.emb", m.slide_id);
    dir.write(&emb_name, emb.encode())?;
    let out = SlideManifest { grid: absolute(&m.grid)?, embeddings: Some(emb_name.into()), ..m.clone() };
    dir.write(&format!("{}.toml", m.slide_id), out.to_toml())?;
    Ok(json!({ "slide": m.slide_id, "patches": emb.n_patches(), "dim": emb.dim() }))
}

/// Manifests named directly or found as `*.toml` in named directories.
fn manifest_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|q| q.extension().is_some_and(|x| x == "toml"))
                .collect();
            found.sort();
            out.extend(found);
        } else if p.exists() {
            out.push(p.clone());
        } else {
            return Err(Error::MissingInput(p.clone()));
        }
    }
    Ok(out)
}

struct LoadedSlide {
    manifest: SlideManifest,
    grid: PatchGrid,
    input: Option<SlideInput>,
}

fn load_slides(inputs: &[PathBuf], patch_dim: Option<usize>) -> Result<IndexMap<String, LoadedSlide>> {
    let paths = manifest_paths(inputs)?;
    let mut out = IndexMap::new();
    for m in slidechat::slide_io::load_dataset(&paths)? {
        let grid = PatchGrid::load(&m.grid)?;
        let input = match (&m.embeddings, patch_dim) {
            (Some(e), Some(d)) => {
                let emb = load_embeddings(e, Some(d), Some(grid.tissue_count()))?;
                Some(SlideInput::from_embeddings(&emb, &grid)?)
            }
            (None, Some(_)) => {
                return Err(Error::usage(format!("slide {} has no embeddings; run `encode` first", m.slide_id)));
            }
            _ => None,
        };
        out.insert(m.slide_id.clone(), LoadedSlide { manifest: m, grid, input });
    }
    Ok(out)
}

fn train(
    cfg: &RunConfig,
    dir: &mut RunDir,
    stage: u8,
    slides: &[PathBuf],
    samples: &Path,
    init: Option<&Path>,
) -> Result<serde_json::Value> {
    let stage_cfg = cfg.train.stage(stage)?;
    let samples: Vec<TrainSample> = read_jsonl(samples)?;
    let mut model = match init {
        Some(p) => SlideChat::load(p)?.0,
        None if stage == 1 => {
            let probe = Dataset { slides: IndexMap::new(), samples: samples.clone() };
            let model = SlideChat::init(cfg.model.clone(), probe.vocab(), &SeedStream::new(cfg.seed))?;
            let p = dir.path("init.ckpt");
            model.save(&p, CheckpointMeta::new(cfg.seed, 0))?;
            dir.track(p);
            model
        }
        None => return Err(Error::usage("stage 2 needs --init with a stage-1 checkpoint")),
    };
    let loaded = load_slides(slides, Some(model.config.encoder.patch_dim))?;
    let data = Dataset {
        slides: loaded.into_iter().map(|(id, s)| (id, s.input.expect("embeddings loaded"))).collect(),
        samples,
    };
    let report = run_stage(&mut model, &data, &stage_cfg, &SeedStream::new(cfg.seed), Some(dir.root()))?;
    for p in &report.checkpoints {
        dir.track(p.clone());
    }
    dir.track(dir.path(&format!("stage{stage}_loss.csv")));
    let frozen: serde_json::Map<String, serde_json::Value> =
        report.frozen_checksums.iter().map(|(g, c)| (g.clone(), c.clone().into())).collect();
    let summary = json!({
        "stage": stage,
        "steps": report.losses.len(),
        "final_loss": report.final_loss(),
        "epoch_losses": report.epoch_losses,
        "frozen_checksums": frozen,
    });
    dir.write(&format!("stage{stage}_summary.json"), serde_json::to_string_pretty(&summary).expect("json") + "\n")?;
    Ok(summary)
}

/// Stored embeddings when the manifest has them, otherwise the tissue
/// tiles encoded with the model's own patch encoder.
fn slide_input(model: &SlideChat, s: &LoadedSlide) -> Result<SlideInput> {
    match &s.manifest.embeddings {
        Some(e) => {
            let emb = load_embeddings(e, Some(model.config.encoder.patch_dim), Some(s.grid.tissue_count()))?;
            SlideInput::from_embeddings(&emb, &s.grid)
        }
        None => {
            let raster = Raster::read(&s.manifest.raster)?;
            let patches = tissue_patches(&raster, &s.grid)?;
            SlideInput::from_embeddings(&model.encode_patches(&patches)?, &s.grid)
        }
    }
}

fn infer(
    cfg: &RunConfig,
    dir: &mut RunDir,
    checkpoint: &Path,
    slides: &[PathBuf],
    prompt: Option<&str>,
    records: Option<&Path>,
) -> Result<serde_json::Value> {
    let (model, _) = SlideChat::load(checkpoint)?;
    let loaded = load_slides(slides, None)?;
    let mut inputs = IndexMap::new();
    for (id, s) in &loaded {
        inputs.insert(id.clone(), slide_input(&model, s)?);
    }
    match (prompt, records) {
        (Some(p), None) => {
            let mut responses = Vec::new();
            for (id, input) in &inputs {
                let gen = model.respond(input, p, &GenerateConfig { capture_attention: true, ..cfg.generate.clone() })?;
                let trace = gen.trace.expect("attention captured");
                dir.write(&format!("traces/{id}.json"), serde_json::to_string(&trace).expect("trace serializes") + "\n")?;
                responses.push(json!({ "id": id, "slide_id": id, "prompt": p, "text": gen.text }));
            }
            dir.write("responses.jsonl", jsonl(&responses))?;
            Ok(json!({ "responses": responses.len() }))
        }
        (None, Some(r)) => {
            let recs = load_records(r)?;
            let gen = GenerateConfig { capture_attention: false, ..cfg.generate.clone() };
            let mut preds = Vec::new();
            for rec in &recs {
                let Some(input) = inputs.get(&rec.slide_id) else {
                    log::warn!("record {}: slide {} not loaded", rec.id, rec.slide_id);
                    continue;
                };
                let reply = model.respond(input, &rec.prompt(), &gen)?.text;
                preds.push(json!({ "id": rec.id, "reply": reply }));
            }
            dir.write("predictions.jsonl", jsonl(&preds))?;
            Ok(json!({ "predictions": preds.len() }))
        }
        _ => Err(Error::usage("give exactly one of --prompt and --records")),
    }
}

fn interpret(
    cfg: &RunConfig,
    dir: &mut RunDir,
    trace_path: &Path,
    slide: &Path,
    top_k: Option<usize>,
    raw_rows: bool,
) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(trace_path).map_err(|e| Error::io(trace_path, e))?;
    let trace: AttentionTrace = serde_json::from_str(&text).map_err(|e| Error::format(trace_path, e.to_string()))?;
    let trace = AttentionTrace::new(trace.tokens, trace.layers, trace.heads, trace.n_visual, trace.values)?;
    let m = SlideManifest::load(slide)?;
    let grid = PatchGrid::load(&m.grid)?;
    if grid.tissue_count() != trace.n_visual {
        return Err(Error::usage(format!("trace covers {} patches, slide has {}", trace.n_visual, grid.tissue_count())));
    }
    let norm = if raw_rows { RowNorm::Raw } else { cfg.interpret.rows };
    let sal = saliency(&trace, top_k.unwrap_or(cfg.interpret.top_k), norm)?;
    dir.write("saliency.csv", saliency_csv(&sal, &grid)?)?;
    let thumb = thumbnail(&Raster::read(&m.raster)?, THUMBNAIL_SIDE)?;
    dir.write("overlay.ppm", render_overlay(&thumb, &grid, &sal)?.encode_pnm())?;
    Ok(json!({ "slide": m.slide_id, "top": sal.ranked }))
}

fn client(cfg: &RunConfig, c: &ClientConfig) -> Result<Box<dyn ChatClient>> {
    Ok(match &c.replay {
        Some(p) => Box::new(ReplayClient::load(&cfg.data_path(p), c.endpoint.model.clone(), c.endpoint.temperature)?),
        None => Box::new(LiveClient::new(c.endpoint.clone())?),
    })
}

#[derive(Deserialize)]
struct CaptionPrediction {
    id: String,
    text: String,
}

fn caption_evaluate(
    cfg: &RunConfig,
    dir: &mut RunDir,
    references: &Path,
    predictions: &Path,
    judge: bool,
) -> Result<serde_json::Value> {
    let refs: Vec<CaptionRecord> = read_jsonl(references)?;
    let preds: HashMap<String, String> =
        read_jsonl::<CaptionPrediction>(predictions)?.into_iter().map(|p| (p.id, p.text)).collect();
    let judge_client = if judge {
        let c = cfg.clients.judge.as_ref().ok_or_else(|| Error::config("clients.judge", "--judge needs a judge client"))?;
        Some(client(cfg, c)?)
    } else {
        None
    };
    let report = caption_eval(&refs, &preds, judge_client.as_deref(), cfg.jobs)?;
    dir.write("caption_scores.csv", caption_scores_csv(&report))?;
    let summary = json!({
        "bleu": report.mean_bleu,
        "rouge_l": report.mean_rouge_l,
        "judge": report.mean_judge,
        "judge_missing": report.judge_missing,
        "missing_predictions": report.missing_predictions,
        "judge_prompt_hash": report.judge_prompt_hash,
    });
    dir.write("caption_summary.json", serde_json::to_string_pretty(&summary).expect("json") + "\n")?;
    Ok(summary)
}

#[derive(Deserialize)]
struct VqaPrediction {
    id: String,
    reply: String,
}

fn write_vqa_reports(dir: &mut RunDir, name: &str, records: &[QARecord], replies: &HashMap<String, String>) -> Result<serde_json::Value> {
    let report = vqa_eval(records, replies)?;
    dir.write("summary.csv", summary_csv(name, &report))?;
    dir.write("breakdown.csv", evaluation::breakdown_csv(&report))?;
    dir.write("outcomes.csv", evaluation::outcomes_csv(&report))?;
    Ok(json!({ "model": name, "correct": report.overall.correct, "total": report.overall.total, "accuracy": report.overall.accuracy() }))
}

fn vqa_evaluate(
    cfg: &RunConfig,
    dir: &mut RunDir,
    records: &Path,
    predictions: Option<&Path>,
    predictor: Option<Predictor>,
    model_name: Option<&str>,
) -> Result<serde_json::Value> {
    let recs = load_records(records)?;
    let (replies, default_name) = match (predictions, predictor) {
        (Some(p), _) => (read_jsonl::<VqaPrediction>(p)?.into_iter().map(|p| (p.id, p.reply)).collect(), "model"),
        (None, Some(Predictor::Random)) => (random_predictions(&recs, cfg.seed), "random"),
        (None, None) => return Err(Error::usage("give --predictions or --predictor")),
    };
    write_vqa_reports(dir, model_name.unwrap_or(default_name), &recs, &replies)
}

fn baseline(
    cfg: &RunConfig,
    dir: &mut RunDir,
    protocol: Protocol,
    records: &Path,
    slides: &[PathBuf],
    checkpoint: Option<&Path>,
) -> Result<serde_json::Value> {
    let recs = load_records(records)?;
    let seeds = SeedStream::new(cfg.seed);
    let letter = |c: Option<char>| c.map(String::from).unwrap_or_default();
    let (name, replies): (&str, HashMap<String, String>) = match protocol {
        Protocol::TextOnly => {
            let c = cfg.clients.baseline.as_ref().ok_or_else(|| Error::config("clients.baseline", "text-only needs a client"))?;
            let client = client(cfg, c)?;
            let model = ChatModel(client.as_ref());
            let replies = recs
                .par_iter()
                .map(|r| Ok((r.id.clone(), letter(text_only_baseline(r, &model)?))))
                .collect::<Result<_>>()?;
            ("text-only", replies)
        }
        Protocol::MajorityVote | Protocol::Thumbnail => {
            let ckpt = checkpoint.ok_or_else(|| Error::usage("this protocol needs --checkpoint"))?;
            let (model, _) = SlideChat::load(ckpt)?;
            let vqa = SlideChatModel {
                model: &model,
                filter: cfg.tiling,
                generate: GenerateConfig { capture_attention: false, ..cfg.generate.clone() },
            };
            let loaded = load_slides(slides, None)?;
            let mut replies = HashMap::new();
            for r in &recs {
                let s = loaded
                    .get(&r.slide_id)
                    .ok_or_else(|| Error::usage(format!("record {} refers to unloaded slide {}", r.id, r.slide_id)))?;
                let raster = Raster::read(&s.manifest.raster)?;
                let choice = if protocol == Protocol::MajorityVote {
                    let patches = tissue_patches(&raster, &s.grid)?;
                    majority_vote_baseline(&patches, r, &vqa, cfg.baseline.patches, seeds.child(&r.id).seed())?
                } else {
                    let rel = format!("thumbnails/{}.ppm", r.slide_id);
                    let p = dir.path(&rel);
                    if !p.exists() {
                        dir.write(&rel, thumbnail(&raster, THUMBNAIL_SIDE)?.encode_pnm())?;
                    }
                    thumbnail_baseline(&p, r, &vqa)?
                };
                replies.insert(r.id.clone(), letter(choice));
            }
            (if protocol == Protocol::MajorityVote { "majority-vote" } else { "thumbnail" }, replies)
        }
    };
    let mut preds: Vec<(&String, &String)> = replies.iter().collect();
    preds.sort();
    let lines: Vec<serde_json::Value> = preds.iter().map(|(id, r)| json!({ "id": id, "reply": r })).collect();
    dir.write("predictions.jsonl", jsonl(&lines))?;
    write_vqa_reports(dir, name, &recs, &replies)
}

fn curate(cfg: &RunConfig, dir: &mut RunDir, reports: Option<&Path>, labels: Option<&Path>) -> Result<serde_json::Value> {
    let mut summary = serde_json::Map::new();
    if let Some(path) = labels {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut recs = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let [slide, task, label] = cols[..] else {
                return Err(Error::format(path, format!("line {}: expected slide_id,task,label", i + 1)));
            };
            recs.push(curation::bcnb_to_vqa(task, slide, label).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?);
        }
        recs.sort_by(|a, b| a.id.cmp(&b.id));
        dir.write("label_vqa.jsonl", records_to_jsonl(&recs))?;
        summary.insert("label_records".into(), recs.len().into());
    }
    if let Some(path) = reports {
        let reports = curation::load_reports(path)?;
        let gen_cfg = cfg.clients.generator.as_ref().ok_or_else(|| Error::config("clients.generator", "curation needs a generator client"))?;
        if cfg.clients.filters.len() != curation::stages::ENSEMBLE_SIZE {
            return Err(Error::config("clients.filters", "curation needs exactly 4 filter clients"));
        }
        let generator = client(cfg, gen_cfg)?;
        let filters: Vec<Box<dyn ChatClient>> = cfg.clients.filters.iter().map(|c| client(cfg, c)).collect::<Result<_>>()?;
        let refs: Vec<&dyn ChatClient> = filters.iter().map(|b| b.as_ref()).collect();
        let cache_path = dir.path("cache.jsonl");
        let cache = PromptCache::open(&cache_path)?;
        let out = curation::curate(&reports, generator.as_ref(), &refs, &cache, cfg.jobs, cfg.seed)?;
        out.write(dir.root())?;
        for name in curation::OUTPUT_FILES {
            dir.track(dir.path(name));
        }
        summary.insert("reports".into(), reports.len().into());
        summary.insert("flagged".into(), out.flagged.len().into());
        summary.insert("train_qas".into(), out.train_qas.len().into());
        summary.insert("bench_vqa".into(), out.bench_vqa.len().into());
    }
    Ok(serde_json::Value::Object(summary))
}
