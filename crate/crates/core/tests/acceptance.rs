//! Acceptance suite: one pass/fail line per criterion, each checked
//! against an oracle written here and a runtime budget.

use std::collections::{BTreeSet, HashMap};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use slidechat::curation::{ensemble_filter, split_assign, ChatClient, FnClient, Message, PromptCache, ReportRecord};
use slidechat::encoder_stack::{
    dilated_attention_tensor, init_slide_encoder, project, projector::init_projector, slide_encode, Branch,
    EncoderConfig, ProjectorKind,
};
use slidechat::evaluation::{
    bleu_n, majority_vote_baseline, metric_tokens, narrow_category, plurality, random_predictions, rouge_l,
    sample_patches, synthetic_benchmark, vqa_eval, QARecord, QuestionType, VqaModel,
};
use slidechat::interpret::{saliency, AttentionTrace, RowNorm};
use slidechat::language_model::{answer_loss, assemble_ids, forward_logits, init_decoder, DecoderConfig, Vocab};
use slidechat::model::{ModelConfig, SlideChat, SlideInput};
use slidechat::numerics::{rng, Graph, ParamStore, SeedStream, Tensor, Var};
use slidechat::slide_io::{synth_slide, tile_slide, Raster, SynthSpec, TissueFilter, TissueKind};
use slidechat::training::{cohort_samples, encode_slide, overfit_probe, run_stage, synthetic_cohort, Dataset, ProbeConfig, StageConfig, TaskKind};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// 1
fn random_baseline() -> Outcome {
    let recs = synthetic_benchmark(4000, 2024);
    let preds = random_predictions(&recs, 7);
    let acc = vqa_eval(&recs, &preds).map_err(e2s)?.overall.accuracy();
    let hits = recs.iter().filter(|r| preds[&r.id] == r.answer).count() as f64 / recs.len() as f64;
    ensure((acc - hits).abs() < 1e-15, || format!("harness {acc} disagrees with direct count {hits}"))?;
    ensure((acc - 0.25).abs() <= 0.02, || format!("accuracy {acc:.4} outside 0.25 ± 0.02"))?;
    Ok(format!("accuracy {:.2}% over {} items", 100.0 * acc, recs.len()))
}

fn dense(q: &Tensor, k: &Tensor, v: &Tensor) -> Vec<f64> {
    let (n, d) = (q.rows(), q.cols());
    let mut out = vec![0.0; n * v.cols()];
    for i in 0..n {
        let s: Vec<f64> = (0..n).map(|j| (0..d).map(|c| q.at(i, c) * k.at(j, c)).sum::<f64>() / (d as f64).sqrt()).collect();
        let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = s.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = e.iter().sum();
        for (j, ej) in e.iter().enumerate() {
            for c in 0..v.cols() {
                out[i * v.cols() + c] += ej / z * v.at(j, c);
            }
        }
    }
    out
}

// 2
fn dense_equivalence() -> Outcome {
    let mut r = SeedStream::new(2).rng("dense");
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (n, d) = (r.gen_range(1..=32), r.gen_range(1..=64));
        let q = rng::uniform(&mut r, &[n, d], -2.0, 2.0);
        let k = rng::uniform(&mut r, &[n, d], -2.0, 2.0);
        let v = rng::uniform(&mut r, &[n, d], -2.0, 2.0);
        let got = dilated_attention_tensor(&q, &k, &v, Branch::new(n, 1), 0).map_err(e2s)?;
        let want = dense(&q, &k, &v);
        let diff = got.data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(diff);
    }
    ensure(worst <= 1e-9, || format!("max abs diff {worst:e}"))?;
    Ok(format!("max abs diff {worst:.2e} over 100 inputs"))
}

/// Central differences on up to `per_param` evenly strided elements of
/// every parameter; returns the worst `|a − n| / (|a| + 1e-8)`.
fn fd_check(store: &mut ParamStore, per_param: usize, f: &dyn Fn(&ParamStore, &mut Graph) -> Var) -> Result<f64, String> {
    const H: f64 = 1e-5;
    store.zero_grads();
    let mut g = Graph::new();
    let loss = f(store, &mut g);
    g.backward(loss, store).map_err(e2s)?;
    let eval = |s: &ParamStore| {
        let mut g = Graph::new();
        let l = f(s, &mut g);
        g.value(l).item()
    };
    let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
    let mut worst: f64 = 0.0;
    for name in names {
        let id = store.expect_id(&name).map_err(e2s)?;
        let len = store.get(id).value.len();
        let stride = (len / per_param).max(1);
        for i in (0..len).step_by(stride).take(per_param) {
            let analytic = store.get(id).grad.data()[i];
            let orig = store.get(id).value.data()[i];
            let set = |s: &mut ParamStore, v: f64| {
                s.iter_mut().find(|(n, _)| *n == name).expect("param").1.value.data_mut()[i] = v;
            };
            set(store, orig + H);
            let up = eval(store);
            set(store, orig - H);
            let down = eval(store);
            set(store, orig);
            let numeric = (up - down) / (2.0 * H);
            worst = worst.max((analytic - numeric).abs() / (analytic.abs() + 1e-8));
        }
    }
    Ok(worst)
}

fn weighted_sum(g: &mut Graph, y: Var, w: &Tensor) -> Var {
    let wv = g.constant(w.clone());
    let p = g.mul(y, wv);
    g.sum(p)
}

// 3
fn gradient_suite() -> Outcome {
    const SEEDS: u64 = 20;
    let enc = EncoderConfig {
        patch_dim: 6,
        slide_dim: 8,
        heads: 2,
        layers: 1,
        ffn_mult: 2,
        branches: vec![Branch::new(2, 1), Branch::new(4, 2)],
        ..EncoderConfig::default()
    };
    let lm = DecoderConfig { dim: 8, heads: 2, layers: 1, ffn_mult: 2, max_text_len: 16, causal_visual: false };
    let mut worst = [0.0f64; 4];
    for seed in 0..SEEDS {
        let seeds = SeedStream::new(1000 + seed);
        let x = rng::uniform(&mut seeds.rng("x"), &[5, 6], -1.0, 1.0);

        let mut s = ParamStore::new();
        init_slide_encoder(&mut s, &enc, &seeds).map_err(e2s)?;
        let w = rng::uniform(&mut seeds.rng("w_enc"), &[5, 8], -1.0, 1.0);
        worst[0] = worst[0].max(fd_check(&mut s, 4, &|st, g| {
            let xv = g.constant(x.clone());
            let y = slide_encode(g, st, &enc, xv, None).expect("encode");
            weighted_sum(g, y, &w)
        })?);

        let kind = if seed % 2 == 0 { ProjectorKind::Mlp } else { ProjectorKind::Linear };
        let mut s = ParamStore::new();
        init_projector(&mut s, kind, 6, 7, &seeds);
        let w = rng::uniform(&mut seeds.rng("w_proj"), &[5, 7], -1.0, 1.0);
        worst[1] = worst[1].max(fd_check(&mut s, 6, &|st, g| {
            let xv = g.constant(x.clone());
            let y = project(g, st, kind, xv).expect("project");
            weighted_sum(g, y, &w)
        })?);

        let mut s = ParamStore::new();
        init_decoder(&mut s, &lm, 12, &seeds).map_err(e2s)?;
        let vis = rng::uniform(&mut seeds.rng("vis"), &[3, 8], -1.0, 1.0);
        let seq = assemble_ids(3, &[6, 7], Some(&[8, 9, 10])).map_err(e2s)?;
        worst[2] = worst[2].max(fd_check(&mut s, 4, &|st, g| {
            let v = g.constant(vis.clone());
            let out = forward_logits(g, st, &lm, v, &seq).expect("decoder");
            answer_loss(g, &out, &seq).expect("loss")
        })?);

        let vocab = Vocab::from_corpus(["describe the slide", "tumor with necrosis"]);
        let cfg = ModelConfig { patch_size: 8, encoder: enc.clone(), lm: lm.clone() };
        let model = SlideChat::init(cfg, vocab, &seeds).map_err(e2s)?;
        let slide = SlideInput::new(x.clone(), (0..5).map(|i| (i / 3, i % 3)).collect()).map_err(e2s)?;
        let mut s = model.store.clone();
        worst[3] = worst[3].max(fd_check(&mut s, 3, &|st, g| {
            let m = SlideChat { config: model.config.clone(), vocab: model.vocab.clone(), store: st.clone() };
            m.sample_loss(g, &slide, "describe the slide", "tumor with necrosis").expect("loss")
        })?);
    }
    let names = ["slide encoder layer", "projector", "LM block", "full pipeline"];
    for (n, w) in names.iter().zip(worst) {
        ensure(w < 1e-4, || format!("{n}: max rel err {w:e}"))?;
    }
    Ok(format!(
        "{SEEDS} seeds; max rel err encoder {:.1e}, projector {:.1e}, LM {:.1e}, pipeline {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn group_bits(store: &ParamStore, group: &str) -> Vec<(String, Vec<u64>)> {
    store
        .iter()
        .filter(|(n, _)| slidechat::numerics::group_of(n) == group)
        .map(|(n, p)| (n.to_string(), p.value.data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

// 4
fn freeze_contract() -> Outcome {
    let probe = ProbeConfig::new(4, 9);
    let slides = synthetic_cohort(4, probe.patch_size, 9).map_err(e2s)?;
    let samples = cohort_samples(&slides);
    let vocab = Dataset { slides: Default::default(), samples: samples.clone() }.vocab();
    let mut model = SlideChat::init(probe.model.clone(), vocab, &SeedStream::new(9)).map_err(e2s)?;
    let mut data = Dataset { samples, ..Dataset::default() };
    for s in &slides {
        data.slides.insert(s.id.clone(), encode_slide(&model, &s.raster, &TissueFilter::default()).map_err(e2s)?.1);
    }
    let init = model.store.clone();
    let groups = ["patch_encoder", "slide_encoder", "projector", "lm"];
    let seeds = SeedStream::new(9);
    run_stage(&mut model, &data, &StageConfig { epochs: 3, ..StageConfig::stage1() }, &seeds, None).map_err(e2s)?;
    let same1: Vec<bool> = groups.iter().map(|g| group_bits(&init, g) == group_bits(&model.store, g)).collect();
    ensure(same1 == [true, false, false, true], || format!("after stage 1, unchanged flags {same1:?}"))?;
    let s2 = StageConfig { epochs: 2, lr: 1e-3, tasks: vec![TaskKind::Caption, TaskKind::Vqa], ..StageConfig::stage2() };
    run_stage(&mut model, &data, &s2, &seeds, None).map_err(e2s)?;
    let same2: Vec<bool> = groups.iter().map(|g| group_bits(&init, g) == group_bits(&model.store, g)).collect();
    ensure(same2 == [true, false, false, false], || format!("after stage 2, unchanged flags {same2:?}"))?;
    Ok("stage 1 leaves patch encoder and LM bit-identical; stage 2 only the patch encoder".into())
}

// 5
fn overfit_smoke() -> Outcome {
    let rep = overfit_probe(&ProbeConfig::new(8, 0)).map_err(e2s)?;
    ensure(rep.final_loss < 0.1, || format!("final CE {:.4}", rep.final_loss))?;
    ensure(rep.exact_matches >= 7, || format!("{}/8 exact", rep.exact_matches))?;
    Ok(format!("answer CE {:.4}, {}/8 captions exact", rep.final_loss, rep.exact_matches))
}

fn ngrams(t: &[String], n: usize) -> Vec<Vec<String>> {
    if t.len() < n {
        return vec![];
    }
    (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
}

fn brute_bleu(c: &str, r: &str, n: usize) -> f64 {
    let (c, r) = (metric_tokens(c), metric_tokens(r));
    if c.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for k in 1..=n {
        let (cg, rg) = (ngrams(&c, k), ngrams(&r, k));
        let mut used = vec![false; rg.len()];
        let mut hit = 0;
        for g in &cg {
            if let Some(j) = (0..rg.len()).find(|&j| !used[j] && rg[j] == *g) {
                used[j] = true;
                hit += 1;
            }
        }
        if hit == 0 {
            return 0.0;
        }
        log_sum += (hit as f64 / cg.len() as f64).ln();
    }
    let bp = if c.len() > r.len() { 1.0 } else { (1.0 - r.len() as f64 / c.len() as f64).exp() };
    bp * (log_sum / n as f64).exp()
}

/// LCS by enumerating candidate subsequences of the shorter side.
fn brute_lcs(a: &[String], b: &[String]) -> usize {
    let (s, l) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let is_sub = |pick: &[&String]| {
        let mut it = l.iter();
        pick.iter().all(|p| it.any(|x| x == *p))
    };
    let mut best = 0;
    for mask in 0u32..(1 << s.len()) {
        let ones = mask.count_ones() as usize;
        if ones <= best {
            continue;
        }
        let pick: Vec<&String> = (0..s.len()).filter(|i| mask & (1 << i) != 0).map(|i| &s[i]).collect();
        if is_sub(&pick) {
            best = ones;
        }
    }
    best
}

// 6
fn metric_oracles() -> Outcome {
    let b = bleu_n("the the the the", &["the cat"], 1);
    ensure(b == 0.25, || format!("\"the the the the\" BLEU-1 = {b}"))?;
    const WORDS: [&str; 7] = ["tumor", "the", "cells", "Necrosis,", "grade", "of", "stroma."];
    let mut r = SeedStream::new(6).rng("metric pairs");
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let text = |r: &mut rand_chacha::ChaCha8Rng| {
            let n = r.gen_range(1..=12);
            (0..n).map(|_| WORDS[r.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
        };
        let (c, rf) = (text(&mut r), text(&mut r));
        for n in 1..=4 {
            worst = worst.max((bleu_n(&c, &[&rf], n) - brute_bleu(&c, &rf, n)).abs());
        }
        let (ct, rt) = (metric_tokens(&c), metric_tokens(&rf));
        let l = brute_lcs(&ct, &rt) as f64;
        let f = if l == 0.0 {
            0.0
        } else {
            let (p, q) = (l / ct.len() as f64, l / rt.len() as f64);
            2.0 * p * q / (p + q)
        };
        worst = worst.max((rouge_l(&c, &rf) - f).abs());
    }
    ensure(worst <= 1e-12, || format!("max diff {worst:e}"))?;
    Ok(format!("BLEU-1..4 and ROUGE-L max diff {worst:.1e} on 50 pairs; \"the the the the\" = 0.25"))
}

// 7
fn interpret_oracle() -> Outcome {
    let mut r = SeedStream::new(7).rng("traces");
    for case in 0..50 {
        let (t, l, h, n) = (r.gen_range(1..=4), r.gen_range(1..=3), r.gen_range(1..=3), r.gen_range(1..=40));
        let mut values = Vec::new();
        for _ in 0..t * l * h {
            let raw: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..1.0)).collect();
            let mass: f64 = r.gen_range(0.2..1.0);
            let z: f64 = raw.iter().sum();
            values.extend(raw.iter().map(|v| v / z * mass));
        }
        let trace = AttentionTrace::new(t, l, h, n, values.clone()).map_err(e2s)?;
        for norm in [RowNorm::Raw, RowNorm::Renormalized] {
            let rows = t * l * h;
            let mut mean = vec![0.0; n];
            for row in values.chunks(n) {
                let s = if norm == RowNorm::Raw { 1.0 } else { row.iter().sum::<f64>() };
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v / s / rows as f64;
                }
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| mean[b].partial_cmp(&mean[a]).unwrap().then(a.cmp(&b)));
            let sal = saliency(&trace, 5, norm).map_err(e2s)?;
            let got: Vec<usize> = sal.ranked.iter().map(|x| x.0).collect();
            ensure(got == order[..n.min(5)], || format!("case {case} {norm:?}: {got:?} vs {:?}", &order[..n.min(5)]))?;
            for (i, s) in &sal.ranked {
                ensure((s - mean[*i]).abs() <= 1e-12, || format!("case {case}: score of patch {i}"))?;
            }
        }
    }
    let uniform = AttentionTrace::new(2, 1, 2, 9, vec![1.0 / 9.0; 36]).map_err(e2s)?;
    let idx: Vec<usize> = saliency(&uniform, 5, RowNorm::default()).map_err(e2s)?.ranked.iter().map(|x| x.0).collect();
    ensure(idx == [0, 1, 2, 3, 4], || format!("uniform trace ranks {idx:?}"))?;
    Ok("top-5 indices and scores match over 50 traces; uniform ties rank lowest index first".into())
}

fn mc(id: &str, answer: &str) -> QARecord {
    let (narrow, broad) = narrow_category("Staging").expect("category");
    QARecord {
        id: id.into(),
        slide_id: "s".into(),
        question: "What stage?".into(),
        options: vec!["I".into(), "II".into(), "III".into(), "IV".into()],
        answer: answer.into(),
        question_type: QuestionType::MultiChoice,
        broad,
        narrow: narrow.into(),
        task: None,
    }
}

// 8
fn filter_truth_table() -> Outcome {
    let q = mc("q", "C");
    for mask in 0u32..16 {
        let clients: Vec<_> = (0..4)
            .map(|i| {
                let right = mask & (1 << i) != 0;
                FnClient::new(format!("m{i}"), move |_m: &[Message]| Ok(if right { "C." } else { "A" }.to_string()))
            })
            .collect();
        let refs: Vec<&dyn ChatClient> = clients.iter().map(|c| c as &dyn ChatClient).collect();
        let v = ensemble_filter(&q, &refs, &PromptCache::in_memory()).map_err(e2s)?;
        ensure(v.kept == (mask.count_ones() <= 2), || format!("vector {mask:04b}: kept = {}", v.kept))?;
    }
    Ok("all 16 correctness vectors: kept exactly when at most 2 models are correct".into())
}

// 9
fn split_properties() -> Outcome {
    let mut r = SeedStream::new(9).rng("link maps");
    for case in 0..200 {
        let mut next = 0;
        let reports: Vec<ReportRecord> = (0..r.gen_range(1..60))
            .map(|i| {
                let n = if r.gen_bool(0.7) { 1 } else { r.gen_range(2..5) };
                let slides = (0..n)
                    .map(|_| {
                        next += 1;
                        format!("s{next}")
                    })
                    .collect();
                ReportRecord { id: format!("r{i}"), patient_id: "p".into(), text: "t".into(), slides, cleaned: None }
            })
            .collect();
        let sp = split_assign(&reports, case).map_err(e2s)?;
        ensure(sp.train.is_disjoint(&sp.test), || format!("case {case}: overlap"))?;
        ensure(sp.train.len() + sp.test.len() == next, || format!("case {case}: slides lost"))?;
        for rep in reports.iter().filter(|x| x.slides.len() > 1) {
            ensure(rep.slides.iter().all(|s| sp.train.contains(s)), || format!("case {case}: {} split", rep.id))?;
        }
        let singles: BTreeSet<&String> = reports.iter().filter(|x| x.slides.len() == 1).map(|x| &x.slides[0]).collect();
        let in_train = singles.iter().filter(|s| sp.train.contains(**s)).count() as f64;
        ensure((in_train - 0.8 * singles.len() as f64).abs() <= 1.0, || format!("case {case}: {in_train} of {}", singles.len()))?;
    }
    Ok("200 link maps: multi-slide reports in train, 80/20 within one slide, disjoint".into())
}

// 10
fn tiling_exactness() -> Outcome {
    let mut r = SeedStream::new(10).rng("sizes");
    let filter = TissueFilter::default();
    for _ in 0..100 {
        let (w, h) = (r.gen_range(1..1600), r.gen_range(1..1600));
        let grid = tile_slide(&Raster::filled(w, h, [255, 255, 255]), 224, &filter).map_err(e2s)?;
        ensure(grid.entries.len() == (w / 224) * (h / 224), || format!("{w}x{h}: {} tiles", grid.entries.len()))?;
        ensure(grid.tissue_count() == 0, || format!("{w}x{h}: white raster has tissue"))?;
    }
    for seed in 0..10 {
        let (rows, cols) = (r.gen_range(1..4), r.gen_range(1..4));
        let layout: Vec<Vec<TissueKind>> =
            (0..rows).map(|_| (0..cols).map(|_| *TissueKind::ALL.choose(&mut r).unwrap()).collect()).collect();
        let (raster, labels) = synth_slide(seed, &SynthSpec::from_tiles(&layout, 224)).map_err(e2s)?;
        let grid = tile_slide(&raster, 224, &filter).map_err(e2s)?;
        let flags: Vec<bool> = grid.entries.iter().map(|e| e.tissue).collect();
        let want: Vec<bool> = labels.iter().map(|k| k.is_tissue()).collect();
        ensure(flags == want, || format!("seed {seed}: tissue flags {flags:?} vs labels {want:?}"))?;
    }
    Ok("100 sizes tile to floor(W/224)·floor(H/224), white is background, synthetic labels agree".into())
}

struct ColorVote;

impl VqaModel for ColorVote {
    fn reply(&self, image: Option<&Raster>, _prompt: &str) -> slidechat::Result<String> {
        let [r, g, _] = image.expect("patch").rgb(0, 0);
        Ok(match (r > 128, g > 128) {
            (true, _) => "C",
            (false, true) => "(B)",
            _ => "A.",
        }
        .to_string())
    }
}

// 11
fn baseline_protocol() -> Outcome {
    ensure(plurality(&[Some('A'), Some('A'), Some('B')]) == Some('A'), || "A,A,B".into())?;
    ensure(plurality(&[Some('B'), Some('A')]) == Some('A'), || "tie B,A".into())?;
    ensure(plurality(&[Some('D'), Some('C'), Some('C'), Some('D'), None]) == Some('C'), || "tie C,D".into())?;
    let colors = [[200, 0, 0], [0, 200, 0], [0, 0, 0]];
    let patches: Vec<Raster> = (0..90).map(|i| Raster::filled(4, 4, colors[(i * 7) % 3])).collect();
    let q = mc("q", "C");
    let mut results = HashMap::new();
    for seed in 0..5u64 {
        let a = majority_vote_baseline(&patches, &q, &ColorVote, 30, seed).map_err(e2s)?;
        let b = majority_vote_baseline(&patches, &q, &ColorVote, 30, seed).map_err(e2s)?;
        ensure(a == b, || format!("seed {seed} not deterministic"))?;
        let idx = sample_patches(patches.len(), 30, seed);
        ensure(idx == sample_patches(patches.len(), 30, seed) && idx.len() == 30, || "sample".into())?;
        let votes: Vec<Option<char>> = idx
            .iter()
            .map(|&i| Some(match colors[(i * 7) % 3] {
                [200, 0, 0] => 'C',
                [0, 200, 0] => 'B',
                _ => 'A',
            }))
            .collect();
        ensure(a == plurality(&votes), || format!("seed {seed}: {a:?}"))?;
        results.insert(seed, idx);
    }
    ensure(results[&0] != results[&1], || "different seeds sample the same patches".into())?;
    Ok("k=30 majority vote deterministic per seed, plurality with alphabetical ties".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("random baseline 25% ± 2%", Duration::from_secs(10), random_baseline),
        ("dense-equivalence oracle", Duration::from_secs(30), dense_equivalence),
        ("gradient suite", Duration::from_secs(300), gradient_suite),
        ("freeze contract", Duration::from_secs(120), freeze_contract),
        ("overfit smoke", Duration::from_secs(600), overfit_smoke),
        ("metric oracles", Duration::from_secs(5), metric_oracles),
        ("interpretability oracle", Duration::from_secs(5), interpret_oracle),
        ("filter truth table", Duration::from_secs(5), filter_truth_table),
        ("split properties", Duration::from_secs(5), split_properties),
        ("tiling exactness", Duration::from_secs(30), tiling_exactness),
        ("baseline protocol", Duration::from_secs(5), baseline_protocol),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let took = t.elapsed();
        let outcome = match outcome {
            Ok(msg) if took > *budget => Err(format!("{msg}; took {took:.1?}, budget {budget:?}")),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("PASS  {:>2}. {name}: {msg} ({took:.2?})", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {:>2}. {name}: {msg} ({took:.2?})", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
