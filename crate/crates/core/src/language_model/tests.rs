use super::*;
use crate::numerics::gradcheck::check_param_grads;
use crate::numerics::{rng, AdamW, Graph, ParamStore, SeedStream, Tensor};

fn tiny_cfg() -> DecoderConfig {
    DecoderConfig { dim: 8, heads: 2, layers: 2, ffn_mult: 2, max_text_len: 16, causal_visual: false }
}

fn setup(seed: u64, vocab: usize) -> (ParamStore, DecoderConfig) {
    let cfg = tiny_cfg();
    let mut store = ParamStore::new();
    init_decoder(&mut store, &cfg, vocab, &SeedStream::new(seed)).unwrap();
    (store, cfg)
}

#[test]
fn future_tokens_do_not_change_past_logits() {
    let (store, cfg) = setup(1, 12);
    let vis = rng::uniform(&mut SeedStream::new(2).rng("v"), &[3, 8], -1.0, 1.0);
    let a = assemble_ids(3, &[6, 7, 8], Some(&[9, 10, 11])).unwrap();
    let mut b = a.clone();
    let last = b.len() - 2;
    b.tokens[last] = 6;
    let la = logits_tensor(&store, &cfg, &vis, &a).unwrap();
    let lb = logits_tensor(&store, &cfg, &vis, &b).unwrap();
    for t in 0..a.len() {
        let d: f64 = la.row(t).iter().zip(lb.row(t)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if t < last {
            assert!(d == 0.0, "position {t} changed by {d}");
        } else {
            assert!(d > 0.0);
        }
    }
}

#[test]
fn visual_perturbation_reaches_first_answer_logits() {
    let (store, cfg) = setup(3, 12);
    let vis = rng::uniform(&mut SeedStream::new(4).rng("v"), &[4, 8], -1.0, 1.0);
    let seq = assemble_ids(4, &[6, 7], Some(&[8])).unwrap();
    let q = seq.answer_start() - 1;
    let base = logits_tensor(&store, &cfg, &vis, &seq).unwrap();
    for p in 0..4 {
        let mut v2 = vis.clone();
        v2.data_mut()[p * 8] += 0.5;
        let l2 = logits_tensor(&store, &cfg, &v2, &seq).unwrap();
        let d: f64 = base.row(q).iter().zip(l2.row(q)).map(|(x, y)| (x - y).abs()).sum();
        assert!(d > 1e-8, "visual token {p} had no effect");
    }
}

#[test]
fn visual_span_bidirectional_unless_flagged() {
    let seq = assemble_ids(3, &[6], None).unwrap();
    let t = seq.len();
    let m = attention_mask(&seq, false);
    assert!(m[t + 3], "first visual token sees the last");
    assert!(!m[1], "<img> stays causal");
    assert!(m[5 * t + 2] && !m[2 * t + 5]);
    let c = attention_mask(&seq, true);
    assert!(!c[t + 3]);
}

#[test]
fn prompt_logits_never_affect_the_loss() {
    let (store, cfg) = setup(5, 12);
    let vis = rng::uniform(&mut SeedStream::new(6).rng("v"), &[2, 8], -1.0, 1.0);
    let seq = assemble_ids(2, &[6, 7, 8], Some(&[9, 10])).unwrap();
    let logits = logits_tensor(&store, &cfg, &vis, &seq).unwrap();
    let (targets, mask) = seq.shifted_targets();
    let loss_of = |l: Tensor| {
        let mut g = Graph::new();
        let v = g.constant(l);
        let ce = g.cross_entropy(v, &targets, &mask).unwrap();
        g.value(ce).item()
    };
    let mut zeroed = logits.clone();
    let v = zeroed.cols();
    for t in (0..seq.len()).filter(|&t| !mask[t]) {
        zeroed.data_mut()[t * v..(t + 1) * v].fill(0.0);
    }
    assert_eq!(loss_of(logits), loss_of(zeroed));
}

#[test]
fn decoder_gradients_over_seeds() {
    for seed in 0..4 {
        let (mut store, cfg) = setup(seed, 10);
        let vis = rng::uniform(&mut SeedStream::new(seed + 100).rng("v"), &[2, 8], -1.0, 1.0);
        let seq = assemble_ids(2, &[6, 7], Some(&[8, 9])).unwrap();
        let rep = check_param_grads(&mut store, 1e-5, 6, |s, g| {
            let v = g.constant(vis.clone());
            let out = forward_logits(g, s, &cfg, v, &seq)?;
            answer_loss(g, &out, &seq)
        })
        .unwrap();
        assert!(rep.passed(1e-4), "seed {seed}: {rep:?}");
    }
}

#[test]
fn generation_shapes_and_determinism() {
    let vocab = Vocab::from_corpus(["a b c d e f"]);
    let (store, cfg) = setup(7, vocab.len());
    let vis = rng::uniform(&mut SeedStream::new(8).rng("v"), &[5, 8], -1.0, 1.0);
    let prompt = assemble_ids(5, &vocab.tokenize("a b"), None).unwrap();
    let one = GenerateConfig { max_len: 1, capture_attention: true };
    let g1 = generate(&store, &cfg, &vocab, &vis, &prompt, &one).unwrap();
    assert_eq!(g1.tokens.len(), 1);
    assert_eq!(g1.trace.as_ref().unwrap().dims(), [1, 2, 2, 5]);

    let many = GenerateConfig { max_len: 6, capture_attention: true };
    let a = generate(&store, &cfg, &vocab, &vis, &prompt, &many).unwrap();
    let b = generate(&store, &cfg, &vocab, &vis, &prompt, &many).unwrap();
    assert_eq!(a.tokens, b.tokens);
    let tr = a.trace.unwrap();
    assert_eq!(tr.dims(), [a.tokens.len(), 2, 2, 5]);
    for t in 0..tr.tokens {
        for l in 0..2 {
            for h in 0..2 {
                let s: f64 = tr.row(t, l, h).iter().sum();
                assert!(s > 0.0 && s <= 1.0 + 1e-12);
            }
        }
    }
    assert!(generate(&store, &cfg, &vocab, &vis, &prompt, &GenerateConfig { max_len: 0, capture_attention: false }).is_err());
}

#[test]
fn argmax_breaks_ties_low() {
    assert_eq!(argmax(&[0.1, 0.3, 0.3, 0.2]), 1);
    assert_eq!(argmax(&[2.0, 2.0]), 0);
}

#[test]
fn memorizes_one_caption() {
    let caption = "dense tumor cells with necrosis";
    let vocab = Vocab::from_corpus([caption, "describe the slide"]);
    let (mut store, cfg) = setup(9, vocab.len());
    let vis = rng::uniform(&mut SeedStream::new(10).rng("v"), &[3, 8], -1.0, 1.0);
    let seq = assemble(&vocab, &vis, 8, "describe the slide", Some(caption)).unwrap();
    let mut opt = AdamW::new(&store, 1e-2);
    let mut loss = f64::INFINITY;
    for _ in 0..300 {
        store.zero_grads();
        let mut g = Graph::new();
        let v = g.constant(vis.clone());
        let out = forward_logits(&mut g, &store, &cfg, v, &seq).unwrap();
        let l = answer_loss(&mut g, &out, &seq).unwrap();
        loss = g.value(l).item();
        g.backward(l, &mut store).unwrap();
        opt.step(&mut store).unwrap();
    }
    assert!(loss < 0.05, "loss {loss}");
    let prompt = assemble(&vocab, &vis, 8, "describe the slide", None).unwrap();
    let out = generate(&store, &cfg, &vocab, &vis, &prompt, &GenerateConfig::default()).unwrap();
    assert_eq!(out.text, caption);
    assert_eq!(*out.tokens.last().unwrap(), vocab::EOS);
}
