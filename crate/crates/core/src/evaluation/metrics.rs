//! Caption metrics over normalized word tokens.

use std::collections::HashMap;

/// Lowercases, replaces punctuation with spaces and splits on whitespace.
pub fn metric_tokens(text: &str) -> Vec<String> {
    text.chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(String::from)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped n-gram matches and candidate n-gram total.
pub fn modified_precision(cand: &[String], refs: &[Vec<String>], n: usize) -> (usize, usize) {
    let c = ngram_counts(cand, n);
    let total = cand.len().saturating_sub(n - 1);
    let ref_counts: Vec<_> = refs.iter().map(|r| ngram_counts(r, n)).collect();
    let matched = c
        .iter()
        .map(|(g, &k)| k.min(ref_counts.iter().map(|rc| rc.get(g).copied().unwrap_or(0)).max().unwrap_or(0)))
        .sum();
    (matched, total)
}

/// Reference length closest to `c`; ties go to the shorter reference.
pub fn closest_ref_len(c: usize, refs: &[Vec<String>]) -> usize {
    refs.iter().map(Vec::len).min_by_key(|&r| (r.abs_diff(c), r)).unwrap_or(0)
}

/// BLEU-`n`: geometric mean of clipped 1..n-gram precisions times the
/// brevity penalty, without smoothing. An empty candidate scores 0.
pub fn bleu_n(candidate: &str, references: &[&str], n: usize) -> f64 {
    assert!((1..=4).contains(&n), "BLEU order must be in 1..=4");
    let cand = metric_tokens(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| metric_tokens(r)).collect();
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for k in 1..=n {
        let (m, t) = modified_precision(&cand, &refs, k);
        if m == 0 || t == 0 {
            return 0.0;
        }
        log_sum += (m as f64 / t as f64).ln();
    }
    let c = cand.len();
    let r = closest_ref_len(c, &refs);
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * (log_sum / n as f64).exp()
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure `2PR / (P + R)` over the longest common subsequence.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let c = metric_tokens(candidate);
    let r = metric_tokens(reference);
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let l = lcs_len(&c, &r) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let (p, rec) = (l / c.len() as f64, l / r.len() as f64);
    2.0 * p * rec / (p + rec)
}
