use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::metrics::{bleu_n, rouge_l};
use super::vqa::csv_field;
use crate::curation::cache::sha256_hex;
use crate::curation::client::{ChatClient, Message};
use crate::error::Result;

/// Judge prompt; `{reference}` and `{candidate}` are substituted.
pub const JUDGE_TEMPLATE: &str = "You are grading a generated pathology slide description against a reference description.\n\
Reference: {reference}\n\
Candidate: {candidate}\n\
Rate how accurately and completely the candidate conveys the findings of the reference on an integer scale from 1 (unrelated or wrong) to 10 (equivalent). Reply in the form \"Score: N\".";

pub const JUDGE_ATTEMPTS: usize = 3;

pub fn judge_prompt_hash() -> String {
    sha256_hex(JUDGE_TEMPLATE)
}

static LABELED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bscore\s*[:=]?\s*(\d+)").unwrap());
static OUT_OF_TEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(\d+)\s*/\s*10\b").unwrap());

/// Extracts a 1..=10 score: a bare integer reply, then `Score: N`
/// (optionally `N/10`), then the first `N/10`.
pub fn parse_score(reply: &str) -> Option<u8> {
    let in_range = |v: &str| v.parse::<u8>().ok().filter(|s| (1..=10).contains(s));
    let t = reply.trim().trim_end_matches('.');
    if let Ok(v) = t.parse::<u8>() {
        return (1..=10).contains(&v).then_some(v);
    }
    LABELED
        .captures(reply)
        .and_then(|c| in_range(&c[1]))
        .or_else(|| OUT_OF_TEN.captures(reply).and_then(|c| in_range(&c[1])))
}

/// Asks `client` up to three times; `None` when no reply parses.
pub fn judge_caption(candidate: &str, reference: &str, client: &dyn ChatClient) -> Option<u8> {
    let prompt = JUDGE_TEMPLATE.replace("{reference}", reference).replace("{candidate}", candidate);
    let msgs = [Message::user(prompt)];
    for attempt in 1..=JUDGE_ATTEMPTS {
        match client.complete(&msgs) {
            Ok(reply) => match parse_score(&reply) {
                Some(s) => return Some(s),
                None => log::warn!("judge reply {attempt} unparseable: {reply:?}"),
            },
            Err(e) => log::warn!("judge call {attempt} failed: {e}"),
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub id: String,
    pub slide_id: String,
    pub caption: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaptionScore {
    pub id: String,
    pub bleu: [f64; 4],
    pub rouge_l: f64,
    pub judge: Option<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaptionReport {
    pub rows: Vec<CaptionScore>,
    pub mean_bleu: [f64; 4],
    pub mean_rouge_l: f64,
    /// Mean over parsed judge scores.
    pub mean_judge: Option<f64>,
    pub judge_missing: usize,
    pub judge_prompt_hash: Option<String>,
    pub missing_predictions: usize,
}

/// BLEU-1..4 and ROUGE-L per record, plus judge scores when a client is
/// given (at most `jobs` calls in flight). A record without a prediction is
/// scored against an empty candidate.
pub fn caption_eval(
    records: &[CaptionRecord],
    predictions: &std::collections::HashMap<String, String>,
    judge: Option<&dyn ChatClient>,
    jobs: usize,
) -> Result<CaptionReport> {
    let score = |r: &CaptionRecord| {
        let cand = predictions.get(&r.id).map_or("", String::as_str);
        let refs = [r.caption.as_str()];
        let bleu = [1, 2, 3, 4].map(|n| bleu_n(cand, &refs, n));
        let judge = judge.filter(|_| !cand.is_empty()).and_then(|c| judge_caption(cand, &r.caption, c));
        CaptionScore { id: r.id.clone(), bleu, rouge_l: rouge_l(cand, &r.caption), judge }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| crate::error::Error::usage(e.to_string()))?;
    let mut rows: Vec<CaptionScore> = pool.install(|| {
        use rayon::prelude::*;
        records.par_iter().map(score).collect()
    });
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    let n = rows.len().max(1) as f64;
    let mean_bleu = std::array::from_fn(|k| rows.iter().map(|r| r.bleu[k]).sum::<f64>() / n);
    let mean_rouge_l = rows.iter().map(|r| r.rouge_l).sum::<f64>() / n;
    let scored: Vec<f64> = rows.iter().filter_map(|r| r.judge).map(f64::from).collect();
    let judged = judge.is_some();
    Ok(CaptionReport {
        mean_judge: (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64),
        judge_missing: if judged { rows.len() - scored.len() } else { 0 },
        judge_prompt_hash: judged.then(judge_prompt_hash),
        missing_predictions: records.iter().filter(|r| !predictions.contains_key(&r.id)).count(),
        mean_bleu,
        mean_rouge_l,
        rows,
    })
}

pub fn caption_scores_csv(report: &CaptionReport) -> String {
    let mut s = String::from("id,bleu1,bleu2,bleu3,bleu4,rouge_l,judge\n");
    for r in &report.rows {
        let j = r.judge.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{j}\n",
            csv_field(&r.id),
            r.bleu[0],
            r.bleu[1],
            r.bleu[2],
            r.bleu[3],
            r.rouge_l
        ));
    }
    s
}
