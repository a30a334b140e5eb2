use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::cache::{CacheKey, PromptCache};
use super::client::{ChatClient, Message};
use super::templates;
use crate::error::{Error, Result};
use crate::evaluation::{extract_choice, narrow_category, Broad, QARecord, QuestionType};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRecord {
    pub id: String,
    pub patient_id: String,
    pub text: String,
    pub slides: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cleaned: Option<String>,
}

impl ReportRecord {
    pub fn validate(&self) -> Result<()> {
        if self.slides.is_empty() {
            return Err(Error::usage(format!("report {} links no slides", self.id)));
        }
        Ok(())
    }
}

/// A model reply together with the hash of the template that produced it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamped {
    pub text: String,
    pub prompt_hash: String,
}

/// Sends `messages` unless the cache already holds a reply for
/// `(template_hash, input, model)`. Failures are not cached.
pub fn cached_complete(
    cache: &PromptCache,
    client: &dyn ChatClient,
    template_hash: &str,
    input: &str,
    messages: &[Message],
) -> Result<String> {
    let key = CacheKey::new(template_hash, input, client.model());
    if let Some(hit) = cache.get(&key) {
        return Ok(hit);
    }
    let reply = client.complete(messages)?;
    cache.put(key, &reply)?;
    Ok(reply)
}

pub fn clean_report(report: &ReportRecord, client: &dyn ChatClient, cache: &PromptCache) -> Result<Stamped> {
    if report.text.trim().is_empty() {
        return Err(Error::usage(format!("report {} is empty", report.id)));
    }
    let hash = templates::report_clean_hash();
    let user = format!("{}\n\n{}", templates::REPORT_CLEAN, report.text);
    let text = cached_complete(cache, client, &hash, &report.text, &[Message::user(user)])?;
    Ok(Stamped { text: text.trim().to_string(), prompt_hash: hash })
}

/// Joins the non-empty lines of a reply with single spaces.
pub fn single_paragraph(reply: &str) -> String {
    reply.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ")
}

pub fn gen_caption(cleaned: &str, client: &dyn ChatClient, cache: &PromptCache) -> Result<Stamped> {
    if cleaned.trim().is_empty() {
        return Err(Error::usage("cleaned report is empty"));
    }
    let hash = templates::caption_hash();
    let user = format!("{cleaned}\n\n{}", templates::CAPTION);
    let text = cached_complete(cache, client, &hash, cleaned, &[Message::user(user)])?;
    Ok(Stamped { text: single_paragraph(&text), prompt_hash: hash })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QACandidate {
    pub record: QARecord,
    #[serde(default)]
    pub reasoning: String,
    pub report_id: String,
    pub prompt_hash: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dropped {
    pub report_id: String,
    pub item: usize,
    pub reason: String,
}

/// Top-level JSON values in `reply`: the reply itself when it parses,
/// otherwise every balanced `{…}` span that does.
fn json_items(reply: &str) -> Vec<serde_json::Value> {
    let trimmed = reply.trim().trim_start_matches("```json").trim_start_matches("```").trim_end_matches("```").trim();
    match serde_json::from_str::<serde_json::Value>(trimmed) {
        Ok(serde_json::Value::Array(items)) => return items,
        Ok(v @ serde_json::Value::Object(_)) => return vec![v],
        _ => {}
    }
    let mut out = Vec::new();
    let (mut depth, mut start, mut in_str, mut esc) = (0usize, 0usize, false, false);
    for (i, c) in reply.char_indices() {
        if in_str {
            match (esc, c) {
                (true, _) => esc = false,
                (false, '\\') => esc = true,
                (false, '"') => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            '}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    match serde_json::from_str(&reply[start..=i]) {
                        Ok(v) => out.push(v),
                        Err(e) => out.push(serde_json::Value::String(format!("unparseable object: {e}"))),
                    }
                }
            }
            _ => {}
        }
    }
    out
}

static OPTION_PREFIX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\(?[A-Da-d][.):]\s*").unwrap());

fn field<'a>(v: &'a serde_json::Value, names: &[&str]) -> Option<&'a serde_json::Value> {
    let obj = v.as_object()?;
    names.iter().find_map(|n| obj.iter().find(|(k, _)| k.trim().eq_ignore_ascii_case(n)).map(|(_, v)| v))
}

fn text_field(v: &serde_json::Value, names: &[&str]) -> Option<String> {
    match field(v, names)? {
        serde_json::Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

struct Item {
    question_type: QuestionType,
    question: String,
    options: Vec<String>,
    answer: String,
    narrow: &'static str,
    broad: Broad,
    reasoning: String,
}

fn parse_item(v: &serde_json::Value, requested: Broad) -> std::result::Result<Item, String> {
    if let serde_json::Value::String(msg) = v {
        return Err(msg.clone());
    }
    let kind = text_field(v, &["question type", "question_type", "type"]).ok_or("missing question type")?.to_lowercase();
    let question_type = if kind.contains("multi") {
        QuestionType::MultiChoice
    } else if kind.contains("short") {
        QuestionType::ShortAnswer
    } else {
        return Err(format!("unknown question type `{kind}`"));
    };
    let question = text_field(v, &["question"]).ok_or("missing question")?;
    let narrow_name = text_field(v, &["narrow category", "narrow_category"]).ok_or("missing narrow category")?;
    let (narrow, broad) = narrow_category(&narrow_name).ok_or_else(|| format!("unknown narrow category `{narrow_name}`"))?;
    if broad != requested {
        return Err(format!("`{narrow}` is not under {requested}"));
    }
    if let Some(b) = text_field(v, &["broad category", "broad_category"]) {
        if !b.eq_ignore_ascii_case(broad.name()) {
            return Err(format!("broad category `{b}` does not match `{narrow}`"));
        }
    }
    let answer = text_field(v, &["answer", "anwser"]).ok_or("missing answer")?;
    let reasoning = text_field(v, &["reasoning"]).unwrap_or_default();
    let options: Vec<String> = match field(v, &["options"]) {
        Some(serde_json::Value::Array(a)) => a
            .iter()
            .map(|o| o.as_str().map(|s| OPTION_PREFIX.replace(s.trim(), "").trim().to_string()).ok_or("non-text option"))
            .collect::<std::result::Result<_, _>>()?,
        None | Some(serde_json::Value::Null) => vec![],
        Some(_) => return Err("options is not a list".into()),
    };
    let answer = match question_type {
        QuestionType::MultiChoice => {
            if options.len() != 4 {
                return Err(format!("multi-choice item has {} options, expected 4", options.len()));
            }
            extract_choice(&answer, &options).ok_or_else(|| format!("answer `{answer}` matches no option"))?.to_string()
        }
        QuestionType::ShortAnswer => answer,
    };
    let options = if question_type == QuestionType::ShortAnswer { vec![] } else { options };
    Ok(Item { question_type, question, options, answer, narrow, broad, reasoning })
}

/// Asks for category-structured QA pairs about one report and keeps the
/// items that fit the schema; the rest are returned with a reason.
pub fn gen_qas(
    report: &ReportRecord,
    cleaned: &str,
    broad: Broad,
    client: &dyn ChatClient,
    cache: &PromptCache,
) -> Result<(Vec<QACandidate>, Vec<Dropped>)> {
    report.validate()?;
    let hash = templates::qa_hash(broad);
    let user = format!("{cleaned}\n\n{}\n\n{}", templates::objective(broad), templates::GENERAL);
    let reply = cached_complete(cache, client, &hash, cleaned, &[Message::system(templates::SYSTEM), Message::user(user)])?;
    let (mut kept, mut dropped) = (Vec::new(), Vec::new());
    let items = json_items(&reply);
    if items.is_empty() {
        log::warn!("report {}: no JSON items in {} reply", report.id, broad);
        dropped.push(Dropped { report_id: report.id.clone(), item: 0, reason: "no JSON items in reply".into() });
    }
    for (i, v) in items.iter().enumerate() {
        match parse_item(v, broad) {
            Ok(it) => {
                let record = QARecord {
                    id: format!("{}-{}-{:02}", report.id, broad.name().to_lowercase(), kept.len()),
                    slide_id: report.slides[0].clone(),
                    question: it.question,
                    options: it.options,
                    answer: it.answer,
                    question_type: it.question_type,
                    broad: it.broad,
                    narrow: it.narrow.to_string(),
                    task: None,
                };
                record.validate()?;
                kept.push(QACandidate { record, reasoning: it.reasoning, report_id: report.id.clone(), prompt_hash: hash.clone() });
            }
            Err(reason) => {
                log::debug!("report {} item {i} dropped: {reason}", report.id);
                dropped.push(Dropped { report_id: report.id.clone(), item: i, reason });
            }
        }
    }
    Ok((kept, dropped))
}

pub const ENSEMBLE_SIZE: usize = 4;
/// Questions answered correctly by at least this many text-only models
/// are excluded.
pub const EXCLUDE_AT: usize = 3;

pub const FILTER_INSTRUCTION: &str = "Answer with the letter of the correct option.";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub id: String,
    pub correct: [bool; ENSEMBLE_SIZE],
    /// Models whose call failed; a failure counts as incorrect.
    pub failed: [bool; ENSEMBLE_SIZE],
    pub kept: bool,
    pub reason: String,
}

pub fn verdict(id: &str, correct: [bool; ENSEMBLE_SIZE], failed: [bool; ENSEMBLE_SIZE]) -> FilterVerdict {
    let n = correct.iter().filter(|c| **c).count();
    let kept = n < EXCLUDE_AT;
    let reason = if kept {
        format!("{n} of {ENSEMBLE_SIZE} text-only models answered correctly")
    } else {
        format!("answerable without the image by {n} of {ENSEMBLE_SIZE} models")
    };
    FilterVerdict { id: id.to_string(), correct, failed, kept, reason }
}

/// Shows each model the question and options only, and keeps the
/// question when fewer than three answer it correctly.
pub fn ensemble_filter(qa: &QARecord, clients: &[&dyn ChatClient], cache: &PromptCache) -> Result<FilterVerdict> {
    if clients.len() != ENSEMBLE_SIZE {
        return Err(Error::usage(format!("ensemble filter needs {ENSEMBLE_SIZE} clients, got {}", clients.len())));
    }
    let truth = qa
        .answer_letter()
        .filter(|_| qa.question_type == QuestionType::MultiChoice)
        .ok_or_else(|| Error::usage(format!("record {} is not a multi-choice question", qa.id)))?;
    let prompt = format!("{}\n{FILTER_INSTRUCTION}", qa.prompt());
    let hash = super::cache::sha256_hex(FILTER_INSTRUCTION);
    let (mut correct, mut failed) = ([false; ENSEMBLE_SIZE], [false; ENSEMBLE_SIZE]);
    for (i, c) in clients.iter().enumerate() {
        match cached_complete(cache, *c, &hash, &prompt, &[Message::user(prompt.clone())]) {
            Ok(reply) => correct[i] = extract_choice(&reply, &qa.options) == Some(truth),
            Err(e) => {
                log::warn!("record {}: {} failed: {e}", qa.id, c.model());
                failed[i] = true;
            }
        }
    }
    Ok(verdict(&qa.id, correct, failed))
}
