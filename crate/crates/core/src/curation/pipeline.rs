use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::PromptCache;
use super::client::ChatClient;
use super::split::{split_assign, Split};
use super::stages::{clean_report, ensemble_filter, gen_caption, gen_qas, Dropped, FilterVerdict, QACandidate, ReportRecord};
use crate::error::{Error, Result};
use crate::evaluation::{records_to_jsonl, Broad, CaptionRecord, QARecord, QuestionType};

pub const DEFAULT_JOBS: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flag {
    pub id: String,
    pub stage: String,
    pub message: String,
}

/// Everything one curation run produces, each list ordered by id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Curated {
    pub cleaned: Vec<ReportRecord>,
    pub captions_train: Vec<CaptionRecord>,
    pub captions_test: Vec<CaptionRecord>,
    pub candidates: Vec<QACandidate>,
    pub dropped: Vec<Dropped>,
    pub verdicts: Vec<FilterVerdict>,
    pub split: Split,
    /// Instruction data: every candidate on a training slide.
    pub train_qas: Vec<QARecord>,
    /// Benchmark: multi-choice candidates on test slides that survived the filter.
    pub bench_vqa: Vec<QARecord>,
    pub flagged: Vec<Flag>,
}

#[derive(Default)]
struct ReportOutcome {
    cleaned: Option<ReportRecord>,
    caption: Option<String>,
    candidates: Vec<QACandidate>,
    dropped: Vec<Dropped>,
    flagged: Vec<Flag>,
}

fn flag(id: &str, stage: &str, e: &Error) -> Flag {
    log::warn!("{id}: {stage} failed: {e}");
    Flag { id: id.to_string(), stage: stage.to_string(), message: e.to_string() }
}

fn process(r: &ReportRecord, generator: &dyn ChatClient, cache: &PromptCache) -> Result<ReportOutcome> {
    let mut out = ReportOutcome::default();
    let cleaned = match clean_report(r, generator, cache) {
        Ok(c) => c.text,
        Err(e @ Error::Client(_)) => {
            out.flagged.push(flag(&r.id, "clean", &e));
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    out.cleaned = Some(ReportRecord { cleaned: Some(cleaned.clone()), ..r.clone() });
    match gen_caption(&cleaned, generator, cache) {
        Ok(c) => out.caption = Some(c.text),
        Err(e @ Error::Client(_)) => out.flagged.push(flag(&r.id, "caption", &e)),
        Err(e) => return Err(e),
    }
    for b in Broad::ALL {
        match gen_qas(r, &cleaned, b, generator, cache) {
            Ok((kept, dropped)) => {
                out.candidates.extend(kept);
                out.dropped.extend(dropped);
            }
            Err(e @ Error::Client(_)) => out.flagged.push(flag(&r.id, &format!("qa.{}", b.name().to_lowercase()), &e)),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Runs cleaning, captioning, QA generation, the train/test split and the
/// ensemble filter. Client failures flag the affected record and the run
/// continues; with a warm cache no client is called.
pub fn curate(
    reports: &[ReportRecord],
    generator: &dyn ChatClient,
    filters: &[&dyn ChatClient],
    cache: &PromptCache,
    jobs: usize,
    seed: u64,
) -> Result<Curated> {
    let mut seen = std::collections::HashSet::new();
    for r in reports {
        if !seen.insert(&r.id) {
            return Err(Error::usage(format!("duplicate report id {}", r.id)));
        }
    }
    let split = split_assign(reports, seed)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| Error::usage(e.to_string()))?;
    let outcomes: Vec<ReportOutcome> =
        pool.install(|| reports.par_iter().map(|r| process(r, generator, cache)).collect::<Result<_>>())?;

    let mut cur = Curated { split, ..Curated::default() };
    for (r, o) in reports.iter().zip(outcomes) {
        if let Some(caption) = &o.caption {
            for s in &r.slides {
                let rec = CaptionRecord { id: s.clone(), slide_id: s.clone(), caption: caption.clone() };
                if cur.split.test.contains(s) {
                    cur.captions_test.push(rec);
                } else {
                    cur.captions_train.push(rec);
                }
            }
        }
        cur.cleaned.extend(o.cleaned);
        cur.candidates.extend(o.candidates);
        cur.dropped.extend(o.dropped);
        cur.flagged.extend(o.flagged);
    }
    let to_filter: Vec<&QACandidate> = cur
        .candidates
        .iter()
        .filter(|c| c.record.question_type == QuestionType::MultiChoice && cur.split.test.contains(&c.record.slide_id))
        .collect();
    let verdicts: Vec<FilterVerdict> =
        pool.install(|| to_filter.par_iter().map(|c| ensemble_filter(&c.record, filters, cache)).collect::<Result<_>>())?;
    for (c, v) in to_filter.iter().zip(&verdicts) {
        if v.failed.iter().any(|f| *f) {
            cur.flagged.push(Flag { id: v.id.clone(), stage: "filter".into(), message: "a filter model failed".into() });
        }
        if v.kept {
            cur.bench_vqa.push(c.record.clone());
        }
    }
    cur.verdicts = verdicts;
    cur.train_qas =
        cur.candidates.iter().filter(|c| cur.split.train.contains(&c.record.slide_id)).map(|c| c.record.clone()).collect();

    cur.cleaned.sort_by(|a, b| a.id.cmp(&b.id));
    cur.captions_train.sort_by(|a, b| a.id.cmp(&b.id));
    cur.captions_test.sort_by(|a, b| a.id.cmp(&b.id));
    cur.candidates.sort_by(|a, b| a.record.id.cmp(&b.record.id));
    cur.dropped.sort_by(|a, b| (&a.report_id, a.item).cmp(&(&b.report_id, b.item)));
    cur.verdicts.sort_by(|a, b| a.id.cmp(&b.id));
    cur.train_qas.sort_by(|a, b| a.id.cmp(&b.id));
    cur.bench_vqa.sort_by(|a, b| a.id.cmp(&b.id));
    cur.flagged.sort_by(|a, b| (&a.id, &a.stage).cmp(&(&b.id, &b.stage)));
    Ok(cur)
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    items.iter().map(|x| serde_json::to_string(x).expect("serializes") + "\n").collect()
}

pub const OUTPUT_FILES: [&str; 10] = [
    "cleaned.jsonl",
    "captions_train.jsonl",
    "captions_test.jsonl",
    "candidates.jsonl",
    "dropped.jsonl",
    "verdicts.jsonl",
    "split.json",
    "instructions_train.jsonl",
    "bench_vqa.jsonl",
    "flagged.jsonl",
];

impl Curated {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let contents = [
            jsonl(&self.cleaned),
            jsonl(&self.captions_train),
            jsonl(&self.captions_test),
            jsonl(&self.candidates),
            jsonl(&self.dropped),
            jsonl(&self.verdicts),
            serde_json::to_string_pretty(&self.split).expect("split serializes") + "\n",
            records_to_jsonl(&self.train_qas),
            records_to_jsonl(&self.bench_vqa),
            jsonl(&self.flagged),
        ];
        for (name, text) in OUTPUT_FILES.iter().zip(contents) {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

pub fn parse_reports(text: &str, origin: &Path) -> Result<Vec<ReportRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(origin, format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn load_reports(path: &Path) -> Result<Vec<ReportRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_reports(&text, path)
}
