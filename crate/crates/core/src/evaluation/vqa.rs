use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use serde::Serialize;

use super::choice::extract_choice;
use super::records::{QARecord, QuestionType};
use super::taxonomy::{Broad, NARROW};
use crate::error::{Error, Result};
use crate::numerics::SeedStream;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn add(&mut self, correct: bool) {
        self.total += 1;
        self.correct += usize::from(correct);
    }

    /// Accuracy in `[0, 1]`; 0 when empty.
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecordOutcome {
    pub id: String,
    pub slide_id: String,
    pub broad: Broad,
    pub narrow: String,
    pub answer: char,
    pub predicted: Option<char>,
    pub correct: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CategoryReport {
    /// Narrow categories in taxonomy order (only those present).
    pub narrow: IndexMap<String, Tally>,
    pub broad: BTreeMap<Broad, Tally>,
    pub overall: Tally,
    pub outcomes: Vec<RecordOutcome>,
}

/// Scores free-form replies keyed by record id against multi-choice
/// records. Missing or unparseable replies count as incorrect; a reply
/// for an id not in `records` is a usage error.
pub fn vqa_eval(records: &[QARecord], replies: &HashMap<String, String>) -> Result<CategoryReport> {
    let ids: std::collections::HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let mut unknown: Vec<&String> = replies.keys().filter(|k| !ids.contains(k.as_str())).collect();
    if !unknown.is_empty() {
        unknown.sort();
        return Err(Error::usage(format!("predictions for unknown record ids: {unknown:?}")));
    }
    let mut report = CategoryReport::default();
    for (name, _) in NARROW {
        if records.iter().any(|r| r.narrow.eq_ignore_ascii_case(name)) {
            report.narrow.insert(name.to_string(), Tally::default());
        }
    }
    for r in records.iter().filter(|r| r.question_type == QuestionType::MultiChoice) {
        let answer = r.answer_letter().ok_or_else(|| Error::usage(format!("record {} has no answer letter", r.id)))?;
        let predicted = replies.get(&r.id).and_then(|reply| extract_choice(reply, &r.options));
        let correct = predicted == Some(answer);
        let narrow = NARROW.iter().find(|(n, _)| n.eq_ignore_ascii_case(&r.narrow)).map_or(r.narrow.as_str(), |(n, _)| n);
        report.narrow.entry(narrow.to_string()).or_default().add(correct);
        report.broad.entry(r.broad).or_default().add(correct);
        report.overall.add(correct);
        report.outcomes.push(RecordOutcome {
            id: r.id.clone(),
            slide_id: r.slide_id.clone(),
            broad: r.broad,
            narrow: narrow.to_string(),
            answer,
            predicted,
            correct,
        });
    }
    report.outcomes.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(report)
}

/// Uniform random letter per record, seeded.
pub fn random_predictions(records: &[QARecord], seed: u64) -> HashMap<String, String> {
    let mut rng = SeedStream::new(seed).rng("random-predictor");
    records
        .iter()
        .filter(|r| !r.options.is_empty())
        .map(|r| (r.id.clone(), r.letters().choose(&mut rng).expect("non-empty").to_string()))
        .collect()
}

pub fn outcomes_csv(report: &CategoryReport) -> String {
    let mut s = String::from("id,slide_id,broad,narrow,answer,predicted,correct\n");
    for o in &report.outcomes {
        let pred = o.predicted.map(String::from).unwrap_or_default();
        writeln!(s, "{},{},{},{},{},{pred},{}", csv_field(&o.id), csv_field(&o.slide_id), o.broad, csv_field(&o.narrow), o.answer, u8::from(o.correct))
            .expect("string write");
    }
    s
}

/// One row in percent with two decimals: `model,Microscopy,Diagnosis,Clinical,Overall`.
pub fn summary_csv(model: &str, report: &CategoryReport) -> String {
    let pct = |t: Option<&Tally>| t.map_or(String::new(), |t| format!("{:.2}", 100.0 * t.accuracy()));
    let mut s = String::from("model,Microscopy,Diagnosis,Clinical,Overall\n");
    let cols: Vec<String> = Broad::ALL.iter().map(|b| pct(report.broad.get(b))).collect();
    writeln!(s, "{},{},{}", csv_field(model), cols.join(","), pct(Some(&report.overall))).expect("string write");
    s
}

/// `level,category,correct,total,accuracy` for every narrow and broad category and overall.
pub fn breakdown_csv(report: &CategoryReport) -> String {
    let mut s = String::from("level,category,correct,total,accuracy\n");
    let mut row = |level: &str, name: &str, t: &Tally| {
        writeln!(s, "{level},{},{},{},{:.6}", csv_field(name), t.correct, t.total, t.accuracy()).expect("string write");
    };
    for (n, t) in &report.narrow {
        row("narrow", n, t);
    }
    for (b, t) in &report.broad {
        row("broad", b.name(), t);
    }
    row("overall", "Overall", &report.overall);
    s
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
