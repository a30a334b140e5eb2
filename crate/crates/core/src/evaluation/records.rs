use std::path::Path;

use serde::{Deserialize, Serialize};

use super::choice::{letter, letter_index};
use super::taxonomy::{narrow_category, Broad};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuestionType {
    MultiChoice,
    ShortAnswer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QARecord {
    pub id: String,
    pub slide_id: String,
    pub question: String,
    #[serde(default)]
    pub options: Vec<String>,
    /// Option letter for multi-choice, free text for short-answer.
    pub answer: String,
    pub question_type: QuestionType,
    pub broad: Broad,
    pub narrow: String,
    /// Source classification task, for records built from slide labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
}

impl QARecord {
    pub fn validate(&self) -> Result<()> {
        let (_, parent) = narrow_category(&self.narrow)
            .ok_or_else(|| Error::usage(format!("record {}: unknown narrow category `{}`", self.id, self.narrow)))?;
        if parent != self.broad {
            return Err(Error::usage(format!("record {}: `{}` is not under {}", self.id, self.narrow, self.broad)));
        }
        if self.question_type == QuestionType::MultiChoice {
            if self.options.is_empty() || self.options.len() > 26 {
                return Err(Error::usage(format!("record {}: needs 1 to 26 options", self.id)));
            }
            let ok = self.answer.chars().count() == 1
                && self.answer.chars().next().and_then(letter_index).is_some_and(|i| i < self.options.len());
            if !ok {
                return Err(Error::usage(format!("record {}: answer `{}` is not an option letter", self.id, self.answer)));
            }
        }
        Ok(())
    }

    pub fn answer_letter(&self) -> Option<char> {
        let mut c = self.answer.chars();
        match (c.next(), c.next()) {
            (Some(l), None) if letter_index(l).is_some_and(|i| i < self.options.len()) => Some(l),
            _ => None,
        }
    }

    pub fn letters(&self) -> Vec<char> {
        (0..self.options.len()).map(letter).collect()
    }

    /// Question followed by one `X. option` line per option.
    pub fn prompt(&self) -> String {
        let mut s = self.question.clone();
        for (i, o) in self.options.iter().enumerate() {
            s.push('\n');
            s.push(letter(i));
            s.push_str(". ");
            s.push_str(o);
        }
        s
    }
}

pub fn parse_records(text: &str, origin: &Path) -> Result<Vec<QARecord>> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: QARecord = serde_json::from_str(line).map_err(|e| Error::format(origin, format!("line {}: {e}", i + 1)))?;
        r.validate().map_err(|e| Error::format(origin, format!("line {}: {e}", i + 1)))?;
        if !seen.insert(r.id.clone()) {
            return Err(Error::format(origin, format!("line {}: duplicate id {}", i + 1, r.id)));
        }
        out.push(r);
    }
    Ok(out)
}

pub fn load_records(path: &Path) -> Result<Vec<QARecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text, path)
}

pub fn records_to_jsonl(records: &[QARecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
}

/// `n` four-option records cycling through the narrow categories, with
/// seeded answer letters. Used for harness checks and demos.
pub fn synthetic_benchmark(n: usize, seed: u64) -> Vec<QARecord> {
    use rand::Rng;
    let mut rng = crate::numerics::SeedStream::new(seed).rng("benchmark");
    (0..n)
        .map(|i| {
            let (narrow, broad) = super::taxonomy::NARROW[i % super::taxonomy::NARROW.len()];
            QARecord {
                id: format!("q{i:06}"),
                slide_id: format!("slide-{:04}", i / 4),
                question: format!("Question {i} about {}?", narrow.to_lowercase()),
                options: (1..=4).map(|k| format!("option {k} of question {i}")).collect(),
                answer: letter(rng.gen_range(0..4)).to_string(),
                question_type: QuestionType::MultiChoice,
                broad,
                narrow: narrow.to_string(),
                task: None,
            }
        })
        .collect()
}
