use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::stages::ReportRecord;
use crate::error::{Error, Result};
use crate::evaluation::{letter, narrow_category, QARecord, QuestionType};
use crate::numerics::SeedStream;

pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

/// Slides of multi-slide reports all go to train; the slides of
/// single-slide reports are shuffled with `seed` and the first
/// `round(0.8 n)` go to train.
pub fn split_assign(reports: &[ReportRecord], seed: u64) -> Result<Split> {
    let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
    for r in reports {
        r.validate()?;
        for s in &r.slides {
            if let Some(prev) = owner.insert(s, &r.id) {
                if prev != r.id {
                    return Err(Error::usage(format!("slide {s} is linked to reports {prev} and {}", r.id)));
                }
            }
        }
    }
    let mut split = Split::default();
    let mut single = Vec::new();
    for r in reports {
        let distinct: BTreeSet<&String> = r.slides.iter().collect();
        if distinct.len() > 1 {
            split.train.extend(distinct.into_iter().cloned());
        } else {
            single.push(r.slides[0].clone());
        }
    }
    single.sort();
    single.dedup();
    single.shuffle(&mut SeedStream::new(seed).rng("split"));
    let n_train = (single.len() as f64 * TRAIN_FRACTION).round() as usize;
    let test = single.split_off(n_train);
    split.train.extend(single);
    split.test.extend(test);
    Ok(split)
}

/// A slide-level classification task rendered as a multi-choice question.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelTask {
    pub name: &'static str,
    pub labels: &'static [&'static str],
    pub narrow: &'static str,
}

pub const BCNB_TASKS: [LabelTask; 7] = [
    LabelTask { name: "ER Status", labels: &["Positive", "Negative"], narrow: "Biomarker Analysis" },
    LabelTask { name: "PR Status", labels: &["Positive", "Negative"], narrow: "Biomarker Analysis" },
    LabelTask { name: "HER2 Status", labels: &["Positive", "Negative"], narrow: "Biomarker Analysis" },
    LabelTask { name: "HER2 Expression", labels: &["0", "1+", "2+", "3+"], narrow: "Biomarker Analysis" },
    LabelTask { name: "Histological Grading", labels: &["1", "2", "3"], narrow: "Grading" },
    LabelTask {
        name: "Molecular Subtype",
        labels: &["Luminal A", "Luminal B", "HER2(+)", "Triple negative"],
        narrow: "Disease Classification",
    },
    LabelTask {
        name: "Tumor Type",
        labels: &["Invasive ductal carcinoma", "Invasive lobular carcinoma", "Other Type"],
        narrow: "Disease Classification",
    },
];

pub fn bcnb_task(name: &str) -> Option<&'static LabelTask> {
    BCNB_TASKS.iter().find(|t| t.name.eq_ignore_ascii_case(name.trim()))
}

/// Builds the question "What is the <task> shown in this whole slide
/// image?" with `labels` as options in the given order.
pub fn labels_to_vqa(task: &str, labels: &[&str], narrow: &str, slide_id: &str, label: &str) -> Result<QARecord> {
    if labels.is_empty() || labels.len() > 26 {
        return Err(Error::usage(format!("task {task}: label set has {} entries, expected 1 to 26", labels.len())));
    }
    let idx = labels
        .iter()
        .position(|l| *l == label)
        .ok_or_else(|| Error::usage(format!("task {task}: label `{label}` is not one of {labels:?}")))?;
    let (narrow, broad) =
        narrow_category(narrow).ok_or_else(|| Error::usage(format!("unknown narrow category `{narrow}`")))?;
    let slug: String = task.to_lowercase().chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
    Ok(QARecord {
        id: format!("{slide_id}-{slug}"),
        slide_id: slide_id.to_string(),
        question: format!("What is the {task} shown in this whole slide image?"),
        options: labels.iter().map(|l| l.to_string()).collect(),
        answer: letter(idx).to_string(),
        question_type: QuestionType::MultiChoice,
        broad,
        narrow: narrow.to_string(),
        task: Some(task.to_string()),
    })
}

/// [`labels_to_vqa`] for one of the [`BCNB_TASKS`].
pub fn bcnb_to_vqa(task: &str, slide_id: &str, label: &str) -> Result<QARecord> {
    let t = bcnb_task(task).ok_or_else(|| Error::usage(format!("unknown task `{task}`")))?;
    labels_to_vqa(t.name, t.labels, t.narrow, slide_id, label)
}
