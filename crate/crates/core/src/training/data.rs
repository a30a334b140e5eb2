use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::config::TaskKind;
use crate::error::{Error, Result};
use crate::language_model::Vocab;
use crate::model::SlideInput;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSample {
    pub slide_id: String,
    pub task: TaskKind,
    pub prompt: String,
    pub target: String,
}

/// Slides keyed by id plus the samples that reference them.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub slides: IndexMap<String, SlideInput>,
    pub samples: Vec<TrainSample>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.samples.iter().find(|s| !self.slides.contains_key(&s.slide_id)) {
            return Err(Error::usage(format!("sample references unknown slide `{}`", s.slide_id)));
        }
        Ok(())
    }

    pub fn of_kinds(&self, kinds: &[TaskKind]) -> Vec<&TrainSample> {
        self.samples.iter().filter(|s| kinds.contains(&s.task)).collect()
    }

    /// Vocabulary over every prompt and target.
    pub fn vocab(&self) -> Vocab {
        Vocab::from_corpus(self.samples.iter().flat_map(|s| [s.prompt.as_str(), s.target.as_str()]))
    }
}

/// Reads line-delimited JSON samples.
pub fn parse_samples(text: &str, origin: &std::path::Path) -> Result<Vec<TrainSample>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(origin, format!("line {}: {e}", i + 1))))
        .collect()
}
