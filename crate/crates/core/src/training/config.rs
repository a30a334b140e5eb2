use serde::{Deserialize, Serialize};

use crate::encoder_stack::{PATCH_ENCODER_GROUP, PROJECTOR_GROUP, SLIDE_ENCODER_GROUP};
use crate::error::{Error, Result};
use crate::language_model::LM_GROUP;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Caption,
    Vqa,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub stage: u8,
    pub lr: f64,
    pub epochs: u32,
    /// Parameter groups updated in this stage.
    pub trainable: Vec<String>,
    /// Samples whose gradients are accumulated per optimizer step.
    pub batch_size: usize,
    /// Sample kinds drawn from the dataset.
    pub tasks: Vec<TaskKind>,
    pub weight_decay: f64,
}

impl StageConfig {
    /// Cross-domain alignment: captions, LM frozen.
    pub fn stage1() -> Self {
        StageConfig {
            stage: 1,
            lr: 1e-3,
            epochs: 3,
            trainable: vec![SLIDE_ENCODER_GROUP.into(), PROJECTOR_GROUP.into()],
            batch_size: 1,
            tasks: vec![TaskKind::Caption],
            weight_decay: 0.01,
        }
    }

    /// Visual instruction learning: everything but the patch encoder.
    pub fn stage2() -> Self {
        StageConfig {
            stage: 2,
            lr: 2e-5,
            epochs: 1,
            trainable: vec![SLIDE_ENCODER_GROUP.into(), PROJECTOR_GROUP.into(), LM_GROUP.into()],
            batch_size: 1,
            tasks: vec![TaskKind::Vqa],
            weight_decay: 0.01,
        }
    }

    pub fn for_stage(stage: u8) -> Result<Self> {
        match stage {
            1 => Ok(StageConfig::stage1()),
            2 => Ok(StageConfig::stage2()),
            s => Err(Error::config("train.stage", format!("stage must be 1 or 2, got {s}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.stage) {
            return Err(Error::config("train.stage", format!("stage must be 1 or 2, got {}", self.stage)));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::config("train.lr", "must be finite and non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be positive"));
        }
        if self.tasks.is_empty() {
            return Err(Error::config("train.tasks", "at least one task kind is required"));
        }
        for g in &self.trainable {
            if g == PATCH_ENCODER_GROUP {
                return Err(Error::config("train.trainable", "the patch encoder is never trainable"));
            }
            if ![SLIDE_ENCODER_GROUP, PROJECTOR_GROUP, LM_GROUP].contains(&g.as_str()) {
                return Err(Error::config("train.trainable", format!("unknown parameter group `{g}`")));
            }
        }
        Ok(())
    }
}
