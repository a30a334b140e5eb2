//! Two-stage training with freeze masks, checkpoints and loss logs, plus
//! the synthetic overfit probe.

pub mod config;
pub mod data;
pub mod probe;
pub mod run;

pub use config::{StageConfig, TaskKind};
pub use data::{parse_samples, Dataset, TrainSample};
pub use probe::{
    cohort_samples, describe, encode_slide, overfit_probe, synthetic_cohort, ProbeConfig, ProbeReport, SynthSlide,
    CAPTION_PROMPT, VQA_PROMPT,
};
pub use run::{epoch_order, loss_csv, run_stage, LossRecord, StageReport};
