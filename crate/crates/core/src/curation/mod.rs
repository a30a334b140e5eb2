//! Dataset curation: report cleaning, captions, category-structured QA
//! generation, the text-only ensemble filter, the train/test split and
//! label-to-question conversion, all over a mockable chat client.

pub mod cache;
pub mod client;
pub mod pipeline;
pub mod split;
pub mod stages;
pub mod templates;

pub use cache::{sha256_hex, CacheKey, PromptCache};
pub use client::{ChatClient, EndpointConfig, FnClient, LiveClient, Message, ReplayClient, SequenceClient};
pub use pipeline::{curate, load_reports, parse_reports, Curated, Flag, DEFAULT_JOBS, OUTPUT_FILES};
pub use split::{bcnb_task, bcnb_to_vqa, labels_to_vqa, split_assign, LabelTask, Split, BCNB_TASKS};
pub use stages::{
    clean_report, ensemble_filter, gen_caption, gen_qas, single_paragraph, verdict, Dropped, FilterVerdict,
    QACandidate, ReportRecord, Stamped,
};

#[cfg(test)]
mod tests;
