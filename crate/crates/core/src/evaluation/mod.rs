//! Caption metrics, LLM judging, closed-set VQA scoring by category and
//! the baseline protocols.

pub mod baselines;
pub mod choice;
pub mod judge;
pub mod metrics;
pub mod records;
pub mod taxonomy;
pub mod vqa;

pub use baselines::{
    majority_vote_baseline, plurality, sample_patches, text_only_baseline, thumbnail_baseline, ChatModel,
    SlideChatModel, VqaModel, MAJORITY_VOTE_PATCHES,
};
pub use choice::{extract_choice, letter};
pub use judge::{
    caption_eval, caption_scores_csv, judge_caption, judge_prompt_hash, parse_score, CaptionRecord, CaptionReport,
    JUDGE_TEMPLATE,
};
pub use metrics::{bleu_n, metric_tokens, rouge_l};
pub use records::{load_records, parse_records, records_to_jsonl, synthetic_benchmark, QARecord, QuestionType};
pub use taxonomy::{narrow_category, Broad, NARROW};
pub use vqa::{breakdown_csv, outcomes_csv, random_predictions, summary_csv, vqa_eval, CategoryReport, Tally};
