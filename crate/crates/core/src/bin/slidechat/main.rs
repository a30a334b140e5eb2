//! Command-line entry point for the slide tiling, training, inference,
//! evaluation and curation pipeline.

mod commands;
mod run_dir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use slidechat::config::RunConfig;
use slidechat::Error;

#[derive(Parser, Debug)]
#[command(name = "slidechat", version, about = "Whole-slide vision-language pipeline at desk scale")]
struct Cli {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for all randomness in this invocation (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker cap for parallel stages (overrides `jobs`).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Run directory receiving every output of the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Predictor {
    /// Uniformly random option letter per record.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    /// Answer on sampled tissue patches and take the plurality letter.
    MajorityVote,
    /// One answer on the 1024-pixel slide thumbnail.
    Thumbnail,
    /// Question and options only, answered by `clients.baseline`.
    TextOnly,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write synthetic slides, a training cohort or a closed-set benchmark.
    Synth {
        #[arg(long, default_value_t = 448)]
        width: usize,
        #[arg(long, default_value_t = 448)]
        height: usize,
        #[arg(long, default_value = "synth")]
        id: String,
        /// Write this many captioned slides plus `samples.jsonl` instead.
        #[arg(long, conflicts_with = "benchmark")]
        cohort: Option<usize>,
        /// Write this many four-option records to `bench_vqa.jsonl` instead.
        #[arg(long)]
        benchmark: Option<usize>,
    },
    /// Cut a raster into tiles and flag tissue; writes `<id>.grid` and `<id>.toml`.
    Tile {
        #[arg(long)]
        raster: PathBuf,
        /// Slide id; defaults to the raster's file stem.
        #[arg(long)]
        id: Option<String>,
    },
    /// Encode the tissue tiles of a slide; writes `<id>.emb` and `<id>.toml`.
    Encode {
        /// Slide manifest written by `tile`.
        #[arg(long)]
        slide: PathBuf,
        /// Take the patch encoder from this checkpoint instead of a fresh seed.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run one training stage.
    Train {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
        /// Slide manifests with embeddings, or directories of them.
        #[arg(long, required = true, num_args = 1..)]
        slides: Vec<PathBuf>,
        /// Training samples, one JSON object per line.
        #[arg(long)]
        samples: PathBuf,
        /// Start from this checkpoint; stage 1 otherwise starts fresh.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Generate answers with a trained checkpoint.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        slides: Vec<PathBuf>,
        /// Ask every slide this prompt; writes `responses.jsonl` and `traces/`.
        #[arg(long, conflicts_with = "records")]
        prompt: Option<String>,
        /// Answer these closed-set records; writes `predictions.jsonl`.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Rank patches by attention and draw the overlay.
    Interpret {
        /// Attention trace written by `infer --prompt`.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        slide: PathBuf,
        #[arg(long)]
        top_k: Option<usize>,
        /// Average the stored attention without per-row renormalization.
        #[arg(long)]
        raw_rows: bool,
    },
    /// BLEU, ROUGE-L and optional judge scores for captions.
    CaptionEval {
        #[arg(long)]
        references: PathBuf,
        /// Lines of `{"id": …, "text": …}`.
        #[arg(long)]
        predictions: PathBuf,
        /// Score with `clients.judge`.
        #[arg(long)]
        judge: bool,
    },
    /// Closed-set accuracy by category.
    VqaEval {
        #[arg(long)]
        records: PathBuf,
        /// Lines of `{"id": …, "reply": …}`.
        #[arg(long, required_unless_present = "predictor", conflicts_with = "predictor")]
        predictions: Option<PathBuf>,
        #[arg(long, value_enum)]
        predictor: Option<Predictor>,
        /// Row label in `summary.csv`.
        #[arg(long)]
        model_name: Option<String>,
    },
    /// Run a baseline protocol over closed-set records.
    Baseline {
        #[arg(long, value_enum)]
        protocol: Protocol,
        #[arg(long)]
        records: PathBuf,
        #[arg(long, num_args = 1..)]
        slides: Vec<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Build instruction and benchmark data from reports or slide labels.
    Curate {
        /// Reports, one JSON object per line.
        #[arg(long, required_unless_present = "labels")]
        reports: Option<PathBuf>,
        /// CSV of `slide_id,task,label` rows for the label-derived tasks.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Tile { .. } => "tile",
            Command::Encode { .. } => "encode",
            Command::Train { .. } => "train",
            Command::Infer { .. } => "infer",
            Command::Interpret { .. } => "interpret",
            Command::CaptionEval { .. } => "caption-eval",
            Command::VqaEval { .. } => "vqa-eval",
            Command::Baseline { .. } => "baseline",
            Command::Curate { .. } => "curate",
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::MissingInput(_) => 3,
        _ => 1,
    }
}

fn error_line(e: &Error) -> String {
    let mut v = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
    match e {
        Error::Config { key, .. } => v["key"] = key.clone().into(),
        Error::MissingInput(p) | Error::Format { path: p, .. } | Error::Io { path: p, .. } => {
            v["path"] = p.display().to_string().into()
        }
        _ => {}
    }
    v.to_string()
}

fn run(cli: Cli) -> slidechat::Result<serde_json::Value> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    let default_out = match cli.command {
        Command::Train { .. } => cfg.paths.checkpoints.clone(),
        _ => cfg.paths.outputs.join(cli.command.name()),
    };
    let mut dir = run_dir::RunDir::create(cli.out.unwrap_or(default_out), cli.command.name(), cfg.seed)?;
    let summary = commands::dispatch(&cli.command, &cfg, &mut dir)?;
    dir.finish()?;
    Ok(summary)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
