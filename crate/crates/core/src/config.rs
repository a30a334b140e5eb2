//! The declarative run configuration read by the command-line tool.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curation::EndpointConfig;
use crate::error::{Error, Result};
use crate::interpret::{RowNorm, DEFAULT_TOP_K};
use crate::language_model::GenerateConfig;
use crate::model::ModelConfig;
use crate::slide_io::TissueFilter;
use crate::training::{StageConfig, TaskKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Base for relative paths named inside the config (replay files).
    pub data: PathBuf,
    /// Default output directory of `train`.
    pub checkpoints: PathBuf,
    /// Default parent of run directories when `--out` is not given.
    pub outputs: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths { data: ".".into(), checkpoints: "checkpoints".into(), outputs: "runs".into() }
    }
}

/// Per-stage overrides on top of the stage defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageOverrides {
    pub lr: Option<f64>,
    pub epochs: Option<u32>,
    pub batch_size: Option<usize>,
    pub weight_decay: Option<f64>,
    pub trainable: Option<Vec<String>>,
    pub tasks: Option<Vec<TaskKind>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub stage1: StageOverrides,
    pub stage2: StageOverrides,
}

impl TrainConfig {
    pub fn stage(&self, stage: u8) -> Result<StageConfig> {
        let mut cfg = StageConfig::for_stage(stage)?;
        let o = if stage == 1 { &self.stage1 } else { &self.stage2 };
        if let Some(v) = o.lr {
            cfg.lr = v;
        }
        if let Some(v) = o.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = o.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = o.weight_decay {
            cfg.weight_decay = v;
        }
        if let Some(v) = &o.trainable {
            cfg.trainable = v.clone();
        }
        if let Some(v) = &o.tasks {
            cfg.tasks = v.clone();
        }
        cfg.validate().map_err(|e| rekey(e, |k| k.replacen("train.", &format!("train.stage{stage}."), 1)))?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterpretConfig {
    pub top_k: usize,
    pub rows: RowNorm,
}

impl Default for InterpretConfig {
    fn default() -> Self {
        InterpretConfig { top_k: DEFAULT_TOP_K, rows: RowNorm::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    /// Patches sampled by the majority-vote protocol.
    pub patches: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { patches: crate::evaluation::MAJORITY_VOTE_PATCHES }
    }
}

/// A chat endpoint, or a replay file standing in for one.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClientConfig {
    pub replay: Option<PathBuf>,
    pub endpoint: EndpointConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClientsConfig {
    /// Cleans reports and writes captions and questions.
    pub generator: Option<ClientConfig>,
    /// The four text-only models of the ensemble filter.
    pub filters: Vec<ClientConfig>,
    pub judge: Option<ClientConfig>,
    /// Text-only baseline model.
    pub baseline: Option<ClientConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    pub paths: Paths,
    pub model: ModelConfig,
    pub tiling: TissueFilter,
    pub train: TrainConfig,
    pub generate: GenerateConfig,
    pub interpret: InterpretConfig,
    pub baseline: BaselineConfig,
    pub clients: ClientsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            jobs: crate::curation::DEFAULT_JOBS,
            paths: Paths::default(),
            model: ModelConfig::default(),
            tiling: TissueFilter::default(),
            train: TrainConfig::default(),
            generate: GenerateConfig::default(),
            interpret: InterpretConfig::default(),
            baseline: BaselineConfig::default(),
            clients: ClientsConfig::default(),
        }
    }
}

fn rekey(e: Error, f: impl Fn(&str) -> String) -> Error {
    match e {
        Error::Config { key, message } => Error::Config { key: f(&key), message },
        other => other,
    }
}

impl RunConfig {
    /// Parses TOML, rejecting unknown keys, then validates. Errors name
    /// the dotted key path.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let de = toml::Deserializer::new(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            Error::config(e.path().to_string(), e.inner().message())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(Error::config("jobs", "must be at least 1"));
        }
        self.model.validate().map_err(|e| {
            rekey(e, |k| if k.starts_with("model.") { k.to_string() } else { format!("model.{k}") })
        })?;
        for s in [1, 2] {
            self.train.stage(s)?;
        }
        if self.generate.max_len == 0 {
            return Err(Error::config("generate.max_len", "must be at least 1"));
        }
        if self.interpret.top_k == 0 {
            return Err(Error::config("interpret.top_k", "must be at least 1"));
        }
        if self.baseline.patches == 0 {
            return Err(Error::config("baseline.patches", "must be at least 1"));
        }
        let f = &self.tiling;
        if !(0.0..=1.0).contains(&f.tissue_fraction) || !(0.0..=1.0).contains(&f.saturation_threshold) {
            return Err(Error::config("tiling", "thresholds must lie in [0, 1]"));
        }
        if !self.clients.filters.is_empty() && self.clients.filters.len() != crate::curation::stages::ENSEMBLE_SIZE {
            return Err(Error::config("clients.filters", "the ensemble filter needs exactly 4 clients"));
        }
        Ok(())
    }

    /// Resolves a path named in the config against `paths.data`.
    pub fn data_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.paths.data.join(p)
        }
    }
}
