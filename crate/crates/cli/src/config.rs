//! Run configuration: defaults, then a JSON config file, then flags.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use asasf_core::{EmbedderConfig, Mode, ModelConfig, PromptStyle, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// Cached, validated corpus written by `ingest`.
    pub corpus: Option<PathBuf>,
    /// MaxSim index written by `index`.
    pub index: Option<PathBuf>,
    pub embedder: EmbedderConfig,
    pub model: ModelConfig,
    pub proposal_model: Option<ModelConfig>,
    pub grade: GradeSettings,
    pub optimize: OptimizeSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradeSettings {
    pub mode: Mode,
    /// `None` picks the mode's default: 0 without demos, otherwise 5.
    pub k: Option<usize>,
    pub split: Split,
    pub style: PromptStyle,
    pub exclude_same_question: bool,
    pub seed: u64,
    pub program: Option<PathBuf>,
    pub signature: Option<PathBuf>,
    pub force_index: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeSettings {
    pub budget: usize,
    pub k_max: usize,
    pub dev_fraction: f64,
    /// Instruction rewrites requested from the proposal model.
    pub proposals: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("runs"),
            corpus: None,
            index: None,
            embedder: EmbedderConfig::default(),
            model: ModelConfig::default(),
            proposal_model: None,
            grade: GradeSettings::default(),
            optimize: OptimizeSettings::default(),
        }
    }
}

impl Default for GradeSettings {
    fn default() -> Self {
        GradeSettings {
            mode: Mode::ZeroShot,
            k: None,
            split: Split::TestUa,
            style: PromptStyle::Predict,
            exclude_same_question: false,
            seed: 0,
            program: None,
            signature: None,
            force_index: false,
        }
    }
}

impl Default for OptimizeSettings {
    fn default() -> Self {
        OptimizeSettings {
            budget: 16,
            k_max: 8,
            dev_fraction: 0.2,
            proposals: 0,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("config file {} is not a valid run config", path.display()))
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.corpus
            .clone()
            .unwrap_or_else(|| self.out_dir.join("corpus.jsonl"))
    }

    pub fn index_path(&self) -> PathBuf {
        self.index
            .clone()
            .unwrap_or_else(|| self.out_dir.join("index.asxi"))
    }

    pub fn effective_k(&self) -> usize {
        self.grade.k.unwrap_or(match self.grade.mode {
            Mode::Rag | Mode::Vote => 5,
            Mode::ZeroShot | Mode::Majority | Mode::Optimized => 0,
        })
    }
}
