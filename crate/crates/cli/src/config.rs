use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bpr_core::agents::AgentConfig;
use bpr_core::bpr::PretrainConfig;
use serde::{Deserialize, Serialize};

use crate::failure::usage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Pointmass,
    Gridworld,
    Counterexample,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Pointmass => "pointmass",
            Task::Gridworld => "gridworld",
            Task::Counterexample => "counterexample",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    /// Existing dataset file; generated from the other fields when absent.
    pub path: Option<PathBuf>,
    /// Behavior spec; the task's default when absent.
    pub behavior: Option<String>,
    pub size: usize,
    pub seed: u64,
    /// Episode cap for tabular rollouts.
    pub horizon: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            path: None,
            behavior: None,
            size: 20_000,
            seed: 0,
            horizon: 50,
        }
    }
}

impl DatasetSpec {
    pub fn behavior_for(&self, task: Task) -> &str {
        match (&self.behavior, task) {
            (Some(b), _) => b,
            (None, Task::Gridworld) => "epsilon-greedy:0.5",
            (None, _) => "medium-expert",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Probes {
    pub effective_dimension: bool,
    pub bounds: bool,
}

/// One experiment as a single archivable file. Command-line flags override
/// any field set here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub task: Task,
    pub dataset: DatasetSpec,
    pub pretrain: Option<PretrainConfig>,
    /// Encoder checkpoint for downstream training.
    pub encoder: Option<PathBuf>,
    pub agent: AgentConfig,
    pub seeds: Vec<u64>,
    pub probes: Probes,
    pub output_dir: Option<PathBuf>,
    /// Name of the variant in summaries and reports.
    pub label: Option<String>,
    /// Normalized score counted as reaching the expert level.
    pub threshold: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::Pointmass,
            dataset: DatasetSpec::default(),
            pretrain: None,
            encoder: None,
            agent: AgentConfig::default(),
            seeds: vec![0],
            probes: Probes::default(),
            output_dir: None,
            label: None,
            threshold: 0.9,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Field checks shared by every command that trains.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(usage("seeds: must list at least one seed"));
        }
        if let Some(p) = &self.dataset.path {
            if !p.exists() {
                return Err(usage(format!("dataset.path: {} does not exist", p.display())));
            }
        }
        if let Some(p) = &self.encoder {
            if !p.exists() {
                return Err(usage(format!("encoder: {} does not exist", p.display())));
            }
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(usage("threshold: must lie in (0, 1]"));
        }
        self.agent
            .validate(self.encoder.is_some())
            .map_err(|e| usage(e.to_string()))
    }
}

/// Output root: explicit directory, else `BPR_OUTPUT_DIR` (resolved by clap), else `bpr-output`.
pub fn output_root(config: &ExperimentConfig, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("bpr-output"))
}
