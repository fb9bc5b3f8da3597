use std::path::PathBuf;

use bpr_core::agents::Algorithm;
use clap::{Args, Parser, Subcommand};

use crate::config::Task;

#[derive(Debug, Parser)]
#[command(name = "bpr", version, about = "Behavior-prior representation pretraining and offline RL experiments")]
pub struct Cli {
    /// Root for every output that has no explicit path.
    #[arg(long, global = true, env = "BPR_OUTPUT_DIR")]
    pub output_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an offline dataset (JSON lines).
    GenData(GenDataArgs),
    /// Pretrain a BPR encoder on a dataset.
    Pretrain(PretrainArgs),
    /// Train an agent across seeds and write a run summary.
    Train(TrainArgs),
    /// Counterexample audit plus gradient, eigensolver and bound checks.
    Audit(AuditArgs),
    /// Compare run summaries and emit plot data.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Experiment config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub task: Option<Task>,
    /// Point mass: expert, medium, random, medium-expert or mixture:name:w,...
    /// Gridworld: expert, random or epsilon-greedy:<eps>.
    #[arg(long)]
    pub behavior: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Episode cap for gridworld rollouts.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub repr_dim: Option<usize>,
    /// Comma-separated encoder hidden widths.
    #[arg(long, value_delimiter = ',')]
    pub encoder_hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub predictor_hidden: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Checkpoint path; the manifest and loss trace are written beside it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub task: Option<Task>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub algo: Option<Algorithm>,
    /// Frozen encoder checkpoint to train on top of.
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    /// Keep training the supplied encoder with the agent.
    #[arg(long)]
    pub co_train: bool,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Comma-separated hidden widths for actor and critic.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub eval_every: Option<u64>,
    #[arg(long)]
    pub eval_episodes: Option<usize>,
    #[arg(long)]
    pub log_every: Option<u64>,
    /// Effective-dimension probe interval in gradient steps.
    #[arg(long)]
    pub probe_every: Option<u64>,
    /// Attach bound verification reports (tabular tasks).
    #[arg(long)]
    pub probe_bounds: bool,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Run directory; defaults to `<output root>/runs/<label>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
    /// Replace the counterexample reward; exercises the failure path.
    #[arg(long, hide = true)]
    pub perturb_reward: Option<f64>,
    /// Report path; defaults to `<output root>/audit.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Summary files, or run directories containing `summary.json`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Report directory; defaults to `<output root>/report`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
