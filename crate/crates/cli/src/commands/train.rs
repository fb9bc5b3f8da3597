use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bpr_core::agents::{
    evaluate_return, train_bc, train_cql, train_cql_tabular, train_spibb_tabular, train_td3bc, write_trace_csv,
    AgentConfig, Algorithm, PolicyModel, TraceRow,
};
use bpr_core::analysis::{effective_dimension_trace, verify_theorem2, verify_theorem3};
use bpr_core::bpr::EncoderModel;
use bpr_core::environments::{
    evaluate_policy_exact, gridworld, GridworldConfig, OfflineDataset, PointMassBehavior, PointMassConfig,
    TabularPolicy,
};
use bpr_core::io::{to_json_pretty, write_atomic, write_json};
use bpr_core::numerics::checkpoint;
use bpr_core::par;

use crate::args::TrainArgs;
use crate::commands::gen_data::{gridworld_policy, load_or_generate};
use crate::config::{output_root, ExperimentConfig, Task};
use crate::failure::usage;
use crate::summary::{Aggregate, CurvePoint, Reference, RunSummary, SeedRow, SUMMARY_SCHEMA_VERSION};

/// Episodes behind the expert and random reference returns.
pub const REFERENCE_EPISODES: usize = 100;
const REFERENCE_SEED: u64 = 0x5EF;
const FINAL_EVAL_STREAM: u64 = 0xF1;

pub fn pointmass_reference(env: &PointMassConfig) -> Result<Reference> {
    Ok(Reference {
        expert_return: evaluate_return(&PointMassBehavior::expert(), env, REFERENCE_EPISODES, REFERENCE_SEED)?.mean,
        random_return: evaluate_return(&PointMassBehavior::Random, env, REFERENCE_EPISODES, REFERENCE_SEED)?.mean,
    })
}

/// Fold command-line flags into the experiment config.
pub fn merge(args: &TrainArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load_or_default(args.config.as_deref())?;
    if let Some(t) = args.task {
        cfg.task = t;
    }
    if let Some(p) = &args.dataset {
        cfg.dataset.path = Some(p.clone());
    }
    if let Some(a) = args.algo {
        cfg.agent.algorithm = a;
    }
    if let Some(e) = &args.encoder {
        cfg.encoder = Some(e.clone());
    }
    if cfg.encoder.is_some() {
        cfg.agent.use_encoder = true;
    }
    if args.co_train {
        cfg.agent.co_train_encoder = true;
    }
    if let Some(v) = args.steps {
        cfg.agent.gradient_steps = v;
    }
    if let Some(v) = args.batch_size {
        cfg.agent.batch_size = v;
    }
    if let Some(v) = &args.hidden {
        cfg.agent.hidden = v.clone();
    }
    if let Some(v) = &args.seeds {
        cfg.seeds = v.clone();
    }
    if let Some(v) = args.eval_every {
        cfg.agent.eval_every = v;
    }
    if let Some(v) = args.eval_episodes {
        cfg.agent.eval_episodes = v;
    }
    if let Some(v) = args.log_every {
        cfg.agent.log_every = v;
    }
    if let Some(v) = args.probe_every {
        cfg.agent.probe_every = v;
    }
    if args.probe_bounds {
        cfg.probes.bounds = true;
    }
    if cfg.probes.effective_dimension && cfg.agent.probe_every == 0 {
        cfg.agent.probe_every = (cfg.agent.gradient_steps / 20).max(1);
    }
    if let Some(v) = &args.label {
        cfg.label = Some(v.clone());
    }
    if let Some(v) = args.threshold {
        cfg.threshold = v;
    }
    Ok(cfg)
}

/// Default variant name, e.g. `td3bc-bpr` or `spibb`.
pub fn default_label(cfg: &ExperimentConfig) -> String {
    let algo = serde_json::to_value(cfg.agent.algorithm)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    match (cfg.task, cfg.agent.use_encoder, cfg.agent.co_train_encoder) {
        (Task::Gridworld, _, _) => algo,
        (_, false, _) => format!("{algo}-scratch"),
        (_, true, false) => format!("{algo}-bpr"),
        (_, true, true) => format!("{algo}-cotrain"),
    }
}

/// Run every seed and write traces, actor checkpoints and `summary.json`
/// under the run directory. Returns the summary path.
pub fn run(args: &TrainArgs, root: Option<&Path>) -> Result<PathBuf> {
    let cfg = merge(args)?;
    let run_dir = match &args.out {
        Some(p) => p.clone(),
        None => output_root(&cfg, root)
            .join("runs")
            .join(cfg.label.clone().unwrap_or_else(|| default_label(&cfg))),
    };
    let summary = execute(&cfg, Some(&run_dir))?;
    let path = run_dir.join("summary.json");
    write_json(&path, &summary)?;
    let a = &summary.aggregate;
    println!(
        "{}: {} seeds, final return {:.4} ± {:.4} (IQM {:.4}), summary {}",
        summary.label,
        a.n_seeds,
        a.final_return_mean,
        a.final_return_std,
        a.final_return_iqm,
        path.display()
    );
    Ok(path)
}

/// Train across seeds (concurrently, one isolated worker per seed) and
/// aggregate. Per-seed artifacts go under `run_dir` when given.
pub fn execute(cfg: &ExperimentConfig, run_dir: Option<&Path>) -> Result<RunSummary> {
    cfg.validate()?;
    let dataset = load_or_generate(cfg.task, &cfg.dataset)?;
    let encoder = cfg
        .encoder
        .as_deref()
        .map(|p| EncoderModel::load(p).with_context(|| format!("loading encoder {}", p.display())))
        .transpose()?;
    let label = cfg.label.clone().unwrap_or_else(|| default_label(cfg));
    let (rows, reference) = match cfg.task {
        Task::Pointmass => {
            if cfg.agent.algorithm == Algorithm::Spibb {
                return Err(usage("agent.algorithm: spibb needs a tabular task"));
            }
            let env = PointMassConfig::default();
            let reference = pointmass_reference(&env)?;
            let rows = par::map(&cfg.seeds, |&seed| {
                pointmass_seed(cfg, &dataset, encoder.as_ref(), &env, &reference, seed, run_dir)
            });
            (rows.into_iter().collect::<Result<Vec<_>>>()?, Some(reference))
        }
        Task::Gridworld => {
            if encoder.is_some() {
                return Err(usage("encoder: tabular agents work on raw states"));
            }
            let rows = par::map(&cfg.seeds, |&seed| gridworld_seed(cfg, &dataset, seed, run_dir));
            (rows.into_iter().collect::<Result<Vec<_>>>()?, None)
        }
        Task::Counterexample => {
            return Err(usage("task: the counterexample is audited, not trained (use `audit`)"));
        }
    };
    Ok(RunSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        task: cfg.task,
        label,
        algorithm: cfg.agent.algorithm,
        dataset_hash: dataset.content_hash()?,
        dataset_size: dataset.len(),
        behavior_tag: dataset.behavior_tag().to_string(),
        encoder_hash: encoder.as_ref().map(EncoderModel::param_hash),
        agent: cfg.agent.clone(),
        threshold: cfg.threshold,
        reference,
        aggregate: Aggregate::from_rows(&rows),
        seeds: rows,
    })
}

fn seed_dir(run_dir: Option<&Path>, seed: u64) -> Option<PathBuf> {
    run_dir.map(|d| d.join(format!("seed-{seed}")))
}

fn pointmass_seed(
    cfg: &ExperimentConfig,
    dataset: &OfflineDataset,
    encoder: Option<&EncoderModel>,
    env: &PointMassConfig,
    reference: &Reference,
    seed: u64,
    run_dir: Option<&Path>,
) -> Result<SeedRow> {
    let agent = AgentConfig {
        seed,
        ..cfg.agent.clone()
    };
    let (policy, trace, encoder_hash_after): (PolicyModel, Vec<TraceRow>, Option<String>) = match agent.algorithm {
        Algorithm::Bc => (train_bc(dataset, &agent, encoder)?, Vec::new(), None),
        Algorithm::Td3bc | Algorithm::Cql => {
            let run = if agent.algorithm == Algorithm::Td3bc {
                train_td3bc(dataset, &agent, encoder, Some(env))
            } else {
                train_cql(dataset, &agent, encoder, Some(env))
            }
            .with_context(|| format!("training seed {seed}"))?;
            (run.policy, run.trace, run.encoder_hash_after)
        }
        Algorithm::Spibb => unreachable!("rejected before dispatch"),
    };
    let final_stats = evaluate_return(&policy, env, agent.eval_episodes.max(1), par::sub_seed(seed, FINAL_EVAL_STREAM))?;
    let learning_curve: Vec<CurvePoint> = trace
        .iter()
        .filter_map(|r| r.eval_return_mean.map(|v| CurvePoint { step: r.step, value: v }))
        .collect();
    let steps_to_threshold = learning_curve
        .iter()
        .find(|p| reference.normalize(p.value) >= cfg.threshold)
        .map(|p| p.step);
    let ed = effective_dimension_trace(&trace);
    if let Some(dir) = seed_dir(run_dir, seed) {
        write_trace_csv(&dir.join("trace.csv"), &trace)?;
        checkpoint::save(&policy.net, &dir.join("actor.ckpt"))?;
    }
    Ok(SeedRow {
        seed,
        final_return: final_stats.mean,
        final_return_std: final_stats.std,
        normalized_score: Some(reference.normalize(final_stats.mean)),
        steps_to_threshold,
        final_effective_dimension: ed.last().map(|e| e.1),
        learning_curve,
        effective_dimension_trace: ed
            .iter()
            .map(|&(step, v)| CurvePoint { step, value: v as f64 })
            .collect(),
        bounds: None,
        encoder_hash_after,
    })
}

fn gridworld_seed(cfg: &ExperimentConfig, dataset: &OfflineDataset, seed: u64, run_dir: Option<&Path>) -> Result<SeedRow> {
    let agent = AgentConfig {
        seed,
        ..cfg.agent.clone()
    };
    let mdp = gridworld(&GridworldConfig::default())?;
    let truth = || -> Result<TabularPolicy> {
        gridworld_policy(&mdp, dataset.behavior_tag())
            .map(|p| p.0)
            .map_err(|_| usage("probes.bounds: the dataset's behavior tag does not name a known gridworld behavior"))
    };
    let (policy, bounds) = match agent.algorithm {
        Algorithm::Spibb => {
            let out = train_spibb_tabular(dataset, &mdp, &agent)?;
            let bounds = if cfg.probes.bounds {
                Some(verify_theorem2(&mdp, dataset, &out, &truth()?)?)
            } else {
                None
            };
            (out.policy, bounds)
        }
        Algorithm::Cql => {
            let out = train_cql_tabular(dataset, &mdp, &agent)?;
            let bounds = if cfg.probes.bounds {
                Some(verify_theorem3(&mdp, dataset, &out, &truth()?, &agent)?)
            } else {
                None
            };
            (out.policy, bounds)
        }
        _ => return Err(usage("agent.algorithm: gridworld supports spibb and cql")),
    };
    let j = evaluate_policy_exact(&mdp, &policy)?.j;
    if let Some(dir) = seed_dir(run_dir, seed) {
        let rows: Vec<Vec<f64>> = (0..policy.n_states()).map(|s| policy.row(s).to_vec()).collect();
        write_atomic(&dir.join("policy.json"), to_json_pretty(&rows)?.as_bytes())?;
    }
    Ok(SeedRow {
        seed,
        final_return: j,
        final_return_std: 0.0,
        normalized_score: None,
        steps_to_threshold: None,
        final_effective_dimension: None,
        learning_curve: Vec::new(),
        effective_dimension_trace: Vec::new(),
        bounds,
        encoder_hash_after: None,
    })
}
