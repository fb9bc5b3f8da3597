use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bpr_core::analysis::mean_std;
use bpr_core::environments::{
    build_counterexample, generate_pointmass_dataset, generate_tabular_dataset, gridworld, gridworld_behavior,
    GridworldConfig, OfflineDataset, PointMassBehavior, PointMassConfig, TabularMdp, TabularPolicy,
};
use serde::Serialize;

use crate::args::GenDataArgs;
use crate::config::{DatasetSpec, ExperimentConfig, Task};
use crate::failure::usage;

/// Gridworld behavior from `expert`, `random` or `epsilon-greedy:<eps>`,
/// along with its canonical tag.
pub fn gridworld_policy(mdp: &TabularMdp, spec: &str) -> Result<(TabularPolicy, String)> {
    let eps = match spec {
        "expert" => 0.0,
        "random" => 1.0,
        _ => {
            let v = spec
                .strip_prefix("epsilon-greedy:")
                .ok_or_else(|| usage(format!("behavior: unknown gridworld behavior '{spec}'")))?;
            v.parse::<f64>()
                .map_err(|_| usage(format!("behavior: bad epsilon '{v}'")))?
        }
    };
    let policy = gridworld_behavior(mdp, eps).map_err(|e| usage(format!("behavior: {e}")))?;
    Ok((policy, format!("epsilon-greedy:{eps}")))
}

/// Build the dataset a spec describes without touching disk.
pub fn generate(task: Task, spec: &DatasetSpec) -> Result<OfflineDataset> {
    if spec.size == 0 {
        return Err(usage("dataset.size: must be positive"));
    }
    Ok(match task {
        Task::Pointmass => {
            let behavior = PointMassBehavior::parse(spec.behavior_for(task)).map_err(|e| usage(format!("behavior: {e}")))?;
            generate_pointmass_dataset(&PointMassConfig::default(), &behavior, spec.size, spec.seed)?
        }
        Task::Gridworld => {
            let mdp = gridworld(&GridworldConfig::default())?;
            let (policy, tag) = gridworld_policy(&mdp, spec.behavior_for(task))?;
            generate_tabular_dataset(&mdp, &policy, spec.size, spec.horizon, spec.seed, &tag)?
        }
        Task::Counterexample => build_counterexample().dataset,
    })
}

/// Load `spec.path` if set, otherwise generate in memory.
pub fn load_or_generate(task: Task, spec: &DatasetSpec) -> Result<OfflineDataset> {
    match &spec.path {
        Some(p) => OfflineDataset::load(p).with_context(|| format!("loading dataset {}", p.display())),
        None => generate(task, spec),
    }
}

#[derive(Debug, Serialize)]
pub struct DatasetStats {
    pub n: usize,
    pub episodes: usize,
    pub return_mean: f64,
    pub return_std: f64,
    pub behavior_tag: String,
}

pub fn stats(d: &OfflineDataset) -> DatasetStats {
    let returns = d.episode_returns();
    let (return_mean, return_std) = mean_std(&returns).unwrap_or((0.0, 0.0));
    DatasetStats {
        n: d.len(),
        episodes: returns.len(),
        return_mean,
        return_std,
        behavior_tag: d.behavior_tag().to_string(),
    }
}

pub fn run(args: &GenDataArgs, root: Option<&Path>) -> Result<PathBuf> {
    let mut cfg = ExperimentConfig::load_or_default(args.config.as_deref())?;
    if let Some(t) = args.task {
        cfg.task = t;
    }
    if let Some(b) = &args.behavior {
        cfg.dataset.behavior = Some(b.clone());
    }
    if let Some(n) = args.n {
        cfg.dataset.size = n;
    }
    if let Some(s) = args.seed {
        cfg.dataset.seed = s;
    }
    if let Some(h) = args.horizon {
        cfg.dataset.horizon = h;
    }
    let d = generate(cfg.task, &cfg.dataset)?;
    let out = match &args.out {
        Some(p) => p.clone(),
        None => crate::config::output_root(&cfg, root)
            .join("data")
            .join(format!("{}-n{}-s{}.jsonl", cfg.task.name(), d.len(), cfg.dataset.seed)),
    };
    d.save(&out).with_context(|| format!("writing {}", out.display()))?;
    let st = stats(&d);
    println!(
        "wrote {} transitions ({} episodes, return {:.4} ± {:.4}, behavior {}) to {}",
        st.n,
        st.episodes,
        st.return_mean,
        st.return_std,
        st.behavior_tag,
        out.display()
    );
    Ok(out)
}
