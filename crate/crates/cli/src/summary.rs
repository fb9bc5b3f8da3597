use std::path::Path;

use anyhow::{Context, Result};
use bpr_core::agents::{AgentConfig, Algorithm};
use bpr_core::analysis::{iqm, mean_std, median, BoundReport};
use serde::{Deserialize, Serialize};

use crate::config::Task;
use crate::failure::usage;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Mean returns of the scripted expert and random controllers; normalized
/// score is `(R − random) / (expert − random)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub expert_return: f64,
    pub random_return: f64,
}

impl Reference {
    pub fn normalize(&self, ret: f64) -> f64 {
        (ret - self.random_return) / (self.expert_return - self.random_return)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    pub final_return: f64,
    pub final_return_std: f64,
    pub normalized_score: Option<f64>,
    /// First evaluated step whose normalized score reached the threshold.
    pub steps_to_threshold: Option<u64>,
    pub final_effective_dimension: Option<usize>,
    /// Evaluation return over training.
    pub learning_curve: Vec<CurvePoint>,
    pub effective_dimension_trace: Vec<CurvePoint>,
    pub bounds: Option<BoundReport>,
    pub encoder_hash_after: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_seeds: usize,
    pub final_return_mean: f64,
    pub final_return_std: f64,
    pub final_return_iqm: f64,
    pub normalized_mean: Option<f64>,
    pub normalized_iqm: Option<f64>,
    pub seeds_reaching_threshold: usize,
    /// Median over seeds that reached the threshold.
    pub steps_to_threshold_median: Option<f64>,
    pub final_effective_dimension_median: Option<f64>,
    /// Seeds whose bound report had non-negative slack.
    pub bounds_held: Option<usize>,
}

impl Aggregate {
    pub fn from_rows(rows: &[SeedRow]) -> Self {
        let finals: Vec<f64> = rows.iter().map(|r| r.final_return).collect();
        let (mean, std) = mean_std(&finals).unwrap_or((f64::NAN, f64::NAN));
        let normalized: Vec<f64> = rows.iter().filter_map(|r| r.normalized_score).collect();
        let steps: Vec<f64> = rows.iter().filter_map(|r| r.steps_to_threshold.map(|s| s as f64)).collect();
        let eds: Vec<f64> = rows.iter().filter_map(|r| r.final_effective_dimension.map(|e| e as f64)).collect();
        let slacks: Vec<bool> = rows
            .iter()
            .filter_map(|r| r.bounds.as_ref())
            .map(|b| b.theorem2_slack.or(b.theorem3_slack).is_some_and(|s| s >= -1e-9))
            .collect();
        Self {
            n_seeds: rows.len(),
            final_return_mean: mean,
            final_return_std: std,
            final_return_iqm: iqm(&finals).unwrap_or(f64::NAN),
            normalized_mean: mean_std(&normalized).map(|m| m.0),
            normalized_iqm: iqm(&normalized),
            seeds_reaching_threshold: steps.len(),
            steps_to_threshold_median: median(&steps),
            final_effective_dimension_median: median(&eds),
            bounds_held: (!slacks.is_empty()).then(|| slacks.iter().filter(|&&b| b).count()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub task: Task,
    pub label: String,
    pub algorithm: Algorithm,
    pub dataset_hash: String,
    pub dataset_size: usize,
    pub behavior_tag: String,
    pub encoder_hash: Option<String>,
    pub agent: AgentConfig,
    pub threshold: f64,
    pub reference: Option<Reference>,
    pub seeds: Vec<SeedRow>,
    pub aggregate: Aggregate,
}

impl RunSummary {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading summary {}", path.display()))?;
        let summary: Self = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        if summary.schema_version != SUMMARY_SCHEMA_VERSION {
            return Err(usage(format!(
                "{}: schema_version {} is not {SUMMARY_SCHEMA_VERSION}",
                path.display(),
                summary.schema_version
            )));
        }
        Ok(summary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: u64, ret: f64, steps: Option<u64>) -> SeedRow {
        SeedRow {
            seed,
            final_return: ret,
            final_return_std: 0.0,
            normalized_score: Some(ret / 10.0),
            steps_to_threshold: steps,
            final_effective_dimension: Some(seed as usize),
            learning_curve: vec![],
            effective_dimension_trace: vec![],
            bounds: None,
            encoder_hash_after: None,
        }
    }

    #[test]
    fn aggregate_recomputes_from_rows() {
        let rows = vec![row(0, 1.0, Some(100)), row(1, 4.0, None), row(2, 2.0, Some(300)), row(3, 3.0, Some(200))];
        let agg = Aggregate::from_rows(&rows);
        assert_eq!(agg.n_seeds, 4);
        assert_eq!(agg.final_return_mean, 2.5);
        // Middle two of 1, 2, 3, 4.
        assert_eq!(agg.final_return_iqm, 2.5);
        assert_eq!(agg.seeds_reaching_threshold, 3);
        assert_eq!(agg.steps_to_threshold_median, Some(200.0));
        assert_eq!(agg.final_effective_dimension_median, Some(1.5));
        assert_eq!(agg.bounds_held, None);
    }
}
