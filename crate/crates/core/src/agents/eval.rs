use serde::{Deserialize, Serialize};

use crate::environments::{Controller, PointMassConfig, PointMassEnv, TabularMdp, TabularPolicy};
use crate::numerics::{rng, Matrix};
use crate::{par, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnStats {
    pub mean: f64,
    /// Population standard deviation over episodes.
    pub std: f64,
    pub returns: Vec<f64>,
}

impl ReturnStats {
    pub fn from_returns(returns: Vec<f64>) -> Self {
        let n = returns.len().max(1) as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            returns,
        }
    }

    pub fn standard_error(&self) -> f64 {
        self.std / (self.returns.len().max(1) as f64).sqrt()
    }
}

/// Undiscounted point-mass returns over `episodes` episodes run in lockstep.
/// Episode `k` draws its start and any action noise from `sub_seed(seed, k)`.
pub fn evaluate_return(
    controller: &dyn Controller,
    config: &PointMassConfig,
    episodes: usize,
    seed: u64,
) -> Result<ReturnStats> {
    if episodes == 0 {
        return Err(Error::rejected("evaluation needs at least one episode"));
    }
    let mut rngs: Vec<_> = (0..episodes).map(|k| rng(par::sub_seed(seed, k as u64))).collect();
    let mut envs: Vec<PointMassEnv> = rngs
        .iter_mut()
        .map(|r| PointMassEnv::new(config.clone(), r))
        .collect();
    let mut returns = vec![0.0; episodes];
    for _ in 0..config.max_steps {
        let rows: Vec<Vec<f64>> = envs
            .iter()
            .map(PointMassEnv::state)
            .collect();
        let states = Matrix::from_rows(&rows)?;
        let actions = controller.act_batch(&states, &mut rngs);
        for (k, env) in envs.iter_mut().enumerate() {
            let (_, r) = env.step(actions.row(k));
            returns[k] += r;
        }
    }
    Ok(ReturnStats::from_returns(returns))
}

/// Discounted returns of a tabular policy, one seeded episode per worker.
pub fn evaluate_return_tabular(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<ReturnStats> {
    if episodes == 0 {
        return Err(Error::rejected("evaluation needs at least one episode"));
    }
    let returns = par::map_range(episodes, |k| {
        let mut r = rng(par::sub_seed(seed, k as u64));
        mdp.rollout_return(policy, horizon, &mut r)
    });
    Ok(ReturnStats::from_returns(returns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::PointMassBehavior;

    #[test]
    fn zero_reward_env_gives_zero() {
        let mdp = TabularMdp::new(1, 1, vec![1.0], vec![0.0], vec![1.0], 0.9, vec![false]).unwrap();
        let s = evaluate_return_tabular(&mdp, &TabularPolicy::uniform(1, 1), 5, 10, 0).unwrap();
        assert_eq!((s.mean, s.std), (0.0, 0.0));
    }

    #[test]
    fn repeated_evaluation_is_identical() {
        let cfg = PointMassConfig::default();
        let b = PointMassBehavior::medium();
        let a = evaluate_return(&b, &cfg, 4, 9).unwrap();
        assert_eq!(a, evaluate_return(&b, &cfg, 4, 9).unwrap());
        assert_eq!(a.returns.len(), 4);
    }
}
