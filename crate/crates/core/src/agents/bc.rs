use rand::Rng as _;

use crate::bpr::EncoderModel;
use crate::environments::OfflineDataset;
use crate::numerics::{rng, Adam, AdamConfig};
use crate::{Error, Result};

use super::actor_critic::gather;
use super::config::AgentConfig;
use super::models::{Featurizer, PolicyModel};
use super::objectives::bc_objective;

/// Regress a deterministic policy onto dataset actions (mean squared error).
pub fn train_bc(dataset: &OfflineDataset, config: &AgentConfig, encoder: Option<&EncoderModel>) -> Result<PolicyModel> {
    config.validate(encoder.is_some())?;
    if config.co_train_encoder {
        return Err(Error::rejected("agent.co_train_encoder: not supported for behavior cloning"));
    }
    if dataset.is_empty() {
        return Err(Error::rejected("behavior cloning needs a non-empty dataset"));
    }
    let encoder = if config.use_encoder { encoder.cloned() } else { None };
    let mut r = rng(config.seed);
    let states = dataset.state_matrix();
    let actions = dataset.action_matrix();
    let featurizer = Featurizer::fit(&states, encoder, config.normalize_inputs)?;
    let x = featurizer.apply(&states)?;
    let mut policy = PolicyModel::new(featurizer, &config.hidden, dataset.action_dim(), &mut r)?;
    let mut opt = Adam::new(policy.net.param_count(), AdamConfig::with_lr(config.actor_lr));
    for step in 0..config.gradient_steps {
        let idx: Vec<usize> = (0..config.batch_size).map(|_| r.random_range(0..dataset.len())).collect();
        let obj = bc_objective(&policy.net, &gather(&x, &idx), &gather(&actions, &idx))?;
        if !obj.loss.is_finite() {
            return Err(Error::Divergence {
                what: format!("behavior cloning loss at step {step}"),
                index: step as usize,
            });
        }
        opt.step(policy.net.params_mut(), &obj.grad)?;
    }
    Ok(policy)
}
