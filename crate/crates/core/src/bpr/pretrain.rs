use log::info;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::numerics::{rng, Adam, AdamConfig, Matrix};
use crate::environments::OfflineDataset;
use crate::{Error, Result};

use super::loss::bpr_batch;
use super::model::{EncoderModel, PredictorModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub repr_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub predictor_hidden: usize,
    pub learning_rate: f64,
    /// Samples whose action norm is below this are excluded.
    pub min_action_norm: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 100_000,
            batch_size: 256,
            seed: 0,
            repr_dim: 64,
            encoder_hidden: vec![256, 256],
            predictor_hidden: 256,
            learning_rate: 3e-4,
            min_action_norm: 1e-6,
        }
    }
}

pub struct PretrainOutcome {
    /// Frozen encoder.
    pub encoder: EncoderModel,
    pub predictor: PredictorModel,
    /// Mean minibatch loss at every step.
    pub loss_trace: Vec<f64>,
    /// Samples dropped for having a near-zero action.
    pub filtered: usize,
}

/// Indices of samples whose action norm reaches `min_action_norm`.
pub fn usable_samples(dataset: &OfflineDataset, min_action_norm: f64) -> Vec<usize> {
    dataset
        .transitions()
        .iter()
        .enumerate()
        .filter(|(_, t)| {
            let n = t.action.iter().map(|x| x * x).sum::<f64>().sqrt();
            n >= min_action_norm && n > 0.0
        })
        .map(|(i, _)| i)
        .collect()
}

/// Jointly fit encoder and predictor on the normalized action-prediction
/// loss with Adam minibatches (sampled with replacement), then freeze the encoder.
pub fn pretrain(dataset: &OfflineDataset, config: &PretrainConfig) -> Result<PretrainOutcome> {
    pretrain_with_hook(dataset, config, 0, |_, _, _| Ok(()))
}

/// [`pretrain`] that also calls `hook(step, encoder, predictor)` before the
/// first update and after every `every` updates (never when `every` is 0).
pub fn pretrain_with_hook<H>(
    dataset: &OfflineDataset,
    config: &PretrainConfig,
    every: u64,
    mut hook: H,
) -> Result<PretrainOutcome>
where
    H: FnMut(u64, &EncoderModel, &PredictorModel) -> Result<()>,
{
    if config.batch_size == 0 || config.repr_dim == 0 {
        return Err(Error::rejected("batch_size and repr_dim must be positive"));
    }
    let keep = usable_samples(dataset, config.min_action_norm);
    let filtered = dataset.len() - keep.len();
    if keep.is_empty() {
        return Err(Error::UnusableDataset(format!(
            "all {} actions have norm below {}",
            dataset.len(),
            config.min_action_norm
        )));
    }
    if filtered > 0 {
        info!("pretrain: excluded {filtered} samples with near-zero actions");
    }
    let mut r = rng(config.seed);
    let mut encoder = EncoderModel::new(dataset.state_dim(), &config.encoder_hidden, config.repr_dim, &mut r)?;
    let mut predictor = PredictorModel::new(config.repr_dim, config.predictor_hidden, dataset.action_dim(), &mut r)?;
    let adam_cfg = AdamConfig::with_lr(config.learning_rate);
    let mut enc_opt = Adam::new(encoder.net().param_count(), adam_cfg);
    let mut pred_opt = Adam::new(predictor.net().param_count(), adam_cfg);

    let ts = dataset.transitions();
    let (sd, ad) = (dataset.state_dim(), dataset.action_dim());
    let unit: Vec<Vec<f64>> = keep
        .iter()
        .map(|&i| {
            let a = &ts[i].action;
            let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            a.iter().map(|x| x / n).collect()
        })
        .collect();
    let b = config.batch_size;
    let mut states = Matrix::zeros(b, sd);
    let mut targets = Matrix::zeros(b, ad);
    let mut loss_trace = Vec::with_capacity(config.steps as usize);
    if every > 0 {
        hook(0, &encoder, &predictor)?;
    }
    for step in 0..config.steps {
        for row in 0..b {
            let k = r.random_range(0..keep.len());
            states.row_mut(row).copy_from_slice(&ts[keep[k]].state);
            targets.row_mut(row).copy_from_slice(&unit[k]);
        }
        let enc_cache = encoder.net().forward_batch(&states)?;
        let out = bpr_batch(predictor.net(), enc_cache.output(), &targets)?;
        if !out.loss.is_finite() {
            return Err(Error::Divergence {
                what: format!("pretraining loss at step {step}"),
                index: step as usize,
            });
        }
        let enc_grad = encoder.net().backward_batch(&enc_cache, &out.z_grad)?;
        enc_opt.step(encoder.net_mut()?.params_mut(), &enc_grad.params)?;
        pred_opt.step(predictor.net_mut().params_mut(), &out.predictor_grad)?;
        loss_trace.push(out.loss);
        if every > 0 && (step + 1) % every == 0 {
            hook(step + 1, &encoder, &predictor)?;
        }
    }
    Ok(PretrainOutcome {
        encoder: encoder.freeze(),
        predictor,
        loss_trace,
        filtered,
    })
}

/// Mean of the last `window` entries (all of them if shorter).
pub fn windowed_mean(trace: &[f64], window: usize) -> Option<f64> {
    if trace.is_empty() || window == 0 {
        return None;
    }
    let tail = &trace[trace.len().saturating_sub(window)..];
    Some(tail.iter().sum::<f64>() / tail.len() as f64)
}
