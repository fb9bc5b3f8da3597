use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::analysis::{ProbeBatch, DEFAULT_EPSILON};
use crate::bpr::{bpr_batch, usable_samples, EncoderModel, PredictorModel};
use crate::environments::{OfflineDataset, PointMassConfig};
use crate::numerics::{rng, Adam, AdamConfig, Matrix, Mlp, Rng};
use crate::{par, Error, Result};

use super::config::AgentConfig;
use super::eval::evaluate_return;
use super::models::{concat_cols, Featurizer, PolicyModel, QModel};
use super::objectives::{actor_objective, cql_critic_objective, td3bc_lambda, Objective};
use super::trace::{LossAccumulator, TraceRow};

/// Sub-seed streams derived from the run seed.
const PROBE_STREAM: u64 = 0xED;
const EVAL_STREAM: u64 = 0xE7A1;

/// Output of a neural offline RL run.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub policy: PolicyModel,
    /// First of the twin critics.
    pub critic: QModel,
    pub trace: Vec<TraceRow>,
    /// Parameter hash of the supplied encoder and of the encoder used at the end.
    pub encoder_hash_before: Option<String>,
    pub encoder_hash_after: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Variant {
    Td3bc,
    Cql,
}

/// Inputs of one minibatch, already passed through the featurizers.
struct Batch {
    x: Matrix,
    xc: Matrix,
    xc2: Matrix,
    x2: Matrix,
    actions: Matrix,
    rewards: Vec<f64>,
    not_done: Vec<f64>,
    idx: Vec<usize>,
}

pub(crate) fn gather(m: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), m.cols());
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(m.row(i));
    }
    out
}

fn add_into(dst: &mut Matrix, src: &Matrix, weight: f64) {
    for (d, s) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
        *d += weight * s;
    }
}

pub(crate) fn train_actor_critic(
    dataset: &OfflineDataset,
    config: &AgentConfig,
    encoder: Option<&EncoderModel>,
    eval_env: Option<&PointMassConfig>,
    variant: Variant,
) -> Result<TrainingRun> {
    config.validate(encoder.is_some())?;
    if dataset.is_empty() {
        return Err(Error::rejected("training needs a non-empty dataset"));
    }
    let encoder = if config.use_encoder { encoder } else { None };
    if let Some(e) = encoder {
        if e.state_dim() != dataset.state_dim() {
            return Err(Error::rejected(format!(
                "encoder expects state_dim {}, dataset has {}",
                e.state_dim(),
                dataset.state_dim()
            )));
        }
    }
    let hash_before = encoder.map(EncoderModel::param_hash);
    let co = config.co_train_encoder;
    let mut r = rng(config.seed);
    let states = dataset.state_matrix();
    let next_states = dataset.next_state_matrix();
    let actions = dataset.action_matrix();
    let ad = dataset.action_dim();
    let ts = dataset.transitions();
    let rewards: Vec<f64> = ts.iter().map(|t| t.reward).collect();
    let not_done: Vec<f64> = ts.iter().map(|t| if t.done { 0.0 } else { 1.0 }).collect();

    let mut live_encoder = encoder.map(|e| if co { e.thawed() } else { e.clone() });
    let actor_feat = match (&live_encoder, co) {
        (Some(e), true) => Featurizer::identity(e.repr_dim(), None),
        _ => Featurizer::fit(&states, live_encoder.clone(), config.normalize_inputs)?,
    };
    let critic_feat = if config.raw_state_critic {
        Featurizer::fit(&states, None, config.normalize_inputs)?
    } else {
        actor_feat.clone()
    };
    // Fixed inputs are featurized once; co-training re-encodes every batch.
    let pre = if co {
        None
    } else {
        Some((
            actor_feat.apply(&states)?,
            actor_feat.apply(&next_states)?,
            critic_feat.apply(&states)?,
            critic_feat.apply(&next_states)?,
        ))
    };

    let mut actor = PolicyModel::new(actor_feat.clone(), &config.hidden, ad, &mut r)?.net;
    let mut q1 = QModel::new(critic_feat.clone(), &config.hidden, ad, &mut r)?.net;
    let mut q2 = QModel::new(critic_feat.clone(), &config.hidden, ad, &mut r)?.net;
    let (mut actor_t, mut q1_t, mut q2_t) = (actor.clone(), q1.clone(), q2.clone());
    let mut actor_opt = Adam::new(actor.param_count(), AdamConfig::with_lr(config.actor_lr));
    let mut q1_opt = Adam::new(q1.param_count(), AdamConfig::with_lr(config.critic_lr));
    let mut q2_opt = Adam::new(q2.param_count(), AdamConfig::with_lr(config.critic_lr));

    let mut co_state = if co {
        let e = live_encoder.as_ref().expect("co-training validated to have an encoder");
        let predictor = PredictorModel::new(e.repr_dim(), config.predictor_hidden, ad, &mut r)?;
        let keep = usable_samples(dataset, config.min_action_norm);
        let mut usable = vec![false; dataset.len()];
        keep.iter().for_each(|&i| usable[i] = true);
        Some(CoTrain {
            enc_opt: Adam::new(e.net().param_count(), AdamConfig::with_lr(config.encoder_lr)),
            pred_opt: Adam::new(predictor.net().param_count(), AdamConfig::with_lr(config.encoder_lr)),
            predictor,
            usable,
        })
    } else {
        None
    };

    let probe = if config.probe_every > 0 {
        Some(ProbeBatch::sample(dataset, config.probe_batch, par::sub_seed(config.seed, PROBE_STREAM))?)
    } else {
        None
    };
    let eval_seed = par::sub_seed(config.seed, EVAL_STREAM);
    let noise = Normal::new(0.0, config.policy_noise.max(0.0)).map_err(|e| Error::rejected(e.to_string()))?;

    let snapshot_features = |enc: &Option<EncoderModel>| -> (Featurizer, Featurizer) {
        if co {
            let e = enc.clone();
            let dim = actor_feat.output_dim();
            (Featurizer::identity(dim, e.clone()), Featurizer::identity(dim, e))
        } else {
            (actor_feat.clone(), critic_feat.clone())
        }
    };
    let record = |step: u64, row: &mut TraceRow, actor: &Mlp, q1: &Mlp, enc: &Option<EncoderModel>| -> Result<()> {
        let (af, cf) = snapshot_features(enc);
        if let Some(env) = eval_env.filter(|_| config.eval_every > 0 && (step % config.eval_every == 0 || step == config.gradient_steps)) {
            let policy = PolicyModel {
                net: actor.clone(),
                featurizer: af,
                max_action: 1.0,
            };
            let stats = evaluate_return(&policy, env, config.eval_episodes, eval_seed)?;
            row.eval_return_mean = Some(stats.mean);
            row.eval_return_std = Some(stats.std);
        }
        if let Some(p) = probe.as_ref().filter(|_| step % config.probe_every == 0 || step == config.gradient_steps) {
            let q = QModel {
                net: q1.clone(),
                featurizer: cf,
            };
            row.effective_dimension = Some(p.probe(&q, DEFAULT_EPSILON)?.count);
        }
        Ok(())
    };

    let mut trace = Vec::new();
    let mut acc = LossAccumulator::default();
    let mut row0 = acc.take(0);
    record(0, &mut row0, &actor, &q1, &live_encoder)?;
    trace.push(row0);

    let b = config.batch_size;
    for step in 1..=config.gradient_steps {
        let idx: Vec<usize> = (0..b).map(|_| r.random_range(0..dataset.len())).collect();
        let mut enc_cache = None;
        let batch = match &pre {
            Some((x, x2, xc, xc2)) => Batch {
                x: gather(x, &idx),
                x2: gather(x2, &idx),
                xc: gather(xc, &idx),
                xc2: gather(xc2, &idx),
                actions: gather(&actions, &idx),
                rewards: idx.iter().map(|&i| rewards[i]).collect(),
                not_done: idx.iter().map(|&i| not_done[i]).collect(),
                idx,
            },
            None => {
                let e = live_encoder.as_ref().expect("co-training has an encoder");
                let cache = e.net().forward_batch(&gather(&states, &idx))?;
                let z = cache.output().clone();
                let z2 = e.encode_batch(&gather(&next_states, &idx))?;
                enc_cache = Some(cache);
                Batch {
                    x: z.clone(),
                    xc: z,
                    x2: z2.clone(),
                    xc2: z2,
                    actions: gather(&actions, &idx),
                    rewards: idx.iter().map(|&i| rewards[i]).collect(),
                    not_done: idx.iter().map(|&i| not_done[i]).collect(),
                    idx,
                }
            }
        };

        // Target with clipped policy smoothing noise.
        let mut a2 = actor_t.predict_batch(&batch.x2)?;
        for v in a2.as_mut_slice() {
            let eps = noise.sample(&mut r).clamp(-config.noise_clip, config.noise_clip);
            *v = (*v + eps).clamp(-1.0, 1.0);
        }
        let in2 = concat_cols(&batch.xc2, &a2)?;
        let t1 = q1_t.predict_batch(&in2)?;
        let t2 = q2_t.predict_batch(&in2)?;
        let y: Vec<f64> = (0..b)
            .map(|i| {
                let m = t1.get(i, 0).min(t2.get(i, 0));
                batch.rewards[i] + config.gamma * batch.not_done[i] * m
            })
            .collect();

        let candidates = match variant {
            Variant::Cql => Some(cql_candidates(&actor, &batch.x, config, &noise, &mut r)?),
            Variant::Td3bc => None,
        };
        let cand = candidates.as_ref().map(|c| (c, 2 * config.cql_samples));
        let alpha = if variant == Variant::Cql { config.cql_alpha } else { 0.0 };
        let o1 = cql_critic_objective(&q1, &batch.xc, &batch.actions, &y, cand, alpha)?;
        let o2 = cql_critic_objective(&q2, &batch.xc, &batch.actions, &y, cand, alpha)?;
        check_loss("critic loss", step, o1.loss + o2.loss)?;
        acc.critic(o1.loss + o2.loss);

        if let (Some(cs), Some(cache)) = (co_state.as_mut(), enc_cache.as_ref()) {
            let e = live_encoder.as_mut().expect("co-training has an encoder");
            let bpr = cs.step(&batch, &o1, &o2, config.bpr_weight, cache, e, dataset)?;
            if bpr.is_finite() {
                acc.bpr(bpr);
            }
        }
        q1_opt.step(q1.params_mut(), &o1.grad)?;
        q2_opt.step(q2.params_mut(), &o2.grad)?;

        if step % config.policy_delay == 0 {
            let (lambda, bc_weight) = match variant {
                Variant::Td3bc => {
                    let pi = actor.predict_batch(&batch.x)?;
                    let q = q1.predict_batch(&concat_cols(&batch.xc, &pi)?)?;
                    (td3bc_lambda(config.td3bc_alpha, q.as_slice()), 1.0)
                }
                Variant::Cql => (1.0, 0.0),
            };
            let obj = actor_objective(&actor, &q1, &batch.x, &batch.xc, &batch.actions, lambda, bc_weight)?;
            check_loss("actor loss", step, obj.loss)?;
            actor_opt.step(actor.params_mut(), &obj.grad)?;
            acc.actor(obj.loss);
            actor_t.soft_update_from(&actor, config.tau)?;
            q1_t.soft_update_from(&q1, config.tau)?;
            q2_t.soft_update_from(&q2, config.tau)?;
        }

        let due = |every: u64| every > 0 && step % every == 0;
        let probe_due = probe.is_some() && due(config.probe_every);
        let eval_due = eval_env.is_some() && due(config.eval_every);
        if due(config.log_every) || probe_due || eval_due || step == config.gradient_steps {
            let mut row = acc.take(step);
            record(step, &mut row, &actor, &q1, &live_encoder)?;
            trace.push(row);
        }
    }

    let final_encoder = live_encoder.map(EncoderModel::freeze);
    let hash_after = final_encoder.as_ref().map(EncoderModel::param_hash);
    let (af, cf) = if co {
        let dim = actor_feat.output_dim();
        (
            Featurizer::identity(dim, final_encoder.clone()),
            Featurizer::identity(dim, final_encoder),
        )
    } else {
        (actor_feat, critic_feat)
    };
    Ok(TrainingRun {
        policy: PolicyModel {
            net: actor,
            featurizer: af,
            max_action: 1.0,
        },
        critic: QModel { net: q1, featurizer: cf },
        trace,
        encoder_hash_before: hash_before,
        encoder_hash_after: hash_after,
    })
}

fn check_loss(what: &str, step: u64, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            what: format!("{what} at step {step}"),
            index: step as usize,
        })
    }
}

/// `cql_samples` uniform actions and `cql_samples` noisy policy actions per state.
fn cql_candidates(actor: &Mlp, x: &Matrix, config: &AgentConfig, noise: &Normal<f64>, r: &mut Rng) -> Result<Matrix> {
    let pi = actor.predict_batch(x)?;
    let (n, ad, k) = (x.rows(), pi.cols(), config.cql_samples);
    let mut out = Matrix::zeros(n * 2 * k, ad);
    for i in 0..n {
        for j in 0..2 * k {
            let row = out.row_mut(i * 2 * k + j);
            for (c, v) in row.iter_mut().enumerate() {
                *v = if j < k {
                    r.random_range(-1.0..=1.0)
                } else {
                    let eps = noise.sample(r).clamp(-config.noise_clip, config.noise_clip);
                    (pi.get(i, c) + eps).clamp(-1.0, 1.0)
                };
            }
        }
    }
    Ok(out)
}

struct CoTrain {
    enc_opt: Adam,
    pred_opt: Adam,
    predictor: PredictorModel,
    usable: Vec<bool>,
}

impl CoTrain {
    /// Encoder update from both critic losses plus the weighted BPR loss.
    /// Returns the BPR loss value (NaN when no row has a usable action).
    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        batch: &Batch,
        o1: &Objective,
        o2: &Objective,
        bpr_weight: f64,
        cache: &crate::numerics::BatchCache,
        encoder: &mut EncoderModel,
        dataset: &OfflineDataset,
    ) -> Result<f64> {
        let mut dz = o1.input_grad.clone();
        add_into(&mut dz, &o2.input_grad, 1.0);
        let rows: Vec<usize> = (0..batch.idx.len()).filter(|&r| self.usable[batch.idx[r]]).collect();
        let mut bpr_loss = f64::NAN;
        if !rows.is_empty() {
            let z = gather(&batch.xc, &rows);
            let ts = dataset.transitions();
            let units: Vec<Vec<f64>> = rows
                .iter()
                .map(|&r| {
                    let a = &ts[batch.idx[r]].action;
                    let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                    a.iter().map(|v| v / n).collect()
                })
                .collect();
            let out = bpr_batch(self.predictor.net(), &z, &Matrix::from_rows(&units)?)?;
            bpr_loss = out.loss;
            for (k, &r) in rows.iter().enumerate() {
                for (d, g) in dz.row_mut(r).iter_mut().zip(out.z_grad.row(k)) {
                    *d += bpr_weight * g;
                }
            }
            self.pred_opt.step(self.predictor.net_mut().params_mut(), &out.predictor_grad)?;
        }
        let g = encoder.net().backward_batch(cache, &dz)?;
        self.enc_opt.step(encoder.net_mut()?.params_mut(), &g.params)?;
        Ok(bpr_loss)
    }
}
