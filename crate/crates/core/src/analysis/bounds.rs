use serde::{Deserialize, Serialize};

use crate::agents::{tabular_cql_lower_bound, AgentConfig, PolicyModel, SpibbResult, TabularCqlResult};
use crate::bpr::{usable_samples, EncoderModel, PredictorModel, DEFAULT_EPS_STABILITY};
use crate::environments::{
    estimate_behavior_tabular, evaluate_policy_exact, CollapseMap, EmpiricalModel, OfflineDataset, TabularMdp,
    TabularPolicy,
};
use crate::numerics::{l2_normalize_with_grad, Matrix};
use crate::{Error, Result};

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean row-wise Euclidean distance `(1/n) Σ ‖pᵢ − aᵢ‖₂`.
pub fn mean_l2_error(predictions: &Matrix, actions: &Matrix) -> Result<f64> {
    if predictions.rows() != actions.rows() || predictions.cols() != actions.cols() || predictions.rows() == 0 {
        return Err(Error::rejected("prediction and action matrices must share a non-empty shape"));
    }
    let n = predictions.rows();
    Ok((0..n).map(|r| l2(predictions.row(r), actions.row(r))).sum::<f64>() / n as f64)
}

/// Behavior-error term over dataset states: `(1/n) Σ ‖π_β(·|sᵢ) − π̂(·|φ(sᵢ))‖₂`.
///
/// `predicted` is indexed by collapsed states when `collapse` is given, by
/// original states otherwise.
pub fn eps_beta_tabular(
    dataset: &OfflineDataset,
    behavior: Option<&TabularPolicy>,
    predicted: &TabularPolicy,
    collapse: Option<&CollapseMap>,
) -> Result<f64> {
    let behavior = behavior.ok_or_else(|| {
        Error::UnavailableOracle("tabular behavior error needs the ground-truth behavior policy".into())
    })?;
    if dataset.is_empty() {
        return Err(Error::rejected("dataset is empty"));
    }
    let idx = dataset.tabular_indices()?;
    let mut total = 0.0;
    for &(s, _, _) in &idx {
        let z = collapse.map_or(s, |c| c.apply(s));
        if s >= behavior.n_states() || z >= predicted.n_states() {
            return Err(Error::rejected(format!("state {s} outside the policy tables")));
        }
        total += l2(behavior.row(s), predicted.row(z));
    }
    Ok(total / idx.len() as f64)
}

/// Continuous behavior error of the BPR predictor on top of the encoder,
/// with dataset actions standing in for behavior samples:
/// `(1/n) Σ ‖f(φ(sᵢ)) − aᵢ/‖aᵢ‖‖₂`, where `f` is the predictor followed by its
/// projection onto the unit sphere. Samples with `‖aᵢ‖ < min_action_norm`
/// are left out, as in pretraining.
pub fn eps_beta_continuous(
    dataset: &OfflineDataset,
    encoder: &EncoderModel,
    predictor: &PredictorModel,
    min_action_norm: f64,
) -> Result<f64> {
    let keep = usable_samples(dataset, min_action_norm);
    if keep.is_empty() {
        return Err(Error::UnusableDataset(format!("no action reaches norm {min_action_norm}")));
    }
    let z = encoder.encode_batch(&dataset.state_matrix())?;
    let y = predictor.predict_batch(&z)?;
    let actions = dataset.action_matrix();
    let total: f64 = keep
        .iter()
        .map(|&i| {
            let (unit, _) = l2_normalize_with_grad(y.row(i), DEFAULT_EPS_STABILITY);
            let a = actions.row(i);
            let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let target: Vec<f64> = a.iter().map(|v| v / n).collect();
            l2(&unit, &target)
        })
        .sum();
    Ok(total / keep.len() as f64)
}

/// Same term for a trained policy network.
pub fn eps_beta_policy(dataset: &OfflineDataset, policy: &PolicyModel) -> Result<f64> {
    mean_l2_error(&policy.actions(&dataset.state_matrix())?, &dataset.action_matrix())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvdBound {
    /// `2 R_max / (1−γ)² · E[D_TV]`.
    pub bound: f64,
    /// Exact `|J(π_a) − J(π_b)|`.
    pub gap: f64,
    /// Larger of the two occupancy-weighted mean total-variation distances.
    pub expected_tv: f64,
    pub holds: bool,
}

/// Total-variation suboptimality bound between two policies, next to the
/// exact gap.
///
/// The expectation runs over a normalized discounted state occupancy. Either
/// policy's occupancy yields a valid bound (performance difference lemma in
/// each direction), so the larger of the two is used. Terminal states carry
/// no future reward and contribute zero distance.
pub fn tvd_suboptimality_bound(mdp: &TabularMdp, pi_a: &TabularPolicy, pi_b: &TabularPolicy) -> Result<TvdBound> {
    let gamma = mdp.gamma();
    if gamma >= 1.0 {
        return Err(Error::UnsupportedDiscount(gamma));
    }
    let tv: Vec<f64> = pi_a
        .tv_distance(pi_b)
        .into_iter()
        .enumerate()
        .map(|(s, d)| if mdp.is_terminal(s) { 0.0 } else { d })
        .collect();
    let weighted = |pi: &TabularPolicy| -> Result<f64> {
        Ok(mdp.occupancy(pi)?.iter().zip(&tv).map(|(d, t)| d * t).sum())
    };
    let expected_tv = weighted(pi_a)?.max(weighted(pi_b)?);
    let bound = 2.0 * mdp.r_max() / (1.0 - gamma).powi(2) * expected_tv;
    let gap = (evaluate_policy_exact(mdp, pi_a)?.j - evaluate_policy_exact(mdp, pi_b)?.j).abs();
    Ok(TvdBound {
        bound,
        gap,
        expected_tv,
        holds: bound >= gap,
    })
}

/// `K = R_max / (1 − γ)`.
pub fn horizon_scale(mdp: &TabularMdp) -> Result<f64> {
    if mdp.gamma() >= 1.0 {
        return Err(Error::UnsupportedDiscount(mdp.gamma()));
    }
    Ok(mdp.r_max() / (1.0 - mdp.gamma()))
}

/// Every term of a safe-improvement check, computed exactly on a finite MDP.
///
/// Slacks are left side minus right side, so a non-negative slack means the
/// inequality held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub eps_beta_empirical: f64,
    #[serde(rename = "J_behavior")]
    pub j_behavior: f64,
    #[serde(rename = "J_behavior_hat")]
    pub j_behavior_hat: f64,
    #[serde(rename = "J_output")]
    pub j_output: f64,
    /// `J(π_β) − J(π_β̂)`.
    pub eps_beta: f64,
    /// `Ĵ(π_out) − Ĵ(π_β̂)` on the empirical MDP.
    pub delta_hat: f64,
    /// `J_⊥(π_out) − J_⊥(π_β̂)`.
    pub delta_lower: Option<f64>,
    /// Realized `max_π (Δ̂_π − Δ_π)` over the evaluated policies.
    pub eps_delta: Option<f64>,
    /// `J(π_β̂) − J_⊥(π_β̂)`.
    pub eps_bottom: Option<f64>,
    /// TVD bound between `π_β̂` and `π_β`.
    pub tvd_bound: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub theorem2_slack: Option<f64>,
    pub theorem3_slack: Option<f64>,
    /// Whether `J_⊥(π_out) ≤ J(π_out)` held.
    pub precondition_held: Option<bool>,
    /// High-probability bound on `eps_beta` with the uncomputable factors left symbolic.
    pub eps_beta_bound: String,
}

fn eps_beta_bound_text(k: f64, empirical: f64, n: usize) -> String {
    format!("C * {k:.6} * {empirical:.6} + 2*sqrt(2) * {k:.6} * Rad(Phi) + {k:.6} * sqrt(2*ln(1/delta) / {n})")
}

struct Common {
    behavior_hat: TabularPolicy,
    j_behavior: f64,
    j_behavior_hat: f64,
    j_output: f64,
    eps_beta_empirical: f64,
    tvd_bound: f64,
    k: f64,
}

fn common_terms(
    mdp: &TabularMdp,
    dataset: &OfflineDataset,
    behavior_hat: TabularPolicy,
    output: &TabularPolicy,
    true_behavior: &TabularPolicy,
) -> Result<Common> {
    let j = |pi: &TabularPolicy| evaluate_policy_exact(mdp, pi).map(|e| e.j);
    Ok(Common {
        j_behavior: j(true_behavior)?,
        j_behavior_hat: j(&behavior_hat)?,
        j_output: j(output)?,
        eps_beta_empirical: eps_beta_tabular(dataset, Some(true_behavior), &behavior_hat, None)?,
        tvd_bound: tvd_suboptimality_bound(mdp, &behavior_hat, true_behavior)?.bound,
        k: horizon_scale(mdp)?,
        behavior_hat,
    })
}

/// Check `J(π_out) ≥ J(π_β) + Δ̂ − ε_Δ − ε_β` for a SPIBB run.
///
/// `ε_Δ` is the largest overestimate of improvement over the policy-iteration
/// iterates and the returned policy.
pub fn verify_theorem2(
    mdp: &TabularMdp,
    dataset: &OfflineDataset,
    spibb: &SpibbResult,
    true_behavior: &TabularPolicy,
) -> Result<BoundReport> {
    let c = common_terms(mdp, dataset, spibb.behavior.policy.clone(), &spibb.policy, true_behavior)?;
    let j_hat = |pi: &TabularPolicy| evaluate_policy_exact(&spibb.empirical, pi).map(|e| e.j);
    let j_hat_base = j_hat(&c.behavior_hat)?;
    let delta_hat = j_hat(&spibb.policy)? - j_hat_base;
    let mut eps_delta = f64::NEG_INFINITY;
    for pi in spibb.iterates.iter().chain(std::iter::once(&spibb.policy)) {
        let est = j_hat(pi)? - j_hat_base;
        let real = evaluate_policy_exact(mdp, pi)?.j - c.j_behavior_hat;
        eps_delta = eps_delta.max(est - real);
    }
    let eps_beta = c.j_behavior - c.j_behavior_hat;
    let slack = c.j_output - (c.j_behavior + delta_hat - eps_delta - eps_beta);
    Ok(BoundReport {
        eps_beta_bound: eps_beta_bound_text(c.k, c.eps_beta_empirical, dataset.len()),
        eps_beta_empirical: c.eps_beta_empirical,
        j_behavior: c.j_behavior,
        j_behavior_hat: c.j_behavior_hat,
        j_output: c.j_output,
        eps_beta,
        delta_hat,
        delta_lower: None,
        eps_delta: Some(eps_delta),
        eps_bottom: None,
        tvd_bound: c.tvd_bound,
        k: c.k,
        theorem2_slack: Some(slack),
        theorem3_slack: None,
        precondition_held: None,
    })
}

/// Check `J(π_out) ≥ J(π_β) + Δ^⊥ − ε_⊥ − ε_β` for a tabular CQL run, with
/// `J_⊥` from conservative policy evaluation under `config`.
pub fn verify_theorem3(
    mdp: &TabularMdp,
    dataset: &OfflineDataset,
    cql: &TabularCqlResult,
    true_behavior: &TabularPolicy,
    config: &AgentConfig,
) -> Result<BoundReport> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let behavior_hat = estimate_behavior_tabular(dataset, ns, na)?.policy;
    let c = common_terms(mdp, dataset, behavior_hat, &cql.policy, true_behavior)?;
    let lower_base = tabular_cql_lower_bound(dataset, mdp, &c.behavior_hat, config)?;
    let lower_out = tabular_cql_lower_bound(dataset, mdp, &cql.policy, config)?;
    let empirical = EmpiricalModel::from_dataset(dataset, ns, na)?.to_mdp(mdp)?;
    let delta_hat = evaluate_policy_exact(&empirical, &cql.policy)?.j - evaluate_policy_exact(&empirical, &c.behavior_hat)?.j;

    let eps_bottom = c.j_behavior_hat - lower_base;
    let delta_lower = lower_out - lower_base;
    let eps_beta = c.j_behavior - c.j_behavior_hat;
    let slack = c.j_output - (c.j_behavior + delta_lower - eps_bottom - eps_beta);
    Ok(BoundReport {
        eps_beta_bound: eps_beta_bound_text(c.k, c.eps_beta_empirical, dataset.len()),
        eps_beta_empirical: c.eps_beta_empirical,
        j_behavior: c.j_behavior,
        j_behavior_hat: c.j_behavior_hat,
        j_output: c.j_output,
        eps_beta,
        delta_hat,
        delta_lower: Some(delta_lower),
        eps_delta: None,
        eps_bottom: Some(eps_bottom),
        tvd_bound: c.tvd_bound,
        k: c.k,
        theorem2_slack: None,
        theorem3_slack: Some(slack),
        precondition_held: Some(lower_out <= c.j_output),
    })
}
