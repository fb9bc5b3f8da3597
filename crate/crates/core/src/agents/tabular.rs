use crate::environments::{
    estimate_behavior_tabular, evaluate_policy_exact, BehaviorEstimate, EmpiricalModel, OfflineDataset,
    TabularMdp, TabularPolicy,
};
use crate::{Error, Result};

use super::config::AgentConfig;

/// Upper bound on SPIBB policy-iteration rounds.
const MAX_POLICY_ITERATIONS: usize = 1000;

#[derive(Debug, Clone)]
pub struct SpibbResult {
    pub policy: TabularPolicy,
    pub behavior: BehaviorEstimate,
    /// Maximum-likelihood MDP used for optimization.
    pub empirical: TabularMdp,
    /// Every policy visited by policy iteration, starting with π_β̂.
    pub iterates: Vec<TabularPolicy>,
    /// Ĵ(π_out) − Ĵ(π_β̂) on the empirical MDP.
    pub delta_hat: f64,
    /// Whether the optimizer's result was replaced by π_β̂.
    pub fell_back: bool,
}

/// Safe policy improvement with baseline bootstrapping: policy iteration on
/// the empirical MDP over policies that copy π_β̂ on pairs seen fewer than
/// `spibb_threshold` times and move the remaining mass greedily.
pub fn train_spibb_tabular(dataset: &OfflineDataset, template: &TabularMdp, config: &AgentConfig) -> Result<SpibbResult> {
    let (ns, na) = (template.n_states(), template.n_actions());
    let behavior = estimate_behavior_tabular(dataset, ns, na)?;
    let empirical = EmpiricalModel::from_dataset(dataset, ns, na)?.to_mdp(template)?;
    let base = behavior.policy.clone();
    let j_base = evaluate_policy_exact(&empirical, &base)?.j;
    let n_min = config.spibb_threshold;

    let mut pi = base.clone();
    let mut iterates = vec![pi.clone()];
    for _ in 0..MAX_POLICY_ITERATIONS {
        let values = evaluate_policy_exact(&empirical, &pi)?.values;
        let q = empirical.q_values(&values);
        let mut next = base.clone();
        for s in 0..ns {
            if template.is_terminal(s) {
                continue;
            }
            let free: Vec<usize> = (0..na).filter(|&a| behavior.count(s, a) >= n_min).collect();
            let Some(&first) = free.first() else { continue };
            let best = free.iter().copied().fold(first, |b, a| if q[s * na + a] > q[s * na + b] { a } else { b });
            let bootstrapped: f64 = (0..na)
                .filter(|&a| behavior.count(s, a) < n_min)
                .map(|a| base.prob(s, a))
                .sum();
            let row = next.row_mut(s);
            for &a in &free {
                row[a] = 0.0;
            }
            row[best] = 1.0 - bootstrapped;
        }
        if next == pi {
            break;
        }
        pi = next;
        iterates.push(pi.clone());
    }
    let j_out = evaluate_policy_exact(&empirical, &pi)?.j;
    let (policy, delta_hat, fell_back) = if j_out - j_base < 0.0 {
        (base, 0.0, true)
    } else {
        (pi, j_out - j_base, false)
    };
    Ok(SpibbResult {
        policy,
        behavior,
        empirical,
        iterates,
        delta_hat,
        fell_back,
    })
}

/// Per-pair dataset statistics used by fitted Q iteration.
struct PairStats {
    count: Vec<f64>,
    reward_mean: Vec<f64>,
    /// `(pair, next_state, weight)` for transitions that did not terminate,
    /// weight = 1 / count(pair).
    next: Vec<(usize, usize, f64)>,
}

fn pair_stats(dataset: &OfflineDataset, ns: usize, na: usize) -> Result<PairStats> {
    if dataset.state_dim() != ns || dataset.action_dim() != na {
        return Err(Error::rejected("dataset shape does not match the tabular template"));
    }
    let idx = dataset.tabular_indices()?;
    let mut count = vec![0.0; ns * na];
    let mut reward_sum = vec![0.0; ns * na];
    for (&(s, a, _), t) in idx.iter().zip(dataset.transitions()) {
        count[s * na + a] += 1.0;
        reward_sum[s * na + a] += t.reward;
    }
    let reward_mean = reward_sum.iter().zip(&count).map(|(r, c)| if *c > 0.0 { r / c } else { 0.0 }).collect();
    let next = idx
        .iter()
        .zip(dataset.transitions())
        .filter(|(_, t)| !t.done)
        .map(|(&(s, a, s2), _)| (s * na + a, s2, 1.0 / count[s * na + a]))
        .collect();
    Ok(PairStats {
        count,
        reward_mean,
        next,
    })
}

/// How next-state values are formed in the backup.
enum Backup<'a> {
    Greedy,
    Policy(&'a TabularPolicy),
}

/// Fitted Q iteration with the conservative penalty. Each sweep forms
/// regression targets `ȳ(s,a)` from the current Q, then takes gradient steps
/// per state on
/// `Σ_a μ(a|s)·½(Q(s,a) − ȳ(s,a))² + α·(logsumexp_a Q(s,·) − Σ_a μ(a|s) Q(s,a))`
/// where μ is the empirical action distribution at s. Evaluating a fixed
/// policy π swaps the log-sum-exp for `Σ_a π(a|s) Q(s,a)`, which makes
/// `Σ_a π Q` a lower bound on the empirical value of π.
fn fitted_q(stats: &PairStats, template: &TabularMdp, alpha: f64, backup: Backup, config: &AgentConfig) -> Vec<f64> {
    let (ns, na) = (template.n_states(), template.n_actions());
    let gamma = template.gamma();
    let lr = 1.0 / (1.0 + alpha);
    let mut q = vec![0.0; ns * na];
    let mut target = vec![0.0; ns * na];
    for _ in 0..config.tabular_iterations {
        let v: Vec<f64> = (0..ns)
            .map(|s| {
                if template.is_terminal(s) {
                    return 0.0;
                }
                let row = &q[s * na..(s + 1) * na];
                match &backup {
                    Backup::Greedy => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    Backup::Policy(pi) => row.iter().zip(pi.row(s)).map(|(q, p)| q * p).sum(),
                }
            })
            .collect();
        target.copy_from_slice(&stats.reward_mean);
        for &(k, s2, w) in &stats.next {
            target[k] += gamma * w * v[s2];
        }
        for s in 0..ns {
            let n_s: f64 = stats.count[s * na..(s + 1) * na].iter().sum();
            if n_s == 0.0 || template.is_terminal(s) {
                continue;
            }
            let mu: Vec<f64> = stats.count[s * na..(s + 1) * na].iter().map(|c| c / n_s).collect();
            let row = &mut q[s * na..(s + 1) * na];
            for _ in 0..config.tabular_inner_steps {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
                let grad: Vec<f64> = (0..na)
                    .map(|a| {
                        let push = match &backup {
                            Backup::Greedy => (row[a] - m).exp() / z,
                            Backup::Policy(pi) => pi.prob(s, a),
                        };
                        mu[a] * (row[a] - target[s * na + a]) + alpha * (push - mu[a])
                    })
                    .collect();
                row.iter_mut().zip(&grad).for_each(|(v, g)| *v -= lr * g);
            }
        }
    }
    q
}

#[derive(Debug, Clone)]
pub struct TabularCqlResult {
    /// Conservative Q table `[s][a]` from the greedy backup.
    pub q: Vec<f64>,
    /// Greedy (exact argmax) policy; terminal and unvisited states act uniformly.
    pub policy: TabularPolicy,
}

/// Tabular conservative Q-learning with an exact log-sum-exp over actions.
pub fn train_cql_tabular(dataset: &OfflineDataset, template: &TabularMdp, config: &AgentConfig) -> Result<TabularCqlResult> {
    let (ns, na) = (template.n_states(), template.n_actions());
    let stats = pair_stats(dataset, ns, na)?;
    let q = fitted_q(&stats, template, config.cql_alpha, Backup::Greedy, config);
    if let Some(i) = q.iter().position(|v| !v.is_finite()) {
        return Err(Error::divergence("tabular cql q-table", i));
    }
    let mut rows = Vec::with_capacity(ns);
    for s in 0..ns {
        let visited = stats.count[s * na..(s + 1) * na].iter().any(|&c| c > 0.0);
        if template.is_terminal(s) || !visited {
            rows.push(vec![1.0 / na as f64; na]);
        } else {
            let row = &q[s * na..(s + 1) * na];
            let best = (0..na).fold(0, |b, a| if row[a] > row[b] { a } else { b });
            let mut r = vec![0.0; na];
            r[best] = 1.0;
            rows.push(r);
        }
    }
    Ok(TabularCqlResult {
        q,
        policy: TabularPolicy::from_rows(&rows)?,
    })
}

/// Conservative Q table of a fixed policy (evaluation backup).
pub fn tabular_cql_evaluate(
    dataset: &OfflineDataset,
    template: &TabularMdp,
    policy: &TabularPolicy,
    config: &AgentConfig,
) -> Result<Vec<f64>> {
    let stats = pair_stats(dataset, template.n_states(), template.n_actions())?;
    let q = fitted_q(&stats, template, config.cql_alpha, Backup::Policy(policy), config);
    if let Some(i) = q.iter().position(|v| !v.is_finite()) {
        return Err(Error::divergence("tabular cql q-table", i));
    }
    Ok(q)
}

/// Pessimistic value `J_⊥(π) = Σ_s ρ(s) Σ_a π(a|s) Q_⊥^π(s, a)`.
pub fn tabular_cql_lower_bound(
    dataset: &OfflineDataset,
    template: &TabularMdp,
    policy: &TabularPolicy,
    config: &AgentConfig,
) -> Result<f64> {
    let q = tabular_cql_evaluate(dataset, template, policy, config)?;
    let na = template.n_actions();
    Ok(template
        .initial()
        .iter()
        .enumerate()
        .map(|(s, rho)| rho * policy.row(s).iter().zip(&q[s * na..(s + 1) * na]).map(|(p, q)| p * q).sum::<f64>())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{generate_tabular_dataset, gridworld, gridworld_behavior, GridworldConfig};

    fn grid_data(seed: u64, n: usize) -> (TabularMdp, OfflineDataset) {
        let mdp = gridworld(&GridworldConfig::default()).unwrap();
        let beh = gridworld_behavior(&mdp, 0.5).unwrap();
        let d = generate_tabular_dataset(&mdp, &beh, n, 50, seed, "eps-greedy:0.5").unwrap();
        (mdp, d)
    }

    #[test]
    fn infinite_threshold_returns_behavior() {
        let (mdp, d) = grid_data(0, 500);
        let cfg = AgentConfig {
            spibb_threshold: u64::MAX,
            ..AgentConfig::default()
        };
        let out = train_spibb_tabular(&d, &mdp, &cfg).unwrap();
        assert_eq!(out.policy, out.behavior.policy);
        assert_eq!(out.delta_hat, 0.0);
    }

    #[test]
    fn low_count_pairs_copy_behavior_and_improve() {
        let (mdp, d) = grid_data(1, 1500);
        let out = train_spibb_tabular(&d, &mdp, &AgentConfig::default()).unwrap();
        assert!(out.delta_hat >= 0.0);
        for s in 0..mdp.n_states() {
            for a in 0..4 {
                if out.behavior.count(s, a) < 10 {
                    assert_eq!(out.policy.prob(s, a), out.behavior.policy.prob(s, a));
                }
            }
        }
    }
}
