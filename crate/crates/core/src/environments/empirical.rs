use crate::numerics::rng;
use crate::{Error, Result};

use super::counterexample::CollapseMap;
use super::dataset::{one_hot, OfflineDataset, Transition};
use super::tabular::{TabularMdp, TabularPolicy};

/// Maximum-likelihood behavior estimate with visit counts.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorEstimate {
    pub policy: TabularPolicy,
    counts: Vec<u64>,
    n_actions: usize,
    /// States never visited in the dataset; their rows are uniform and must
    /// not be trusted by safety checks.
    pub unvisited: Vec<bool>,
}

impl BehaviorEstimate {
    pub fn count(&self, s: usize, a: usize) -> u64 {
        self.counts[s * self.n_actions + a]
    }

    pub fn state_count(&self, s: usize) -> u64 {
        self.counts[s * self.n_actions..(s + 1) * self.n_actions].iter().sum()
    }
}

/// Count-ratio estimate `π_β̂(a|s) = n(s, a) / n(s)`; unvisited states get uniform rows.
pub fn estimate_behavior_tabular(
    dataset: &OfflineDataset,
    n_states: usize,
    n_actions: usize,
) -> Result<BehaviorEstimate> {
    let idx = checked_indices(dataset, n_states, n_actions)?;
    let mut counts = vec![0u64; n_states * n_actions];
    for &(s, a, _) in &idx {
        counts[s * n_actions + a] += 1;
    }
    let mut probs = vec![0.0; n_states * n_actions];
    let mut unvisited = vec![false; n_states];
    for s in 0..n_states {
        let row = &counts[s * n_actions..(s + 1) * n_actions];
        let total: u64 = row.iter().sum();
        for a in 0..n_actions {
            probs[s * n_actions + a] = if total == 0 {
                1.0 / n_actions as f64
            } else {
                row[a] as f64 / total as f64
            };
        }
        unvisited[s] = total == 0;
    }
    Ok(BehaviorEstimate {
        policy: TabularPolicy::new(n_states, n_actions, probs)?,
        counts,
        n_actions,
        unvisited,
    })
}

fn checked_indices(
    dataset: &OfflineDataset,
    n_states: usize,
    n_actions: usize,
) -> Result<Vec<(usize, usize, usize)>> {
    if dataset.state_dim() != n_states || dataset.action_dim() != n_actions {
        return Err(Error::rejected(format!(
            "dataset dimensions ({}, {}) do not match tabular shape ({n_states}, {n_actions})",
            dataset.state_dim(),
            dataset.action_dim()
        )));
    }
    dataset.tabular_indices()
}

/// Counts-based maximum-likelihood model of a tabular dataset.
///
/// Index `n_states` is an extra absorbing "end" state: transitions flagged
/// `done` whose successor is not terminal end there.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalModel {
    n_states: usize,
    n_actions: usize,
    counts: Vec<u64>,
    next_counts: Vec<u64>,
    reward_sums: Vec<f64>,
    start_counts: Vec<u64>,
}

impl EmpiricalModel {
    pub fn from_dataset(dataset: &OfflineDataset, n_states: usize, n_actions: usize) -> Result<Self> {
        let idx = checked_indices(dataset, n_states, n_actions)?;
        // Successors are kept as recorded; the template decides what is terminal.
        Ok(Self::accumulate(dataset, &idx, n_states, n_actions, |_| true))
    }

    pub fn from_dataset_collapsed(
        dataset: &OfflineDataset,
        collapse: &CollapseMap,
        n_actions: usize,
    ) -> Result<Self> {
        let idx = checked_indices(dataset, collapse.n_original(), n_actions)?;
        let mapped: Vec<_> = idx
            .iter()
            .map(|&(s, a, s2)| (collapse.apply(s), a, collapse.apply(s2)))
            .collect();
        let terminal = collapse.terminal();
        Ok(Self::accumulate(dataset, &mapped, collapse.n_collapsed(), n_actions, |z| terminal[z]))
    }

    fn accumulate(
        dataset: &OfflineDataset,
        idx: &[(usize, usize, usize)],
        n_states: usize,
        n_actions: usize,
        is_terminal: impl Fn(usize) -> bool,
    ) -> Self {
        let width = n_states + 1;
        let mut m = Self {
            n_states,
            n_actions,
            counts: vec![0; n_states * n_actions],
            next_counts: vec![0; n_states * n_actions * width],
            reward_sums: vec![0.0; n_states * n_actions],
            start_counts: vec![0; n_states],
        };
        let ts = dataset.transitions();
        for (i, (&(s, a, s2), t)) in idx.iter().zip(ts).enumerate() {
            let starts_episode = i == 0 || ts[i - 1].done || ts[i - 1].next_state != t.state;
            if starts_episode {
                m.start_counts[s] += 1;
            }
            let k = s * n_actions + a;
            m.counts[k] += 1;
            m.reward_sums[k] += t.reward;
            let target = if t.done && !is_terminal(s2) { n_states } else { s2 };
            m.next_counts[k * width + target] += 1;
        }
        m
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn count(&self, s: usize, a: usize) -> u64 {
        self.counts[s * self.n_actions + a]
    }

    pub fn mean_reward(&self, s: usize, a: usize) -> Option<f64> {
        let c = self.count(s, a);
        (c > 0).then(|| self.reward_sums[s * self.n_actions + a] / c as f64)
    }

    /// Empirical distribution of episode start states.
    pub fn episode_start_distribution(&self) -> Result<Vec<f64>> {
        let total: u64 = self.start_counts.iter().sum();
        if total == 0 {
            return Err(Error::UndefinedModel("dataset has no episode starts".into()));
        }
        Ok(self.start_counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    fn next_row(&self, s: usize, a: usize) -> Vec<f64> {
        let width = self.n_states + 1;
        let k = s * self.n_actions + a;
        let c = self.counts[k] as f64;
        self.next_counts[k * width..(k + 1) * width]
            .iter()
            .map(|&n| n as f64 / c)
            .collect()
    }

    /// Empirical MDP on the template's state space, reusing its initial
    /// distribution, discount and terminal flags. Unvisited non-terminal
    /// pairs become zero-reward self-loops (requires γ < 1 to evaluate
    /// policies that use them).
    pub fn to_mdp(&self, template: &TabularMdp) -> Result<TabularMdp> {
        let (n, na) = (self.n_states, self.n_actions);
        if template.n_states() != n || template.n_actions() != na {
            return Err(Error::rejected("template mdp shape differs from empirical model"));
        }
        let mut transition = vec![0.0; n * na * n];
        let mut reward = vec![0.0; n * na];
        for s in 0..n {
            for a in 0..na {
                let row = &mut transition[(s * na + a) * n..][..n];
                if template.is_terminal(s) || self.count(s, a) == 0 {
                    row[s] = 1.0;
                    continue;
                }
                let next = self.next_row(s, a);
                row.copy_from_slice(&next[..n]);
                if next[n] > 0.0 {
                    return Err(Error::UndefinedModel(format!(
                        "transition from ({s}, {a}) terminates at a state the template treats as non-terminal"
                    )));
                }
                reward[s * na + a] = self.mean_reward(s, a).unwrap_or(0.0);
            }
        }
        let r_max = template.r_max();
        TabularMdp::new(
            n,
            na,
            transition,
            reward,
            template.initial().to_vec(),
            template.gamma(),
            template.terminal_flags().to_vec(),
        )?
        .with_r_max(r_max)
    }

    /// Episodic empirical MDP with the extra end state appended as terminal.
    /// Unseen pairs jump straight to the end state with zero reward.
    pub fn to_episodic_mdp(&self, terminal: &[bool], initial: Vec<f64>, gamma: f64) -> Result<TabularMdp> {
        let (n, na) = (self.n_states, self.n_actions);
        let w = n + 1;
        let mut transition = vec![0.0; w * na * w];
        let mut reward = vec![0.0; w * na];
        for s in 0..w {
            for a in 0..na {
                let row = &mut transition[(s * na + a) * w..][..w];
                if s == n || terminal[s] {
                    row[s] = 1.0;
                } else if self.count(s, a) == 0 {
                    row[n] = 1.0;
                } else {
                    row.copy_from_slice(&self.next_row(s, a));
                    reward[s * na + a] = self.mean_reward(s, a).unwrap_or(0.0);
                }
            }
        }
        let mut init = initial;
        init.push(0.0);
        let mut term = terminal.to_vec();
        term.push(true);
        TabularMdp::new(w, na, transition, reward, init, gamma, term)
    }

    /// Extend a policy over the model's states with a row for the end state.
    pub fn pad_policy(&self, policy: &TabularPolicy) -> Result<TabularPolicy> {
        let mut rows: Vec<Vec<f64>> = (0..policy.n_states()).map(|s| policy.row(s).to_vec()).collect();
        rows.push(vec![1.0 / policy.n_actions() as f64; policy.n_actions()]);
        TabularPolicy::from_rows(&rows)
    }
}

/// Roll out `behavior` in `mdp` until exactly `n` transitions are collected.
/// Episodes restart at terminal states or after `horizon` steps; states and
/// actions are one-hot encoded.
pub fn generate_tabular_dataset(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    n: usize,
    horizon: usize,
    seed: u64,
    behavior_tag: &str,
) -> Result<OfflineDataset> {
    if n == 0 || horizon == 0 {
        return Err(Error::rejected("dataset size and horizon must be positive"));
    }
    if (0..mdp.n_states()).all(|s| mdp.is_terminal(s)) {
        return Err(Error::rejected("every state is terminal; nothing to roll out"));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut s = mdp.sample_initial(&mut r);
        for _ in 0..horizon {
            if mdp.is_terminal(s) || out.len() == n {
                break;
            }
            let a = behavior.sample(s, &mut r);
            let (s2, rew) = mdp.step(s, a, &mut r);
            out.push(Transition {
                state: one_hot(s, ns),
                action: one_hot(a, na),
                reward: rew,
                next_state: one_hot(s2, ns),
                done: mdp.is_terminal(s2),
            });
            s = s2;
        }
        if out.is_empty() {
            return Err(Error::rejected("initial distribution only reaches terminal states"));
        }
    }
    OfflineDataset::new(ns, na, out, behavior_tag)
}
