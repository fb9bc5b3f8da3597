use crate::{Error, Result};

use super::dataset::{one_hot, OfflineDataset, Transition};
use super::empirical::EmpiricalModel;
use super::tabular::{evaluate_policy_exact, TabularMdp, TabularPolicy};

pub const S0: usize = 0;
pub const S1: usize = 1;
/// Terminal state closing every trajectory.
pub const SF: usize = 2;

/// Maps original tabular states onto collapsed (embedded) states.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseMap {
    map: Vec<usize>,
    terminal: Vec<bool>,
}

impl CollapseMap {
    /// `map[s]` is the collapsed index of original state `s`;
    /// `terminal[z]` marks absorbing collapsed states.
    pub fn new(map: Vec<usize>, terminal: Vec<bool>) -> Result<Self> {
        if let Some(&bad) = map.iter().find(|&&z| z >= terminal.len()) {
            return Err(Error::rejected(format!("collapse target {bad} out of range")));
        }
        Ok(Self { map, terminal })
    }

    pub fn identity(terminal: &[bool]) -> Self {
        Self {
            map: (0..terminal.len()).collect(),
            terminal: terminal.to_vec(),
        }
    }

    pub fn n_original(&self) -> usize {
        self.map.len()
    }

    pub fn n_collapsed(&self) -> usize {
        self.terminal.len()
    }

    pub fn apply(&self, s: usize) -> usize {
        self.map[s]
    }

    pub fn terminal(&self) -> &[bool] {
        &self.terminal
    }
}

/// The two-state episodic instance on which a state-collapsing representation
/// makes greedy value optimization pick a policy worse than the behavior.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub mdp: TabularMdp,
    pub dataset: OfflineDataset,
    /// Collapses `s0` and `s1` onto a single embedding `z` (index 0); the
    /// terminal state maps to index 1.
    pub collapse: CollapseMap,
}

pub fn build_counterexample() -> Counterexample {
    build_counterexample_with_reward(1.0)
}

/// Same instance with the single rewarding transition `(s1, a0)` paying `reward`.
/// Used to exercise audit failure paths.
pub fn build_counterexample_with_reward(reward: f64) -> Counterexample {
    let (n_s, n_a) = (3, 2);
    // Deterministic dynamics: s0 -a0-> sf, s0 -a1-> s1, s1 -a·-> sf.
    let mut transition = vec![0.0; n_s * n_a * n_s];
    let mut set = |s: usize, a: usize, t: usize| transition[(s * n_a + a) * n_s + t] = 1.0;
    set(S0, 0, SF);
    set(S0, 1, S1);
    set(S1, 0, SF);
    set(S1, 1, SF);
    set(SF, 0, SF);
    set(SF, 1, SF);
    let mut r = vec![0.0; n_s * n_a];
    r[S1 * n_a] = reward;
    let mdp = TabularMdp::new(n_s, n_a, transition, r, vec![1.0, 0.0, 0.0], 1.0, vec![false, false, true])
        .expect("counterexample tables are valid");

    let step = |s: usize, a: usize, s2: usize, rew: f64| Transition {
        state: one_hot(s, n_s),
        action: one_hot(a, n_a),
        reward: rew,
        next_state: one_hot(s2, n_s),
        done: s2 == SF,
    };
    let transitions = vec![
        step(S0, 0, SF, 0.0),
        step(S0, 0, SF, 0.0),
        step(S0, 1, S1, 0.0),
        step(S1, 0, SF, reward),
        step(S0, 1, S1, 0.0),
        step(S1, 1, SF, 0.0),
    ];
    let dataset = OfflineDataset::new(n_s, n_a, transitions, "counterexample:four-trajectories")
        .expect("counterexample transitions are well formed");
    let collapse = CollapseMap::new(vec![0, 0, 1], vec![false, true]).expect("valid collapse");
    Counterexample {
        mdp,
        dataset,
        collapse,
    }
}

/// Value of a policy over collapsed states on the maximum-likelihood model
/// estimated from `dataset` after collapsing its states.
///
/// The initial distribution is the empirical distribution of episode starts.
/// With `gamma = 1` the value is the solution of the episodic recursion.
pub fn evaluate_on_empirical_collapsed_model(
    dataset: &OfflineDataset,
    collapse: &CollapseMap,
    policy: &TabularPolicy,
    gamma: f64,
) -> Result<f64> {
    let model = EmpiricalModel::from_dataset_collapsed(dataset, collapse, policy.n_actions())?;
    if policy.n_states() != collapse.n_collapsed() {
        return Err(Error::rejected(format!(
            "policy covers {} states, collapse map has {}",
            policy.n_states(),
            collapse.n_collapsed()
        )));
    }
    for z in 0..collapse.n_collapsed() {
        if collapse.terminal()[z] {
            continue;
        }
        for a in 0..policy.n_actions() {
            if policy.prob(z, a) > 0.0 && model.count(z, a) == 0 {
                return Err(Error::UndefinedModel(format!(
                    "policy puts mass {} on action {a} never taken from collapsed state {z}",
                    policy.prob(z, a)
                )));
            }
        }
    }
    let initial = model.episode_start_distribution()?;
    let mdp = model.to_episodic_mdp(collapse.terminal(), initial, gamma)?;
    let padded = model.pad_policy(policy)?;
    Ok(evaluate_policy_exact(&mdp, &padded)?.j)
}
