use crate::{Error, Result};

use super::tabular::{TabularMdp, TabularPolicy};

/// Square gridworld with slippery moves, one rewarding goal and one pit.
#[derive(Debug, Clone, PartialEq)]
pub struct GridworldConfig {
    pub size: usize,
    /// Probability that the move goes in one of the other three directions.
    pub slip: f64,
    pub gamma: f64,
    pub start: (usize, usize),
    pub goal: (usize, usize),
    pub pit: Option<(usize, usize)>,
}

impl Default for GridworldConfig {
    fn default() -> Self {
        Self {
            size: 5,
            slip: 0.1,
            gamma: 0.95,
            start: (0, 0),
            goal: (4, 4),
            pit: Some((2, 2)),
        }
    }
}

/// Action order: up, right, down, left.
const MOVES: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

impl GridworldConfig {
    pub fn n_states(&self) -> usize {
        self.size * self.size
    }

    pub fn index(&self, (row, col): (usize, usize)) -> usize {
        row * self.size + col
    }

    fn target(&self, s: usize, dir: usize) -> usize {
        let (row, col) = ((s / self.size) as isize, (s % self.size) as isize);
        let (dr, dc) = MOVES[dir];
        let (nr, nc) = (row + dr, col + dc);
        if nr < 0 || nc < 0 || nr >= self.size as isize || nc >= self.size as isize {
            s
        } else {
            nr as usize * self.size + nc as usize
        }
    }
}

/// Build the gridworld MDP. Entering the goal pays +1 and entering the pit −1;
/// both are terminal. Walls keep the agent in place.
pub fn gridworld(config: &GridworldConfig) -> Result<TabularMdp> {
    if config.size < 2 || !(0.0..=1.0).contains(&config.slip) {
        return Err(Error::rejected("gridworld needs size ≥ 2 and slip in [0, 1]"));
    }
    let in_grid = |(r, c): (usize, usize)| r < config.size && c < config.size;
    if !in_grid(config.start) || !in_grid(config.goal) || config.pit.is_some_and(|p| !in_grid(p)) {
        return Err(Error::rejected("gridworld cell outside the grid"));
    }
    let n = config.n_states();
    let goal = config.index(config.goal);
    let pit = config.pit.map(|p| config.index(p));
    let start = config.index(config.start);
    if start == goal || Some(start) == pit || Some(goal) == pit {
        return Err(Error::rejected("start, goal and pit must be distinct cells"));
    }
    let terminal: Vec<bool> = (0..n).map(|s| s == goal || Some(s) == pit).collect();
    let cell_reward = |s: usize| {
        if s == goal {
            1.0
        } else if Some(s) == pit {
            -1.0
        } else {
            0.0
        }
    };
    let mut transition = vec![0.0; n * 4 * n];
    let mut reward = vec![0.0; n * 4];
    for s in 0..n {
        for a in 0..4 {
            let row = &mut transition[(s * 4 + a) * n..][..n];
            if terminal[s] {
                row[s] = 1.0;
                continue;
            }
            for dir in 0..4 {
                let p = if dir == a { 1.0 - config.slip } else { config.slip / 3.0 };
                row[config.target(s, dir)] += p;
            }
            reward[s * 4 + a] = row.iter().enumerate().map(|(t, p)| p * cell_reward(t)).sum();
        }
    }
    let mut initial = vec![0.0; n];
    initial[start] = 1.0;
    TabularMdp::new(n, 4, transition, reward, initial, config.gamma, terminal)?.with_r_max(1.0)
}

/// ε-greedy mixture of the optimal policy and the uniform policy.
pub fn gridworld_behavior(mdp: &TabularMdp, epsilon: f64) -> Result<TabularPolicy> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::rejected(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let (_, optimal) = mdp.optimal_policy()?;
    let n_actions = mdp.n_actions();
    let mut probs = Vec::with_capacity(mdp.n_states() * n_actions);
    for s in 0..mdp.n_states() {
        for a in 0..n_actions {
            probs.push((1.0 - epsilon) * optimal.prob(s, a) + epsilon / n_actions as f64);
        }
    }
    renormalize_rows(&mut probs, n_actions);
    TabularPolicy::new(mdp.n_states(), n_actions, probs)
}

/// Absorb rounding so rows sum to one within the policy tolerance.
pub(crate) fn renormalize_rows(probs: &mut [f64], n_actions: usize) {
    for row in probs.chunks_mut(n_actions) {
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= sum);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::evaluate_policy_exact;

    #[test]
    fn rows_are_distributions_and_goal_pays() {
        let cfg = GridworldConfig::default();
        let mdp = gridworld(&cfg).unwrap();
        assert_eq!(mdp.n_states(), 25);
        // next to the goal, moving down (action 2) from (3,4) reaches it with prob 0.9
        let s = cfg.index((3, 4));
        assert!((mdp.reward(s, 2) - 0.9).abs() < 1e-12);
        assert!(mdp.is_terminal(cfg.index((4, 4))));
        assert!(mdp.is_terminal(cfg.index((2, 2))));
        assert_eq!(mdp.r_max(), 1.0);
    }

    #[test]
    fn behavior_is_worse_than_optimal_but_positive() {
        let mdp = gridworld(&GridworldConfig::default()).unwrap();
        let (v_star, opt) = mdp.optimal_policy().unwrap();
        let beh = gridworld_behavior(&mdp, 0.5).unwrap();
        let jb = evaluate_policy_exact(&mdp, &beh).unwrap().j;
        let jo = evaluate_policy_exact(&mdp, &opt).unwrap().j;
        assert!((jo - v_star[0]).abs() < 1e-12);
        assert!(jb < jo && jb > 0.0, "J_beta = {jb}, J* = {jo}");
    }
}
