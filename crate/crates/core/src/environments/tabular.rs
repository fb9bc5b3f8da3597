use rand::Rng as _;

use crate::numerics::{solve_linear, Matrix, Rng};
use crate::{Error, Result};

/// Tolerance for probability rows summing to one.
pub const PROB_TOL: f64 = 1e-12;

/// Finite MDP. Terminal states are absorbing with value zero; their
/// transition and reward rows are ignored by evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    initial: Vec<f64>,
    gamma: f64,
    terminal: Vec<bool>,
    r_max: f64,
}

impl TabularMdp {
    /// `transition` is indexed `[s][a][s']`, `reward` `[s][a]`.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        initial: Vec<f64>,
        gamma: f64,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::rejected("mdp needs at least one state and one action"));
        }
        if transition.len() != n_states * n_actions * n_states
            || reward.len() != n_states * n_actions
            || initial.len() != n_states
            || terminal.len() != n_states
        {
            return Err(Error::rejected("mdp table sizes do not match n_states/n_actions"));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::rejected(format!("discount {gamma} outside [0, 1]")));
        }
        if reward.iter().chain(&transition).chain(&initial).any(|v| !v.is_finite()) {
            return Err(Error::rejected("non-finite mdp entry"));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &transition[(s * n_actions + a) * n_states..][..n_states];
                check_distribution(row, &format!("T[{s}][{a}]"))?;
            }
        }
        check_distribution(&initial, "initial distribution")?;
        let r_max = reward.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            initial,
            gamma,
            terminal,
            r_max,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminal_flags(&self) -> &[bool] {
        &self.terminal
    }

    /// Reward bound R_max (largest |r(s, a)|).
    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Override the declared reward bound (must dominate every |r(s, a)|).
    pub fn with_r_max(mut self, r_max: f64) -> Result<Self> {
        if r_max < self.r_max {
            return Err(Error::rejected(format!(
                "declared R_max {r_max} below observed {}",
                self.r_max
            )));
        }
        self.r_max = r_max;
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::rejected(format!("discount {gamma} outside [0, 1]")));
        }
        self.gamma = gamma;
        Ok(self)
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn set_reward(&mut self, s: usize, a: usize, r: f64) {
        self.reward[s * self.n_actions + a] = r;
        self.r_max = self.r_max.max(r.abs());
    }

    /// Row `T[s][a][·]`.
    #[inline]
    pub fn next_distribution(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[(s * self.n_actions + a) * self.n_states..][..self.n_states]
    }

    /// `Q(s, a) = r(s, a) + γ Σ T(s'|s, a) V(s')`, zero at terminal states.
    pub fn q_values(&self, values: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.n_states * self.n_actions];
        for s in 0..self.n_states {
            if self.terminal[s] {
                continue;
            }
            for a in 0..self.n_actions {
                let next: f64 = self
                    .next_distribution(s, a)
                    .iter()
                    .zip(values)
                    .map(|(p, v)| p * v)
                    .sum();
                q[s * self.n_actions + a] = self.reward(s, a) + self.gamma * next;
            }
        }
        q
    }

    /// max_s |V(s) − Σ_a π(a|s)(r + γ Σ T V)| over non-terminal states, plus |V| on terminal ones.
    pub fn bellman_residual(&self, policy: &TabularPolicy, values: &[f64]) -> f64 {
        let q = self.q_values(values);
        (0..self.n_states)
            .map(|s| {
                if self.terminal[s] {
                    values[s].abs()
                } else {
                    let backup: f64 = policy
                        .row(s)
                        .iter()
                        .zip(&q[s * self.n_actions..(s + 1) * self.n_actions])
                        .map(|(p, q)| p * q)
                        .sum();
                    (values[s] - backup).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    /// Optimal values and a deterministic greedy policy (value iteration, γ < 1).
    pub fn optimal_policy(&self) -> Result<(Vec<f64>, TabularPolicy)> {
        if self.gamma >= 1.0 {
            return Err(Error::UnsupportedDiscount(self.gamma));
        }
        let mut v = vec![0.0; self.n_states];
        for _ in 0..100_000 {
            let q = self.q_values(&v);
            let mut delta = 0.0f64;
            for s in 0..self.n_states {
                if self.terminal[s] {
                    continue;
                }
                let best = q[s * self.n_actions..(s + 1) * self.n_actions]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                delta = delta.max((best - v[s]).abs());
                v[s] = best;
            }
            if delta < 1e-13 {
                break;
            }
        }
        let q = self.q_values(&v);
        let actions: Vec<usize> = (0..self.n_states)
            .map(|s| argmax(&q[s * self.n_actions..(s + 1) * self.n_actions]))
            .collect();
        let pi = TabularPolicy::deterministic(self.n_actions, &actions)?;
        let exact = evaluate_policy_exact(self, &pi)?;
        Ok((exact.values, pi))
    }

    /// Normalized discounted state occupancy `(1−γ) ρᵀ (I − γ P_π)⁻¹`, with
    /// terminal states treated as absorbing self-loops.
    pub fn occupancy(&self, policy: &TabularPolicy) -> Result<Vec<f64>> {
        if self.gamma >= 1.0 {
            return Err(Error::UnsupportedDiscount(self.gamma));
        }
        let n = self.n_states;
        // Solve (I − γ P_π)ᵀ d = (1−γ) ρ.
        let mut a = Matrix::identity(n);
        for s in 0..n {
            for t in 0..n {
                let p = if self.terminal[s] {
                    if s == t {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    (0..self.n_actions)
                        .map(|a| policy.prob(s, a) * self.next_distribution(s, a)[t])
                        .sum()
                };
                // transpose: row t, column s
                let cur = a.get(t, s);
                a.set(t, s, cur - self.gamma * p);
            }
        }
        let rhs: Vec<f64> = self.initial.iter().map(|r| (1.0 - self.gamma) * r).collect();
        solve_linear(&a, &rhs)
    }

    /// Sample `(next_state, reward)` for one step.
    pub fn step(&self, s: usize, a: usize, rng: &mut Rng) -> (usize, f64) {
        (sample_index(self.next_distribution(s, a), rng), self.reward(s, a))
    }

    pub fn sample_initial(&self, rng: &mut Rng) -> usize {
        sample_index(&self.initial, rng)
    }

    /// Sum of discounted rewards of one episode (stops at terminal states or `horizon`).
    pub fn rollout_return(&self, policy: &TabularPolicy, horizon: usize, rng: &mut Rng) -> f64 {
        let mut s = self.sample_initial(rng);
        let mut ret = 0.0;
        let mut disc = 1.0;
        for _ in 0..horizon {
            if self.terminal[s] {
                break;
            }
            let a = policy.sample(s, rng);
            let (next, r) = self.step(s, a, rng);
            ret += disc * r;
            disc *= self.gamma;
            s = next;
        }
        ret
    }
}

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|&p| p < 0.0) {
        return Err(Error::rejected(format!("{what} has negative entries")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::rejected(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

pub(crate) fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left a sliver above the cumulative sum: take the last supported index.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Stochastic policy table `π[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions || n_actions == 0 {
            return Err(Error::rejected("policy table size mismatch"));
        }
        for s in 0..n_states {
            check_distribution(&probs[s * n_actions..(s + 1) * n_actions], &format!("π[{s}]"))?;
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::rejected(format!("action {a} out of range at state {s}")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Self::new(actions.len(), n_actions, probs)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_actions) {
            return Err(Error::rejected("ragged policy rows"));
        }
        Self::new(rows.len(), n_actions, rows.concat())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn sample(&self, s: usize, rng: &mut Rng) -> usize {
        sample_index(self.row(s), rng)
    }

    /// Total-variation distance ½‖π(·|s) − other(·|s)‖₁ per state.
    pub fn tv_distance(&self, other: &TabularPolicy) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| {
                0.5 * self
                    .row(s)
                    .iter()
                    .zip(other.row(s))
                    .map(|(p, q)| (p - q).abs())
                    .sum::<f64>()
            })
            .collect()
    }
}

/// Exact state values and objective `J = Σ ρ(s) V(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub values: Vec<f64>,
    pub j: f64,
}

/// Evaluate a policy exactly by a direct linear solve over non-terminal states.
///
/// With γ = 1 the system is solvable only when termination is certain from
/// every non-terminal state; otherwise an evaluation-divergence error results.
pub fn evaluate_policy_exact(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Evaluation> {
    if policy.n_states() != mdp.n_states || policy.n_actions() != mdp.n_actions {
        return Err(Error::rejected(format!(
            "policy shape {}x{} does not match mdp {}x{}",
            policy.n_states(),
            policy.n_actions(),
            mdp.n_states,
            mdp.n_actions
        )));
    }
    let transient: Vec<usize> = (0..mdp.n_states).filter(|&s| !mdp.terminal[s]).collect();
    let mut index = vec![usize::MAX; mdp.n_states];
    for (i, &s) in transient.iter().enumerate() {
        index[s] = i;
    }
    let m = transient.len();
    let mut a = Matrix::identity(m);
    let mut b = vec![0.0; m];
    for (i, &s) in transient.iter().enumerate() {
        for act in 0..mdp.n_actions {
            let p_act = policy.prob(s, act);
            if p_act == 0.0 {
                continue;
            }
            b[i] += p_act * mdp.reward(s, act);
            for (t, &p) in mdp.next_distribution(s, act).iter().enumerate() {
                if p != 0.0 && !mdp.terminal[t] {
                    let j = index[t];
                    let cur = a.get(i, j);
                    a.set(i, j, cur - mdp.gamma * p_act * p);
                }
            }
        }
    }
    let solved = solve_linear(&a, &b).map_err(|e| match e {
        Error::EvaluationDivergence(msg) => Error::EvaluationDivergence(format!(
            "policy value is unbounded (gamma = {}, non-terminating cycle): {msg}",
            mdp.gamma
        )),
        other => other,
    })?;
    let mut values = vec![0.0; mdp.n_states];
    for (i, &s) in transient.iter().enumerate() {
        values[s] = solved[i];
    }
    let j = mdp.initial.iter().zip(&values).map(|(r, v)| r * v).sum();
    Ok(Evaluation { values, j })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng;

    fn single_state(gamma: f64) -> TabularMdp {
        TabularMdp::new(1, 1, vec![1.0], vec![1.0], vec![1.0], gamma, vec![false]).unwrap()
    }

    #[test]
    fn geometric_series() {
        let e = evaluate_policy_exact(&single_state(0.5), &TabularPolicy::uniform(1, 1)).unwrap();
        assert!((e.values[0] - 2.0).abs() < 1e-15);
        assert!((e.j - 2.0).abs() < 1e-15);
    }

    #[test]
    fn undiscounted_cycle_diverges() {
        let r = evaluate_policy_exact(&single_state(1.0), &TabularPolicy::uniform(1, 1));
        assert!(matches!(r, Err(Error::EvaluationDivergence(_))));
    }

    #[test]
    fn validation_rejects_bad_rows() {
        assert!(TabularMdp::new(1, 1, vec![0.9], vec![0.0], vec![1.0], 0.9, vec![false]).is_err());
        assert!(TabularMdp::new(1, 1, vec![1.0], vec![0.0], vec![1.0], 1.5, vec![false]).is_err());
        assert!(TabularPolicy::from_rows(&[vec![0.5, 0.6]]).is_err());
        assert!(TabularPolicy::deterministic(2, &[2]).is_err());
    }

    #[test]
    fn occupancy_sums_to_one() {
        let mdp = TabularMdp::new(
            2,
            1,
            vec![0.5, 0.5, 0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            0.9,
            vec![false, true],
        )
        .unwrap();
        let d = mdp.occupancy(&TabularPolicy::uniform(2, 1)).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // stays in state 0 with prob 0.5 per step: (1−γ)/(1−0.45)
        assert!((d[0] - 0.1 / 0.55).abs() < 1e-12);
    }

    #[test]
    fn sampling_respects_support() {
        let mut r = rng(1);
        for _ in 0..1000 {
            let i = sample_index(&[0.0, 0.3, 0.0, 0.7], &mut r);
            assert!(i == 1 || i == 3);
        }
    }
}
