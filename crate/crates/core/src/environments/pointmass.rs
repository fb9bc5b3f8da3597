use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::numerics::{rng, Matrix, Rng};
use crate::par;
use crate::{Error, Result};

use super::dataset::{OfflineDataset, Transition};

pub const POINTMASS_STATE_DIM: usize = 4;
pub const POINTMASS_ACTION_DIM: usize = 2;

/// Point mass on the plane driven by bounded accelerations.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMassConfig {
    pub goal: [f64; 2],
    pub max_steps: usize,
    /// Initial positions are uniform in `[-init_range, init_range]²`.
    pub init_range: f64,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        Self {
            goal: [0.0, 0.0],
            max_steps: 100,
            init_range: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointMassEnv {
    config: PointMassConfig,
    position: [f64; 2],
    velocity: [f64; 2],
    t: usize,
}

impl PointMassEnv {
    pub fn new(config: PointMassConfig, rng: &mut Rng) -> Self {
        let mut env = Self {
            config,
            position: [0.0; 2],
            velocity: [0.0; 2],
            t: 0,
        };
        env.reset(rng);
        env
    }

    pub fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        let r = self.config.init_range;
        self.position = [rng.random_range(-r..=r), rng.random_range(-r..=r)];
        self.velocity = [0.0; 2];
        self.t = 0;
        self.state()
    }

    /// Observation `(px − gx, py − gy, vx, vy)`: position relative to the goal.
    pub fn state(&self) -> Vec<f64> {
        let g = self.config.goal;
        vec![self.position[0] - g[0], self.position[1] - g[1], self.velocity[0], self.velocity[1]]
    }

    pub fn config(&self) -> &PointMassConfig {
        &self.config
    }

    pub fn is_over(&self) -> bool {
        self.t >= self.config.max_steps
    }

    /// Apply an action (clipped to `[-1, 1]²`), returning `(next_state, reward)`.
    /// The reward is the negative distance to the goal after the move.
    pub fn step(&mut self, action: &[f64]) -> (Vec<f64>, f64) {
        for i in 0..2 {
            let a = action[i].clamp(-1.0, 1.0);
            self.velocity[i] = 0.9 * self.velocity[i] + 0.1 * a;
            self.position[i] += 0.05 * self.velocity[i];
        }
        self.t += 1;
        let dx = self.position[0] - self.config.goal[0];
        let dy = self.position[1] - self.config.goal[1];
        (self.state(), -(dx * dx + dy * dy).sqrt())
    }
}

/// Anything that maps a state to an action.
pub trait Controller: Sync {
    fn act(&self, state: &[f64], rng: &mut Rng) -> Vec<f64>;

    /// One action row per state row; row `i` draws noise from `rngs[i]`.
    fn act_batch(&self, states: &Matrix, rngs: &mut [Rng]) -> Matrix {
        let rows: Vec<Vec<f64>> = (0..states.rows()).map(|i| self.act(states.row(i), &mut rngs[i])).collect();
        Matrix::from_rows(&rows).expect("controller returns equal-length actions")
    }
}

impl<F> Controller for F
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn act(&self, state: &[f64], _rng: &mut Rng) -> Vec<f64> {
        self(state)
    }
}

/// Scripted behavior policies for dataset generation.
#[derive(Debug, Clone, PartialEq)]
pub enum PointMassBehavior {
    /// Proportional controller toward the goal, clipped to the action box.
    Expert { gain: f64 },
    /// Weaker controller with Gaussian action noise.
    Medium { gain: f64, noise: f64 },
    Random,
    /// One component drawn per episode with the given weights.
    Mixture(Vec<(PointMassBehavior, f64)>),
}

impl PointMassBehavior {
    pub fn expert() -> Self {
        Self::Expert { gain: 1.0 }
    }

    pub fn medium() -> Self {
        Self::Medium { gain: 0.5, noise: 0.3 }
    }

    /// Parse `expert`, `medium`, `random`, `medium-expert`, or
    /// `mixture:name:weight,name:weight,...`.
    pub fn parse(spec: &str) -> Result<Self> {
        match spec {
            "expert" => Ok(Self::expert()),
            "medium" => Ok(Self::medium()),
            "random" => Ok(Self::Random),
            "medium-expert" => Ok(Self::Mixture(vec![(Self::medium(), 0.5), (Self::expert(), 0.5)])),
            _ => {
                let body = spec
                    .strip_prefix("mixture:")
                    .ok_or_else(|| Error::rejected(format!("unknown behavior '{spec}'")))?;
                let mut parts = Vec::new();
                for item in body.split(',') {
                    let (name, weight) = item
                        .rsplit_once(':')
                        .ok_or_else(|| Error::rejected(format!("mixture item '{item}' lacks ':weight'")))?;
                    let w: f64 = weight
                        .parse()
                        .map_err(|_| Error::rejected(format!("bad mixture weight '{weight}'")))?;
                    if !(w.is_finite() && w >= 0.0) {
                        return Err(Error::rejected(format!("mixture weight {w} must be ≥ 0")));
                    }
                    let component = Self::parse(name)?;
                    if matches!(component, Self::Mixture(_)) {
                        return Err(Error::rejected("nested mixtures are not supported"));
                    }
                    parts.push((component, w));
                }
                let total: f64 = parts.iter().map(|p| p.1).sum();
                if total <= 0.0 {
                    return Err(Error::rejected("mixture weights sum to zero"));
                }
                Ok(Self::Mixture(parts))
            }
        }
    }

    /// Provenance string recorded in dataset headers.
    pub fn tag(&self) -> String {
        match self {
            Self::Expert { gain } => format!("expert(gain={gain})"),
            Self::Medium { gain, noise } => format!("medium(gain={gain},noise={noise})"),
            Self::Random => "random".into(),
            Self::Mixture(parts) => {
                let items: Vec<String> = parts.iter().map(|(b, w)| format!("{}:{w}", b.tag())).collect();
                format!("mixture:{}", items.join(","))
            }
        }
    }

    /// Resolve a mixture to the component used for one episode.
    pub fn pick_component(&self, rng: &mut Rng) -> &PointMassBehavior {
        match self {
            Self::Mixture(parts) => {
                let total: f64 = parts.iter().map(|p| p.1).sum();
                let mut u = rng.random::<f64>() * total;
                for (b, w) in parts {
                    if u < *w {
                        return b;
                    }
                    u -= w;
                }
                &parts.last().expect("mixture is non-empty").0
            }
            other => other,
        }
    }
}

impl Controller for PointMassBehavior {
    /// Acts with one sampled component per call for mixtures; episode-level
    /// mixing is done by [`generate_pointmass_dataset`].
    fn act(&self, state: &[f64], rng: &mut Rng) -> Vec<f64> {
        let toward = |gain: f64| -> Vec<f64> { (0..2).map(|i| (-gain * state[i]).clamp(-1.0, 1.0)).collect() };
        match self {
            Self::Expert { gain } => toward(*gain),
            Self::Medium { gain, noise } => {
                let normal = Normal::new(0.0, *noise).expect("noise scale is finite and ≥ 0");
                toward(*gain)
                    .into_iter()
                    .map(|a| (a + normal.sample(rng)).clamp(-1.0, 1.0))
                    .collect()
            }
            Self::Random => (0..2).map(|_| rng.random_range(-1.0..=1.0)).collect(),
            Self::Mixture(_) => {
                let component = self.pick_component(rng).clone();
                component.act(state, rng)
            }
        }
    }
}

/// Run one episode; returns its transitions and undiscounted return.
pub fn rollout_episode(
    config: &PointMassConfig,
    controller: &dyn Controller,
    rng: &mut Rng,
) -> (Vec<Transition>, f64) {
    let mut env = PointMassEnv::new(config.clone(), rng);
    let mut state = env.state();
    let mut out = Vec::with_capacity(config.max_steps);
    let mut ret = 0.0;
    while !env.is_over() {
        let action: Vec<f64> = controller
            .act(&state, rng)
            .into_iter()
            .map(|a| a.clamp(-1.0, 1.0))
            .collect();
        let (next, r) = env.step(&action);
        ret += r;
        // Time-limit truncation is not a terminal state.
        out.push(Transition {
            state: state.clone(),
            action,
            reward: r,
            next_state: next.clone(),
            done: false,
        });
        state = next;
    }
    (out, ret)
}

/// Generate `n` transitions from whole episodes of `behavior` (the last episode
/// may be cut short). Episode `k` uses its own sub-seed, so the result does
/// not depend on scheduling.
pub fn generate_pointmass_dataset(
    config: &PointMassConfig,
    behavior: &PointMassBehavior,
    n: usize,
    seed: u64,
) -> Result<OfflineDataset> {
    if n == 0 || config.max_steps == 0 {
        return Err(Error::rejected("dataset size and horizon must be positive"));
    }
    let episodes = n.div_ceil(config.max_steps);
    let runs = par::map_range(episodes, |k| {
        let mut r = rng(par::sub_seed(seed, k as u64));
        let component = behavior.pick_component(&mut r).clone();
        rollout_episode(config, &component, &mut r).0
    });
    let mut transitions: Vec<Transition> = runs.into_iter().flatten().collect();
    transitions.truncate(n);
    OfflineDataset::new(POINTMASS_STATE_DIM, POINTMASS_ACTION_DIM, transitions, behavior.tag())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dynamics_follow_the_update_rule() {
        let mut r = rng(0);
        let mut env = PointMassEnv::new(PointMassConfig::default(), &mut r);
        let s0 = env.state();
        let (s1, rew) = env.step(&[2.0, -0.5]);
        // action clipped to 1.0
        assert!((s1[2] - 0.1).abs() < 1e-15);
        assert!((s1[3] + 0.05).abs() < 1e-15);
        assert!((s1[0] - (s0[0] + 0.005)).abs() < 1e-15);
        assert!((rew + (s1[0] * s1[0] + s1[1] * s1[1]).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn parse_and_tag() {
        let m = PointMassBehavior::parse("mixture:expert:0.5,random:0.5").unwrap();
        assert_eq!(m.tag(), "mixture:expert(gain=1):0.5,random:0.5");
        assert!(PointMassBehavior::parse("mixture:expert").is_err());
        assert!(PointMassBehavior::parse("bogus").is_err());
    }

    #[test]
    fn generation_is_seeded_and_sized() {
        let cfg = PointMassConfig::default();
        let b = PointMassBehavior::parse("medium-expert").unwrap();
        let a = generate_pointmass_dataset(&cfg, &b, 250, 7).unwrap();
        assert_eq!(a.len(), 250);
        assert_eq!(a, generate_pointmass_dataset(&cfg, &b, 250, 7).unwrap());
        assert_ne!(a, generate_pointmass_dataset(&cfg, &b, 250, 8).unwrap());
        assert!(a.transitions().iter().all(|t| t.action.iter().all(|x| x.abs() <= 1.0)));
    }

    #[test]
    fn expert_beats_random() {
        let cfg = PointMassConfig::default();
        let mean = |b: &PointMassBehavior| {
            let d = generate_pointmass_dataset(&cfg, b, 5000, 1).unwrap();
            let r = d.episode_returns();
            r.iter().sum::<f64>() / r.len() as f64
        };
        assert!(mean(&PointMassBehavior::expert()) > mean(&PointMassBehavior::Random));
    }
}
