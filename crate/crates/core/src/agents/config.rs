use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Bc,
    Td3bc,
    Cql,
    Spibb,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bc" => Ok(Self::Bc),
            "td3bc" => Ok(Self::Td3bc),
            "cql" => Ok(Self::Cql),
            "spibb" => Ok(Self::Spibb),
            _ => Err(Error::rejected(format!("unknown algorithm '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    /// Feed φ(s) instead of the raw state to the networks.
    pub use_encoder: bool,
    /// Keep training the encoder with the critic loss plus the BPR loss.
    pub co_train_encoder: bool,
    /// With `use_encoder`, give the critic the raw state and only the actor z.
    pub raw_state_critic: bool,
    pub gradient_steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub encoder_lr: f64,
    pub gamma: f64,
    /// TD3+BC trade-off α in λ = α / mean|Q|.
    pub td3bc_alpha: f64,
    /// CQL penalty weight.
    pub cql_alpha: f64,
    /// Candidate actions per state for the continuous CQL log-sum-exp
    /// (this many uniform samples plus this many policy samples).
    pub cql_samples: usize,
    /// Count threshold N∧ below which SPIBB copies the behavior policy.
    pub spibb_threshold: u64,
    pub tau: f64,
    pub policy_delay: u64,
    pub policy_noise: f64,
    pub noise_clip: f64,
    /// Weight of the BPR loss on the encoder in co-training mode.
    pub bpr_weight: f64,
    pub predictor_hidden: usize,
    pub min_action_norm: f64,
    /// Standardize fixed network inputs with dataset statistics.
    pub normalize_inputs: bool,
    /// Trace row interval for losses; 0 keeps only the first and last rows.
    pub log_every: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub probe_every: u64,
    pub probe_batch: usize,
    /// Fitted-Q sweeps and inner gradient steps for tabular CQL.
    pub tabular_iterations: usize,
    pub tabular_inner_steps: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Td3bc,
            use_encoder: false,
            co_train_encoder: false,
            raw_state_critic: false,
            gradient_steps: 100_000,
            batch_size: 256,
            seed: 0,
            hidden: vec![256, 256],
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            encoder_lr: 3e-4,
            gamma: 0.99,
            td3bc_alpha: 2.5,
            cql_alpha: 1.0,
            cql_samples: 10,
            spibb_threshold: 10,
            tau: 0.005,
            policy_delay: 2,
            policy_noise: 0.2,
            noise_clip: 0.5,
            bpr_weight: 1.0,
            predictor_hidden: 256,
            min_action_norm: 1e-6,
            normalize_inputs: true,
            log_every: 1000,
            eval_every: 0,
            eval_episodes: 10,
            probe_every: 0,
            probe_batch: 512,
            tabular_iterations: 400,
            tabular_inner_steps: 50,
        }
    }
}

impl AgentConfig {
    /// Check field consistency; the error names the offending field.
    pub fn validate(&self, encoder_supplied: bool) -> Result<()> {
        let fail = |field: &str, why: &str| Err(Error::rejected(format!("agent.{field}: {why}")));
        if self.co_train_encoder && !self.use_encoder {
            return fail("co_train_encoder", "requires use_encoder");
        }
        if self.use_encoder && !encoder_supplied {
            return fail("use_encoder", "no encoder checkpoint supplied");
        }
        if self.raw_state_critic && !self.use_encoder {
            return fail("raw_state_critic", "only meaningful with use_encoder");
        }
        if self.co_train_encoder && self.raw_state_critic {
            return fail("raw_state_critic", "co-training needs the critic on z");
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return fail("hidden", "needs at least one positive width");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail("gamma", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return fail("tau", "must lie in [0, 1]");
        }
        if self.policy_delay == 0 {
            return fail("policy_delay", "must be positive");
        }
        if self.td3bc_alpha < 0.0 || self.cql_alpha < 0.0 || self.bpr_weight < 0.0 {
            return fail("alpha", "weights must be non-negative");
        }
        if self.algorithm == Algorithm::Cql && self.cql_samples == 0 {
            return fail("cql_samples", "must be positive");
        }
        if self.eval_every > 0 && self.eval_episodes == 0 {
            return fail("eval_episodes", "must be positive when evaluating");
        }
        if self.probe_every > 0 && self.probe_batch == 0 {
            return fail("probe_batch", "must be positive when probing");
        }
        Ok(())
    }
}
