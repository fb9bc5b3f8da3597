//! Offline agents trained on raw states or frozen representations:
//! behavior cloning, TD3+BC, CQL (continuous and tabular) and SPIBB.

mod actor_critic;
mod bc;
mod config;
mod eval;
mod models;
mod objectives;
mod tabular;
mod trace;

pub use actor_critic::TrainingRun;
pub use bc::train_bc;
pub use config::{AgentConfig, Algorithm};
pub use eval::{evaluate_return, evaluate_return_tabular, ReturnStats};
pub use models::{concat_cols, features_from_inputs, Featurizer, PolicyModel, QModel};
pub use objectives::{
    actor_objective, bc_objective, cql_critic_objective, td3bc_actor_objective, td3bc_lambda, td_critic_objective,
    Objective,
};
pub use tabular::{
    tabular_cql_evaluate, tabular_cql_lower_bound, train_cql_tabular, train_spibb_tabular, SpibbResult,
    TabularCqlResult,
};
pub use trace::{parse_trace_csv, trace_to_csv, write_trace_csv, TraceRow, TRACE_HEADER};

use crate::bpr::EncoderModel;
use crate::environments::{OfflineDataset, PointMassConfig};
use crate::numerics::Matrix;
use crate::Result;

use actor_critic::{train_actor_critic, Variant};

/// TD3+BC: twin critics with target networks and a BC-regularized actor.
/// `eval_env` enables periodic return evaluation in the trace.
pub fn train_td3bc(
    dataset: &OfflineDataset,
    config: &AgentConfig,
    encoder: Option<&EncoderModel>,
    eval_env: Option<&PointMassConfig>,
) -> Result<TrainingRun> {
    train_actor_critic(dataset, config, encoder, eval_env, Variant::Td3bc)
}

/// Continuous CQL: conservative twin critics and a deterministic actor.
pub fn train_cql(
    dataset: &OfflineDataset,
    config: &AgentConfig,
    encoder: Option<&EncoderModel>,
    eval_env: Option<&PointMassConfig>,
) -> Result<TrainingRun> {
    train_actor_critic(dataset, config, encoder, eval_env, Variant::Cql)
}

/// Penultimate critic activations Ψ for a batch of raw states and actions.
pub fn extract_features(q: &QModel, states: &Matrix, actions: &Matrix) -> Result<Matrix> {
    q.extract_features(states, actions)
}
