//! Finite MDPs with exact evaluation, the point-mass control task, offline
//! datasets and the collapsed-state counterexample.

mod counterexample;
mod dataset;
mod empirical;
mod gridworld;
mod pointmass;
mod tabular;

pub use counterexample::{
    build_counterexample, build_counterexample_with_reward, evaluate_on_empirical_collapsed_model,
    CollapseMap, Counterexample,
};
pub use dataset::{decode_one_hot, one_hot, OfflineDataset, Transition, DATASET_SCHEMA_VERSION};
pub use empirical::{estimate_behavior_tabular, generate_tabular_dataset, BehaviorEstimate, EmpiricalModel};
pub use gridworld::{gridworld, gridworld_behavior, GridworldConfig};
pub use pointmass::{
    generate_pointmass_dataset, rollout_episode, Controller, PointMassBehavior, PointMassConfig,
    PointMassEnv, POINTMASS_ACTION_DIM, POINTMASS_STATE_DIM,
};
pub use tabular::{
    evaluate_policy_exact, Evaluation, TabularMdp, TabularPolicy, PROB_TOL,
};
