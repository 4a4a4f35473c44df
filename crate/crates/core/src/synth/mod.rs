//! Synthetic ranking environments.
//!
//! An [`Environment`] freezes every model parameter from a config seed:
//! categorical embedding distributions, the base reward `q̄(x, e)`, position
//! interaction magnitudes and, in matrix mode, a context-dependent
//! distribution over behavior matrices. Logged datasets and ground-truth
//! policy values are both derived from it.

mod behavior;
mod embedding;
mod env;
mod reward;

pub use behavior::{BehaviorDistribution, BehaviorKind, BehaviorMatrix, CATALOGUE};
pub use embedding::EmbeddingModel;
pub use env::{
    gen_contexts, generate_log, true_policy_value, ContextView, Environment, PolicyValue, ValueMode,
};
pub use reward::{
    base_reward, base_reward_action, expected_reward_embedding, expected_reward_matrix, interact,
    mean_reward, sample_reward, second_moment, sigmoid, ContextTerms, MatrixBase, RewardBehavior,
    RewardModel,
};
