//! Brute-force evaluation over environments small enough to enumerate.
//!
//! A [`TinyEnv`] stores every `(x, a, e)` atom with its exact reward
//! moments. Estimator expectations and variances come from the estimators
//! module applied atom by atom; the closed-form gaps in [`theorems`] are
//! computed independently so the two can be compared.

mod exact;
mod lemma;
pub mod theorems;
mod tiny;
mod verify;

pub use exact::{
    atom_weights, embedding_pmf, exact_expectation, exact_variance, expected_weight,
    literal_marginal_weights, policy_value, projected_pmf, PositionMoments,
};
pub use lemma::{pairwise_identity_check, pairwise_identity_sides};
pub use theorems::{
    embedding_only_bias, marginal_bias, marginal_bias_with_order, variance_gap_vs_action,
    variance_gap_vs_full,
};
pub use tiny::{Projection, TinyEnv, TinyReward, TinySpec, DEFAULT_CAP};
pub use verify::{verify_all, Check};
