//! Importance-weighting estimators for ranking policies.
//!
//! Action-space families (SIPS, IIPS, RIPS, AIPS) weight each position's
//! reward by a product of per-position action ratios. The marginal families
//! (MSIPS, MIIPS, MRIPS) use ratios of per-position embedding marginals
//! `p_l(e(l) | x, pi)`, which factorize because both the policies and
//! `p(e | a)` do.

mod cache;
mod estimate;
mod evaluate;
mod weights;

pub use cache::WeightCache;
pub use estimate::{contributions, estimate, EstimateReport};
pub use evaluate::{
    collect_outcomes, evaluate_estimators, replicate, summarize, value_seed, ErrorSummary,
    Evaluation, RunOutput, SpecOutcome,
};
pub use weights::{
    action_ratios, aips_from_ratios, aips_weights, gips_weights, gmips_weights, marginal_ratios,
    marginal_ratios_all, position_marginal, tuple_count, tuple_index, WeightMatrix,
};

use crate::error::Result;
use crate::types::{EstimatorSpec, LoggedDataset};

/// Weights of a spec without SLOPE selection.
pub fn spec_weights(ds: &LoggedDataset, spec: &EstimatorSpec) -> Result<WeightMatrix> {
    WeightCache::new(ds).weights(spec)
}

/// Estimate of one spec on one dataset, with the dimensions SLOPE chose.
pub fn run_estimator(ds: &LoggedDataset, spec: &EstimatorSpec) -> Result<RunOutput> {
    WeightCache::new(ds).run(spec)
}
