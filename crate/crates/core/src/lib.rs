//! Off-policy evaluation of ranking policies with marginalized importance
//! weights over ranking embeddings.

// Indexed loops walk several parallel per-position tables at once.
#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod grid;
pub mod oracle;
pub mod plot;
pub mod policy;
pub mod slope;
pub mod sweep;
pub mod synth;
pub mod types;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use policy::{FactorizedRankingPolicy, PolicyKind, PositionTable};
pub use types::*;
