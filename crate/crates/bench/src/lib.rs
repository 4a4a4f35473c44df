//! Shared fixtures for the criterion benchmarks in `benches/`.

use gmips_core::synth::generate_log;
use gmips_core::{ExperimentConfig, LoggedDataset};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Default experiment with `n` samples and `dims` embedding dimensions.
pub fn config(n: usize, dims: usize) -> ExperimentConfig {
    ExperimentConfig {
        n,
        dims,
        ..Default::default()
    }
}

/// One seeded dataset drawn from [`config`].
pub fn dataset(n: usize, dims: usize) -> LoggedDataset {
    generate_log(&config(n, dims), &mut ChaCha8Rng::seed_from_u64(7))
        .expect("default config generates")
}
