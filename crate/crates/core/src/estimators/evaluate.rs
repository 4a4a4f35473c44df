use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::cache::WeightCache;
use super::estimate::EstimateReport;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::synth::{Environment, PolicyValue};
use crate::types::EstimatorSpec;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    pub report: EstimateReport,
    /// Retained dimensions chosen by SLOPE, if it ran.
    pub selected_dims: Option<usize>,
}

/// Error decomposition over replications, normalized by `V^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub mean_estimate: f64,
    pub bias: f64,
    pub squared_bias: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub mse: f64,
    pub successes: usize,
}

/// Normalized bias, variance and MSE of `estimates` around `truth`.
///
/// `mse = squared_bias + variance * (R - 1) / R` holds up to rounding.
pub fn summarize(estimates: &[f64], truth: f64) -> ErrorSummary {
    let r = estimates.len() as f64;
    let norm = truth * truth;
    let mean = estimates.iter().sum::<f64>() / r;
    let var = if estimates.len() > 1 {
        estimates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0)
    } else {
        f64::NAN
    };
    let mse = estimates.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / r;
    let bias = mean - truth;
    ErrorSummary {
        mean_estimate: mean,
        bias: bias / truth.abs(),
        squared_bias: bias * bias / norm,
        variance: var / norm,
        mse: mse / norm,
        successes: estimates.len(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecOutcome {
    pub label: String,
    /// One entry per replication; failures keep their message.
    pub runs: Vec<std::result::Result<RunOutput, String>>,
    pub summary: ErrorSummary,
}

impl SpecOutcome {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.is_err()).count()
    }

    pub fn first_error(&self) -> Option<&str> {
        self.runs
            .iter()
            .find_map(|r| r.as_ref().err().map(String::as_str))
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.runs
            .iter()
            .filter_map(|r| r.as_ref().ok().map(|o| o.report.value))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: PolicyValue,
    pub outcomes: Vec<SpecOutcome>,
}

/// Runs every spec on `replications` datasets of size `n`.
///
/// Replication `r` draws its data from a ChaCha8 stream `r` of `root_seed`,
/// so results do not depend on scheduling. Output is indexed
/// `[replication][spec]`.
pub fn replicate(
    env: &Environment,
    n: usize,
    specs: &[EstimatorSpec],
    replications: usize,
    root_seed: u64,
) -> Vec<Vec<std::result::Result<RunOutput, String>>> {
    (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
            rng.set_stream(rep as u64);
            match env.generate(n, &mut rng) {
                Ok(ds) => {
                    let cache = WeightCache::new(&ds);
                    specs
                        .iter()
                        .map(|s| cache.run(s).map_err(|e| e.to_string()))
                        .collect()
                }
                Err(e) => vec![Err(e.to_string()); specs.len()],
            }
        })
        .collect()
}

/// Builds per-spec outcomes from `[replication][spec]` runs.
pub fn collect_outcomes(
    specs: &[EstimatorSpec],
    runs: Vec<Vec<std::result::Result<RunOutput, String>>>,
    truth: f64,
) -> Vec<SpecOutcome> {
    let mut per_spec: Vec<Vec<_>> = vec![Vec::with_capacity(runs.len()); specs.len()];
    for rep in runs {
        for (slot, r) in per_spec.iter_mut().zip(rep) {
            slot.push(r);
        }
    }
    specs
        .iter()
        .zip(per_spec)
        .map(|(spec, runs)| {
            let est: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.as_ref().ok().map(|o| o.report.value))
                .collect();
            SpecOutcome {
                label: spec.label(),
                summary: summarize(&est, truth),
                runs,
            }
        })
        .collect()
}

/// Seed of the Monte Carlo true-value draws for a given root seed.
pub fn value_seed(root_seed: u64) -> u64 {
    root_seed ^ 0x005e_ed0f_7a1e
}

/// True value once, then `replications` datasets shared by all specs.
pub fn evaluate_estimators(
    specs: &[EstimatorSpec],
    replications: usize,
    cfg: &ExperimentConfig,
    root_seed: u64,
    value_budget: u64,
) -> Result<Evaluation> {
    if replications < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 replications".into(),
        ));
    }
    for s in specs {
        s.validate()?;
    }
    let env = Environment::new(cfg)?;
    let value = env.true_value_auto(value_budget, value_seed(root_seed))?;
    let runs = replicate(&env, cfg.n, specs, replications, root_seed);
    Ok(Evaluation {
        outcomes: collect_outcomes(specs, runs, value.value),
        value,
    })
}
