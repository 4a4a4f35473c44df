//! Every closed-form identity checked against enumeration on seeded tiny
//! environments, as a list of named deviations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::exact::{
    atom_weights, exact_expectation, exact_variance, expected_weight, literal_marginal_weights,
    policy_value,
};
use super::lemma::pairwise_identity_check;
use super::theorems::{
    embedding_only_bias, marginal_bias, variance_gap_vs_action, variance_gap_vs_full,
};
use super::tiny::{Projection, TinyEnv, TinyReward, TinySpec};
use crate::error::Result;
use crate::types::{EstimatorFamily, EstimatorSpec, Scope};

const SCOPES: [Scope; 3] = [Scope::Full, Scope::Position, Scope::Prefix];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub cases: usize,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.max_deviation <= self.tolerance
    }
}

fn family(scope: Scope, marginal: bool) -> EstimatorFamily {
    match (scope, marginal) {
        (Scope::Full, false) => EstimatorFamily::Sips,
        (Scope::Position, false) => EstimatorFamily::Iips,
        (Scope::Prefix, false) => EstimatorFamily::Rips,
        (Scope::Full, true) => EstimatorFamily::Msips,
        (Scope::Position, true) => EstimatorFamily::Miips,
        (Scope::Prefix, true) => EstimatorFamily::Mrips,
    }
}

fn marginal(scope: Scope, dims: usize) -> EstimatorSpec {
    EstimatorSpec::new(family(scope, true)).with_retained_dims(dims)
}

fn env(reward: TinyReward, dims: usize, seed: u64) -> Result<TinyEnv> {
    let spec = TinySpec {
        contexts: 2 + (seed % 2) as usize,
        action_counts: if seed.is_multiple_of(2) {
            vec![3, 2]
        } else {
            vec![2, 3]
        },
        category_counts: vec![2; dims],
        ..TinySpec::small(reward)
    };
    TinyEnv::random(&spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Maximum that keeps NaN, so an undefined deviation fails its check.
fn nan_max(m: f64, d: f64) -> f64 {
    if d.is_nan() || m.is_nan() {
        f64::NAN
    } else {
        m.max(d)
    }
}

fn gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, nan_max)
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

struct Acc {
    worst: f64,
    cases: usize,
}

impl Acc {
    fn new() -> Self {
        Self {
            worst: 0.0,
            cases: 0,
        }
    }

    fn push(&mut self, d: f64) {
        self.worst = nan_max(self.worst, d);
        self.cases += 1;
    }

    fn finish(self, name: &'static str, tolerance: f64) -> Check {
        Check {
            name,
            max_deviation: self.worst,
            tolerance,
            cases: self.cases,
        }
    }
}

/// Runs every check on `seeds` tiny environments each.
pub fn verify_all(seeds: &[u64]) -> Result<Vec<Check>> {
    let mut unbiased = Acc::new();
    let mut action_gap = Acc::new();
    let mut bias = Acc::new();
    let mut full_gap = Acc::new();
    let mut emb_bias = Acc::new();
    let mut mean_one = Acc::new();
    let mut factorized = Acc::new();
    for &seed in seeds {
        for scope in SCOPES {
            for dims in 1..=2 {
                let proj = Projection::new(scope, dims);
                let e = env(TinyReward::Conforming(proj), dims, seed)?;
                let got = exact_expectation(&e, &marginal(scope, dims))?;
                unbiased.push(gap(&got.per_position, &policy_value(&e).per_position));
            }
            let proj = Projection::new(scope, 1);
            let e = env(TinyReward::Conforming(proj), 1, seed)?;
            let lhs = diff(
                &exact_variance(&e, &EstimatorSpec::new(family(scope, false)))?,
                &exact_variance(&e, &marginal(scope, 1))?,
            );
            action_gap.push(gap(&lhs, &variance_gap_vs_action(&e, proj)?));

            let e = env(TinyReward::DirectEffect, 2, seed)?;
            let v = policy_value(&e).per_position;
            for dims in 1..=2 {
                let proj = Projection::new(scope, dims);
                let lhs = diff(
                    &exact_expectation(&e, &marginal(scope, dims))?.per_position,
                    &v,
                );
                bias.push(gap(&lhs, &marginal_bias(&e, proj)?));
            }

            let e = env(TinyReward::EmbeddingOnly, 2, seed)?;
            let v = policy_value(&e).per_position;
            for dims in 1..=2 {
                let proj = Projection::new(scope, dims);
                let w = marginal(scope, dims);
                let lhs = diff(&exact_expectation(&e, &w)?.per_position, &v);
                emb_bias.push(gap(&lhs, &embedding_only_bias(&e, proj)?));
                let atoms = atom_weights(&e, &w)?;
                let lit = literal_marginal_weights(&e, proj);
                let (na, ne, kk) = (e.rankings().len(), e.embeddings().len(), e.positions());
                for x in 0..e.contexts() {
                    for a in 0..na {
                        for em in 0..ne {
                            for k in 0..kk {
                                let got = atoms[((x * na + a) * ne + em) * kk + k];
                                if !got.is_nan() {
                                    factorized.push((got - lit[(x * ne + em) * kk + k]).abs());
                                }
                            }
                        }
                    }
                }
            }
        }
        for (scope, dims) in [
            (Scope::Position, 1),
            (Scope::Position, 2),
            (Scope::Prefix, 1),
            (Scope::Prefix, 2),
        ] {
            let proj = Projection::new(scope, dims);
            let e = env(TinyReward::Conforming(proj), 2, seed)?;
            let lhs = diff(
                &exact_variance(&e, &marginal(Scope::Full, 2))?,
                &exact_variance(&e, &marginal(scope, dims))?,
            );
            full_gap.push(gap(&lhs, &variance_gap_vs_full(&e, proj)?));
        }
        let e = env(TinyReward::DirectEffect, 2, seed)?;
        let mut specs: Vec<EstimatorSpec> = SCOPES
            .iter()
            .map(|&s| EstimatorSpec::new(family(s, false)))
            .collect();
        for scope in SCOPES {
            specs.extend((1..=2).map(|d| marginal(scope, d)));
        }
        for spec in &specs {
            let m = expected_weight(&e, spec)?;
            mean_one.push(m.iter().map(|v| (v - 1.0).abs()).fold(0.0, nan_max));
        }
    }
    let mut lemma = Acc::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.first().copied().unwrap_or(0));
    for _ in 0..1000 {
        let m = rng.random_range(1..=8);
        lemma.push(pairwise_identity_check(m, &mut rng));
    }
    Ok(vec![
        unbiased.finish("unbiasedness under conforming rewards", 1e-10),
        action_gap.finish("variance gap to action-space weights", 1e-10),
        bias.finish("bias with direct effects", 1e-10),
        full_gap.finish("variance gap to full-embedding weights", 1e-10),
        emb_bias.finish("bias with embedding-only rewards", 1e-10),
        lemma.finish("pairwise rearrangement identity", 1e-9),
        mean_one.finish("mean-one weights", 1e-10),
        factorized.finish("factorized vs literal marginals", 1e-10),
    ])
}
