//! Closed-form bias and variance gaps evaluated by enumeration.
//!
//! Nothing here calls the estimators module: weights are recomputed from
//! the policy tables, and posteriors `pi_0(a | x, e)` come from Bayes
//! inversion of the enumerated joint. Agreement with [`super::exact`] is
//! therefore a check of both sides.

use super::exact::{embedding_pmf, projected_pmf};
use super::tiny::{Projection, TinyEnv};
use crate::error::{Error, Result};
use crate::types::Scope;

/// Action ratio `prod_{l in scope(k)} pi(a(l) | x) / pi_0(a(l) | x)`.
fn action_ratio(env: &TinyEnv, x: usize, a: usize, k: usize, scope: Scope) -> f64 {
    env.rankings()[a]
        .iter()
        .enumerate()
        .filter(|&(l, _)| scope.contains(k, l))
        .map(|(l, &al)| env.target.prob(x, l, al) / env.logging.prob(x, l, al))
        .product()
}

/// Joint and projected embedding distributions at one context.
struct ContextLaw {
    pi_e: Vec<f64>,
    pi0_e: Vec<f64>,
    /// `p(proj_k(e) | x, .)` for every `e`, per position.
    pi_key: Vec<Vec<f64>>,
    pi0_key: Vec<Vec<f64>>,
    keys: Vec<Vec<usize>>,
}

impl ContextLaw {
    fn new(env: &TinyEnv, x: usize, proj: Projection) -> Self {
        let pi_e = embedding_pmf(env, &env.target, x);
        let pi0_e = embedding_pmf(env, &env.logging, x);
        let kk = env.positions();
        let cats = env.category_counts();
        Self {
            pi_key: (0..kk)
                .map(|k| projected_pmf(env, &pi_e, proj, k))
                .collect(),
            pi0_key: (0..kk)
                .map(|k| projected_pmf(env, &pi0_e, proj, k))
                .collect(),
            keys: (0..kk)
                .map(|k| {
                    env.embeddings()
                        .iter()
                        .map(|e| proj.key(k, e, cats))
                        .collect()
                })
                .collect(),
            pi_e,
            pi0_e,
        }
    }

    /// `w_c = p(proj^c | x, pi, proj) / p(proj^c | x, pi_0, proj)`.
    fn complement_weight(&self, k: usize, e: usize) -> Result<f64> {
        let num = self.pi_e[e] / self.pi_key[k][e];
        let den = self.pi0_e[e] / self.pi0_key[k][e];
        if !(num > 0.0 && den > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "embedding {e} lacks common support at position {k}"
            )));
        }
        Ok(num / den)
    }

    fn projected_weight(&self, k: usize, e: usize) -> f64 {
        self.pi_key[k][e] / self.pi0_key[k][e]
    }
}

/// `n (Var[GIPS] - Var[GMIPS])` per position for rewards that depend on
/// `(x, proj_k(e))` only:
/// `E_{x, proj_k(e) ~ pi_0}[E[r(k)^2] Var_{pi_0(a | x, proj_k(e))}[w(x, a)]]`
/// with the action ratio `w` over `scope(k)`.
pub fn variance_gap_vs_action(env: &TinyEnv, proj: Projection) -> Result<Vec<f64>> {
    let kk = env.positions();
    let px = env.context_prob();
    let mut out = vec![0.0; kk];
    for x in 0..env.contexts() {
        for (k, acc) in out.iter_mut().enumerate() {
            let keys = proj.key_count(k, kk, env.category_counts());
            let cats = env.category_counts();
            // per projected value: mass, E[w], E[w^2], E[r^2] numerators
            let mut mass = vec![0.0; keys];
            let mut w1 = vec![0.0; keys];
            let mut w2 = vec![0.0; keys];
            let mut r2 = vec![0.0; keys];
            for a in 0..env.rankings().len() {
                let pa = env.ranking_prob(&env.logging, x, a);
                let w = action_ratio(env, x, a, k, proj.scope);
                for (e, emb) in env.embeddings().iter().enumerate() {
                    let p = pa * env.embedding_prob(a, e);
                    let key = proj.key(k, emb, cats);
                    mass[key] += p;
                    w1[key] += p * w;
                    w2[key] += p * w * w;
                    r2[key] += p * env.second(x, a, e)[k];
                }
            }
            for key in 0..keys {
                if mass[key] > 0.0 {
                    let m = mass[key];
                    let var = w2[key] / m - (w1[key] / m).powi(2);
                    *acc += px * m * (r2[key] / m) * var;
                }
            }
        }
    }
    Ok(out)
}

/// `n (Var[MSIPS] - Var[GMIPS])` per position for rewards that depend on
/// `(x, proj_k(e))` only:
/// `E_{x, proj_k(e) ~ pi_0}[w_proj^2 Var_{proj^c | proj, pi_0}[w_c] E[r(k)^2]]`.
pub fn variance_gap_vs_full(env: &TinyEnv, proj: Projection) -> Result<Vec<f64>> {
    let kk = env.positions();
    let px = env.context_prob();
    let mut out = vec![0.0; kk];
    for x in 0..env.contexts() {
        let law = ContextLaw::new(env, x, proj);
        for (k, acc) in out.iter_mut().enumerate() {
            let keys = proj.key_count(k, kk, env.category_counts());
            let mut mass = vec![0.0; keys];
            let mut c1 = vec![0.0; keys];
            let mut c2 = vec![0.0; keys];
            let mut r2 = vec![0.0; keys];
            let mut wp = vec![0.0; keys];
            for e in 0..env.embeddings().len() {
                let p0 = law.pi0_e[e];
                if p0 == 0.0 {
                    continue;
                }
                let key = law.keys[k][e];
                let wc = law.complement_weight(k, e)?;
                mass[key] += p0;
                c1[key] += p0 * wc;
                c2[key] += p0 * wc * wc;
                wp[key] = law.projected_weight(k, e);
                for a in 0..env.rankings().len() {
                    let pae = env.ranking_prob(&env.logging, x, a) * env.embedding_prob(a, e);
                    r2[key] += pae * env.second(x, a, e)[k];
                }
            }
            for key in 0..keys {
                if mass[key] > 0.0 {
                    let m = mass[key];
                    let var = c2[key] / m - (c1[key] / m).powi(2);
                    *acc += px * m * wp[key] * wp[key] * var * (r2[key] / m);
                }
            }
        }
    }
    Ok(out)
}

/// Bias of GMIPS with projection `proj` per position:
/// `E_{x, a, e ~ pi}[(1/w_c - 1) q_k(x, a, e)]` plus
/// `E_{x, e ~ pi_0}[(1/w_c) sum_{s<t} pi_0(a_s | x, e) pi_0(a_t | x, e)
/// (q_k(a_s) - q_k(a_t)) (w(a_t) - w(a_s))]` with the whole-ranking action
/// ratio `w`. Rankings enter the pairwise sum in lexicographic order.
pub fn marginal_bias(env: &TinyEnv, proj: Projection) -> Result<Vec<f64>> {
    let order: Vec<usize> = (0..env.rankings().len()).collect();
    marginal_bias_with_order(env, proj, &order)
}

/// [`marginal_bias`] with the pairwise sum taken over rankings in `order`.
pub fn marginal_bias_with_order(
    env: &TinyEnv,
    proj: Projection,
    order: &[usize],
) -> Result<Vec<f64>> {
    let na = env.rankings().len();
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..na).collect::<Vec<_>>() {
        return Err(Error::InvalidArgument(
            "order must permute the rankings".into(),
        ));
    }
    let kk = env.positions();
    let px = env.context_prob();
    let mut out = vec![0.0; kk];
    let mut g = vec![0.0; na];
    for x in 0..env.contexts() {
        let law = ContextLaw::new(env, x, proj);
        let w: Vec<f64> = (0..na)
            .map(|a| action_ratio(env, x, a, 0, Scope::Full))
            .collect();
        for e in 0..env.embeddings().len() {
            let p0e = law.pi0_e[e];
            if p0e == 0.0 {
                continue;
            }
            // posterior pi_0(a | x, e) by Bayes inversion
            for (a, ga) in g.iter_mut().enumerate() {
                *ga = env.ranking_prob(&env.logging, x, a) * env.embedding_prob(a, e) / p0e;
            }
            for (k, acc) in out.iter_mut().enumerate() {
                let inv = 1.0 / law.complement_weight(k, e)?;
                let mut first = 0.0;
                for a in 0..na {
                    let p = env.ranking_prob(&env.target, x, a) * env.embedding_prob(a, e);
                    first += p * (inv - 1.0) * env.mean(x, a, e)[k];
                }
                let mut pairs = 0.0;
                for (i, &s) in order.iter().enumerate() {
                    for &t in &order[i + 1..] {
                        let (qs, qt) = (env.mean(x, s, e)[k], env.mean(x, t, e)[k]);
                        pairs += g[s] * g[t] * (qs - qt) * (w[t] - w[s]);
                    }
                }
                *acc += px * (first + p0e * inv * pairs);
            }
        }
    }
    Ok(out)
}

/// Bias of GMIPS per position when rewards depend on `(x, e)` only:
/// `E_{x, e ~ pi}[(1/w_c - 1) q_k(x, e)]`.
pub fn embedding_only_bias(env: &TinyEnv, proj: Projection) -> Result<Vec<f64>> {
    let kk = env.positions();
    let px = env.context_prob();
    let mut out = vec![0.0; kk];
    for x in 0..env.contexts() {
        let law = ContextLaw::new(env, x, proj);
        for e in 0..env.embeddings().len() {
            let pe = law.pi_e[e];
            if pe == 0.0 {
                continue;
            }
            for (k, acc) in out.iter_mut().enumerate() {
                // q_k(x, e) as the conditional mean under pi
                let q: f64 = (0..env.rankings().len())
                    .map(|a| {
                        env.ranking_prob(&env.target, x, a)
                            * env.embedding_prob(a, e)
                            * env.mean(x, a, e)[k]
                    })
                    .sum::<f64>()
                    / pe;
                let inv = 1.0 / law.complement_weight(k, e)?;
                *acc += px * pe * (inv - 1.0) * q;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::exact::{exact_expectation, exact_variance, policy_value};
    use crate::oracle::tiny::{TinyReward, TinySpec};
    use crate::types::{EstimatorFamily, EstimatorSpec};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(spec: &TinySpec, seed: u64) -> TinyEnv {
        TinyEnv::random(spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn gmips(scope: Scope, dims: usize) -> EstimatorSpec {
        let fam = match scope {
            Scope::Full => EstimatorFamily::Msips,
            Scope::Position => EstimatorFamily::Miips,
            Scope::Prefix => EstimatorFamily::Mrips,
        };
        EstimatorSpec::new(fam).with_retained_dims(dims)
    }

    fn gips(scope: Scope) -> EstimatorSpec {
        EstimatorSpec::new(match scope {
            Scope::Full => EstimatorFamily::Sips,
            Scope::Position => EstimatorFamily::Iips,
            Scope::Prefix => EstimatorFamily::Rips,
        })
    }

    fn close(a: &[f64], b: &[f64], tol: f64) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn action_variance_gap_matches_enumeration() {
        for scope in [Scope::Full, Scope::Position, Scope::Prefix] {
            let proj = Projection::new(scope, 1);
            for seed in 0..3 {
                let env = random(&TinySpec::small(TinyReward::Conforming(proj)), seed);
                let lhs: Vec<f64> = exact_variance(&env, &gips(scope))
                    .unwrap()
                    .iter()
                    .zip(exact_variance(&env, &gmips(scope, 1)).unwrap())
                    .map(|(a, b)| a - b)
                    .collect();
                close(&lhs, &variance_gap_vs_action(&env, proj).unwrap(), 1e-10);
            }
        }
    }

    #[test]
    fn full_variance_gap_matches_enumeration() {
        let spec = |proj| TinySpec {
            category_counts: vec![2, 2],
            ..TinySpec::small(TinyReward::Conforming(proj))
        };
        for proj in [
            Projection::new(Scope::Position, 2),
            Projection::new(Scope::Prefix, 1),
        ] {
            for seed in 0..3 {
                let env = random(&spec(proj), seed);
                let lhs: Vec<f64> = exact_variance(&env, &gmips(Scope::Full, 2))
                    .unwrap()
                    .iter()
                    .zip(exact_variance(&env, &gmips(proj.scope, proj.dims)).unwrap())
                    .map(|(a, b)| a - b)
                    .collect();
                let rhs = variance_gap_vs_full(&env, proj).unwrap();
                close(&lhs, &rhs, 1e-10);
                assert!(rhs.iter().all(|&v| v >= -1e-12));
            }
        }
    }

    #[test]
    fn bias_matches_enumeration_without_conformity() {
        for reward in [TinyReward::DirectEffect, TinyReward::EmbeddingOnly] {
            for scope in [Scope::Full, Scope::Position, Scope::Prefix] {
                for seed in 0..3 {
                    let spec = TinySpec {
                        action_counts: vec![3, 2],
                        ..TinySpec::small(reward)
                    };
                    let env = random(&spec, seed);
                    let proj = Projection::new(scope, 1);
                    let v = policy_value(&env).per_position;
                    let e = exact_expectation(&env, &gmips(scope, 1))
                        .unwrap()
                        .per_position;
                    let lhs: Vec<f64> = e.iter().zip(&v).map(|(a, b)| a - b).collect();
                    close(&lhs, &marginal_bias(&env, proj).unwrap(), 1e-10);
                    if reward == TinyReward::EmbeddingOnly {
                        close(&lhs, &embedding_only_bias(&env, proj).unwrap(), 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn pairwise_sum_ignores_ranking_order() {
        let spec = TinySpec {
            action_counts: vec![3, 2],
            ..TinySpec::small(TinyReward::DirectEffect)
        };
        let env = random(&spec, 9);
        let proj = Projection::new(Scope::Position, 1);
        let base = marginal_bias(&env, proj).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..5 {
            let mut order: Vec<usize> = (0..env.rankings().len()).collect();
            order.shuffle(&mut rng);
            close(
                &base,
                &marginal_bias_with_order(&env, proj, &order).unwrap(),
                1e-12,
            );
        }
        assert!(marginal_bias_with_order(&env, proj, &[0, 0, 1, 2, 3, 4]).is_err());
    }

    #[test]
    fn vanishing_cases() {
        let proj = Projection::new(Scope::Position, 1);
        let same = TinySpec {
            same_policies: true,
            ..TinySpec::small(TinyReward::Conforming(proj))
        };
        let env = random(&same, 11);
        close(
            &variance_gap_vs_action(&env, proj).unwrap(),
            &[0.0, 0.0],
            1e-12,
        );
        close(
            &variance_gap_vs_full(&env, proj).unwrap(),
            &[0.0, 0.0],
            1e-12,
        );
        let conf = random(&TinySpec::small(TinyReward::Conforming(proj)), 12);
        close(&marginal_bias(&conf, proj).unwrap(), &[0.0, 0.0], 1e-12);
        close(
            &embedding_only_bias(&conf, proj).unwrap(),
            &[0.0, 0.0],
            1e-12,
        );
        let full = Projection::new(Scope::Full, 1);
        let emb_only = random(&TinySpec::small(TinyReward::EmbeddingOnly), 13);
        close(
            &embedding_only_bias(&emb_only, full).unwrap(),
            &[0.0, 0.0],
            1e-12,
        );
        // prefix at the last position covers the whole ranking
        let prefix = Projection::new(Scope::Prefix, 1);
        assert!(variance_gap_vs_full(&conf, prefix).unwrap()[1].abs() < 1e-12);
    }
}
