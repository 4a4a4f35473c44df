use super::tiny::{Projection, TinyEnv};
use crate::error::{Error, Result};
use crate::estimators::spec_weights;
use crate::policy::{FactorizedRankingPolicy, PolicyKind, PositionTable};
use crate::types::{
    Context, EstimatorSpec, LoggedDataset, LoggedSample, RankingAction, RankingEmbedding,
    RewardVector,
};

/// Per-position quantities and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionMoments {
    pub per_position: Vec<f64>,
    pub total: f64,
}

impl PositionMoments {
    fn new(per_position: Vec<f64>) -> Self {
        Self {
            total: per_position.iter().sum(),
            per_position,
        }
    }
}

/// One synthetic sample per `(a, e)` atom at context `x` that the logging
/// policy reaches, with both policy tables evaluated at `x`. Also returns
/// which atoms were kept.
fn atom_dataset(env: &TinyEnv, x: usize) -> Result<(LoggedDataset, Vec<bool>)> {
    let kk = env.positions();
    let dd = env.dims();
    let actions = env.embedding.action_counts().to_vec();
    let mut logging = PositionTable::zeros(0, &actions);
    let mut target = PositionTable::zeros(0, &actions);
    let mut samples = Vec::new();
    let mut kept = Vec::new();
    for (ai, a) in env.rankings().iter().enumerate() {
        for (ei, e) in env.embeddings().iter().enumerate() {
            let reached = env.ranking_prob(&env.logging, x, ai) * env.embedding_prob(ai, ei) > 0.0;
            kept.push(reached);
            if !reached {
                continue;
            }
            logging.push_block(env.logging.table().context_block(x));
            target.push_block(env.target.table().context_block(x));
            samples.push(LoggedSample {
                context: Context(vec![x as f64]),
                action: RankingAction(a.clone()),
                embedding: RankingEmbedding::new(kk, dd, e.clone())?,
                reward: RewardVector(vec![0.0; kk]),
                behavior_id: env.behavior.as_ref().map(|_| 0),
            });
        }
    }
    let ds = LoggedDataset {
        samples,
        logging_policy: FactorizedRankingPolicy::from_table(PolicyKind::Tabular, logging)?,
        target_policy: FactorizedRankingPolicy::from_table(PolicyKind::Tabular, target)?,
        embedding_model: env.embedding.clone(),
        reward_kind: env.kind,
        behaviors: env.behavior.iter().cloned().collect(),
        config_fingerprint: String::new(),
    };
    Ok((ds, kept))
}

/// Estimator weights of every atom, laid out `[x][a][e][k]`; NaN where the
/// logging policy never reaches the atom.
pub fn atom_weights(env: &TinyEnv, spec: &EstimatorSpec) -> Result<Vec<f64>> {
    if spec.self_normalized || spec.slope_delta.is_some() {
        return Err(Error::InvalidArgument(
            "exact moments exist only for plain fixed-weight estimators".into(),
        ));
    }
    let mut out = Vec::new();
    for x in 0..env.contexts() {
        let (ds, kept) = atom_dataset(env, x)?;
        let w = spec_weights(&ds, spec)?;
        let mut row = 0;
        for reached in kept {
            if reached {
                out.extend_from_slice(w.row(row));
                row += 1;
            } else {
                out.extend(std::iter::repeat_n(f64::NAN, env.positions()));
            }
        }
    }
    Ok(out)
}

/// Visits every atom with `p(x) pi_0(a | x) p(e | a)`, its weights and index.
fn for_logged_atoms(env: &TinyEnv, w: &[f64], mut f: impl FnMut(f64, &[f64], usize, usize, usize)) {
    let kk = env.positions();
    let (na, ne) = (env.rankings().len(), env.embeddings().len());
    let px = env.context_prob();
    for x in 0..env.contexts() {
        for a in 0..na {
            let pa = env.ranking_prob(&env.logging, x, a);
            for e in 0..ne {
                let p = px * pa * env.embedding_prob(a, e);
                let s = ((x * na + a) * ne + e) * kk;
                if p > 0.0 {
                    f(p, &w[s..s + kk], x, a, e);
                }
            }
        }
    }
}

/// `E[V^(k)]` of a plain estimator on a dataset drawn from the logging
/// policy; independent of `n`.
pub fn exact_expectation(env: &TinyEnv, spec: &EstimatorSpec) -> Result<PositionMoments> {
    let w = atom_weights(env, spec)?;
    let mut acc = vec![0.0; env.positions()];
    for_logged_atoms(env, &w, |p, wk, x, a, e| {
        for (k, m) in env.mean(x, a, e).iter().enumerate() {
            acc[k] += p * wk[k] * m;
        }
    });
    Ok(PositionMoments::new(acc))
}

/// `n Var[V^(k)] = E[(w r(k))^2] - E[w r(k)]^2` per position.
pub fn exact_variance(env: &TinyEnv, spec: &EstimatorSpec) -> Result<Vec<f64>> {
    let w = atom_weights(env, spec)?;
    let kk = env.positions();
    let mut first = vec![0.0; kk];
    let mut second = vec![0.0; kk];
    for_logged_atoms(env, &w, |p, wk, x, a, e| {
        let (m, s) = (env.mean(x, a, e), env.second(x, a, e));
        for k in 0..kk {
            first[k] += p * wk[k] * m[k];
            second[k] += p * wk[k] * wk[k] * s[k];
        }
    });
    Ok(first.iter().zip(&second).map(|(f, s)| s - f * f).collect())
}

/// `E[w(k)]` under the logging policy; one for every unbiased weight.
pub fn expected_weight(env: &TinyEnv, spec: &EstimatorSpec) -> Result<Vec<f64>> {
    let w = atom_weights(env, spec)?;
    let mut acc = vec![0.0; env.positions()];
    for_logged_atoms(env, &w, |p, wk, _, _, _| {
        for (a, v) in acc.iter_mut().zip(wk) {
            *a += p * v;
        }
    });
    Ok(acc)
}

/// `V^(k)(pi) = E_{x, a ~ pi, e}[q_k(x, a, e)]`.
pub fn policy_value(env: &TinyEnv) -> PositionMoments {
    let mut acc = vec![0.0; env.positions()];
    let px = env.context_prob();
    for x in 0..env.contexts() {
        for a in 0..env.rankings().len() {
            let pa = env.ranking_prob(&env.target, x, a);
            for e in 0..env.embeddings().len() {
                let p = px * pa * env.embedding_prob(a, e);
                for (k, m) in env.mean(x, a, e).iter().enumerate() {
                    acc[k] += p * m;
                }
            }
        }
    }
    PositionMoments::new(acc)
}

/// `p(e | x, pi) = sum_a pi(a | x) p(e | a)` over every ranking embedding.
pub fn embedding_pmf(env: &TinyEnv, policy: &FactorizedRankingPolicy, x: usize) -> Vec<f64> {
    let mut out = vec![0.0; env.embeddings().len()];
    for a in 0..env.rankings().len() {
        let pa = env.ranking_prob(policy, x, a);
        for (e, o) in out.iter_mut().enumerate() {
            *o += pa * env.embedding_prob(a, e);
        }
    }
    out
}

/// `p(proj_k(e) | x, pi) = sum_{e'} p(e' | x, pi) 1{proj_k(e) = proj_k(e')}`
/// for every `e`, summed literally over `e'`.
pub fn projected_pmf(env: &TinyEnv, pmf: &[f64], proj: Projection, k: usize) -> Vec<f64> {
    let cats = env.category_counts();
    let keys: Vec<usize> = env
        .embeddings()
        .iter()
        .map(|e| proj.key(k, e, cats))
        .collect();
    keys.iter()
        .map(|&key| {
            keys.iter()
                .zip(pmf)
                .filter(|(&other, _)| other == key)
                .map(|(_, p)| p)
                .sum()
        })
        .collect()
}

/// Marginal weights `p(proj_k(e) | x, pi) / p(proj_k(e) | x, pi_0)` from the
/// joint embedding distributions, laid out `[x][e][k]`.
pub fn literal_marginal_weights(env: &TinyEnv, proj: Projection) -> Vec<f64> {
    let kk = env.positions();
    let ne = env.embeddings().len();
    let mut out = vec![0.0; env.contexts() * ne * kk];
    for x in 0..env.contexts() {
        let pt = embedding_pmf(env, &env.target, x);
        let p0 = embedding_pmf(env, &env.logging, x);
        for k in 0..kk {
            let num = projected_pmf(env, &pt, proj, k);
            let den = projected_pmf(env, &p0, proj, k);
            for e in 0..ne {
                out[(x * ne + e) * kk + k] = num[e] / den[e];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::tiny::{TinyReward, TinySpec};
    use crate::types::{EstimatorFamily, Scope};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env(reward: TinyReward, seed: u64) -> TinyEnv {
        TinyEnv::random(
            &TinySpec::small(reward),
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap()
    }

    #[test]
    fn same_policies_give_logging_value() {
        let spec = TinySpec {
            same_policies: true,
            ..TinySpec::small(TinyReward::DirectEffect)
        };
        let env = TinyEnv::random(&spec, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let v = policy_value(&env);
        for fam in EstimatorFamily::ALL {
            if fam == EstimatorFamily::Aips {
                continue;
            }
            let e = exact_expectation(&env, &EstimatorSpec::new(fam)).unwrap();
            assert!((e.total - v.total).abs() < 1e-12, "{fam:?}");
        }
    }

    #[test]
    fn unbiased_weights_have_mean_one() {
        let env = env(TinyReward::DirectEffect, 5);
        for fam in EstimatorFamily::ALL {
            if fam == EstimatorFamily::Aips {
                continue;
            }
            for m in expected_weight(&env, &EstimatorSpec::new(fam)).unwrap() {
                assert!((m - 1.0).abs() < 1e-12, "{fam:?} {m}");
            }
        }
    }

    #[test]
    fn rejects_self_normalized() {
        let env = env(TinyReward::EmbeddingOnly, 6);
        let spec = EstimatorSpec::new(EstimatorFamily::Sips).self_normalized();
        assert!(exact_expectation(&env, &spec).is_err());
    }

    #[test]
    fn deterministic_rewards_have_zero_variance() {
        let spec = TinySpec {
            same_policies: true,
            sigma_r: 0.0,
            ..TinySpec::small(TinyReward::EmbeddingOnly)
        };
        let mut env = TinyEnv::random(&spec, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        // one context, one action per position, one-hot embeddings
        let one = FactorizedRankingPolicy::uniform(1, &[1, 1]);
        let emb = crate::synth::EmbeddingModel::from_probs(&[1, 1], &[2], vec![1.0, 0.0, 0.0, 1.0])
            .unwrap();
        env = TinyEnv::new(one.clone(), one, emb, env.kind, 0.0, 100, |_, _, _, k| {
            k as f64 + 0.5
        })
        .unwrap();
        let var = exact_variance(&env, &EstimatorSpec::new(EstimatorFamily::Msips)).unwrap();
        assert_eq!(var, vec![0.0, 0.0]);
    }

    #[test]
    fn factorized_marginals_match_joint_marginalization() {
        for seed in 0..3 {
            let spec = TinySpec {
                category_counts: vec![2, 2],
                action_counts: vec![3, 2],
                ..TinySpec::small(TinyReward::EmbeddingOnly)
            };
            let env = TinyEnv::random(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let (na, ne, kk) = (env.rankings().len(), env.embeddings().len(), 2);
            for (fam, scope) in [
                (EstimatorFamily::Msips, Scope::Full),
                (EstimatorFamily::Miips, Scope::Position),
                (EstimatorFamily::Mrips, Scope::Prefix),
            ] {
                for dims in 1..=2 {
                    let w = atom_weights(&env, &EstimatorSpec::new(fam).with_retained_dims(dims))
                        .unwrap();
                    let lit = literal_marginal_weights(&env, Projection::new(scope, dims));
                    for x in 0..env.contexts() {
                        for a in 0..na {
                            for e in 0..ne {
                                for k in 0..kk {
                                    let got = w[((x * na + a) * ne + e) * kk + k];
                                    let want = lit[(x * ne + e) * kk + k];
                                    assert!(
                                        (got - want).abs() < 1e-10,
                                        "{fam:?} {dims}: {got} vs {want}"
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}
