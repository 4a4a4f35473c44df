//! Exact enumeration against simulation, and structural facts the oracle
//! must reproduce on generator-built environments.

use gmips_core::config::{apply_override, ExperimentConfig};
use gmips_core::estimators::spec_weights;
use gmips_core::oracle::{
    atom_weights, exact_expectation, exact_variance, policy_value, variance_gap_vs_action,
    Projection, TinyEnv, TinyReward, TinySpec, DEFAULT_CAP,
};
use gmips_core::synth::{EmbeddingModel, Environment};
use gmips_core::{AipsBehavior, EstimatorFamily, EstimatorSpec, RewardKind, Scope};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(behavior: &str, kind: &str) -> ExperimentConfig {
    let cfg = ExperimentConfig {
        positions: 2,
        actions: 3,
        dims: 1,
        finite_contexts: 3,
        ..Default::default()
    };
    let cfg = apply_override(&cfg, &format!("reward.behavior=\"{behavior}\"")).unwrap();
    apply_override(&cfg, &format!("reward.kind=\"{kind}\"")).unwrap()
}

fn spec(label: EstimatorFamily) -> EstimatorSpec {
    EstimatorSpec::new(label)
}

/// Single-sample estimates are i.i.d. draws of `w r(k)`; their sample mean and
/// variance must sit within four standard errors of the enumerated moments.
#[test]
fn enumerated_moments_match_simulated_single_sample_estimates() {
    let n = 200_000;
    for kind in ["gaussian", "bernoulli"] {
        let cfg = small("cascade", kind);
        let env = Environment::new(&cfg).unwrap();
        let tiny = TinyEnv::from_environment(&env, DEFAULT_CAP).unwrap();
        let ds = env.generate(n, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for fam in [
            EstimatorFamily::Sips,
            EstimatorFamily::Rips,
            EstimatorFamily::Miips,
            EstimatorFamily::Mrips,
        ] {
            let w = spec_weights(&ds, &spec(fam)).unwrap();
            let mean = exact_expectation(&tiny, &spec(fam)).unwrap().per_position;
            let var = exact_variance(&tiny, &spec(fam)).unwrap();
            for k in 0..2 {
                let draws: Vec<f64> = ds
                    .samples
                    .iter()
                    .enumerate()
                    .map(|(i, s)| w.get(i, k) * s.reward.0[k])
                    .collect();
                let m = draws.iter().sum::<f64>() / n as f64;
                let v = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                let m4 = draws.iter().map(|d| (d - m).powi(4)).sum::<f64>() / n as f64;
                let se_mean = (v / n as f64).sqrt();
                let se_var = ((m4 - v * v) / n as f64).sqrt();
                assert!(
                    (m - mean[k]).abs() < 4.0 * se_mean,
                    "{kind} {fam:?} k={k}: mean {m} vs {}",
                    mean[k]
                );
                assert!(
                    (v - var[k]).abs() < 4.0 * se_var,
                    "{kind} {fam:?} k={k}: var {v} vs {}",
                    var[k]
                );
            }
        }
    }
}

/// Each action-space family is unbiased exactly when its scope covers the
/// reward's dependence on the ranking.
#[test]
fn action_family_bias_follows_behavior() {
    let cases = [
        (
            "independent",
            vec![
                EstimatorFamily::Sips,
                EstimatorFamily::Iips,
                EstimatorFamily::Rips,
            ],
            vec![],
        ),
        (
            "cascade",
            vec![EstimatorFamily::Sips, EstimatorFamily::Rips],
            vec![EstimatorFamily::Iips],
        ),
        (
            "standard",
            vec![EstimatorFamily::Sips],
            vec![EstimatorFamily::Iips, EstimatorFamily::Rips],
        ),
    ];
    for (behavior, unbiased, biased) in cases {
        let env = Environment::new(&small(behavior, "gaussian")).unwrap();
        let tiny = TinyEnv::from_environment(&env, DEFAULT_CAP).unwrap();
        let v = policy_value(&tiny).total;
        let bias = |s: &EstimatorSpec| exact_expectation(&tiny, s).unwrap().total - v;
        for fam in unbiased {
            assert!(bias(&spec(fam)).abs() < 1e-10, "{behavior} {fam:?}");
        }
        for fam in biased {
            assert!(
                bias(&spec(fam)).abs() > 1e-6,
                "{behavior} {fam:?} should be biased"
            );
        }
        let oracle_aips = spec(EstimatorFamily::Aips).with_behavior(AipsBehavior::LoggedTrue);
        assert!(bias(&oracle_aips).abs() < 1e-10, "{behavior} AIPS");
    }
}

#[test]
fn conforming_rewards_favor_marginal_weights() {
    for seed in 0..3 {
        let proj = Projection::new(Scope::Full, 2);
        let spec_env = TinySpec {
            action_counts: vec![3, 3],
            category_counts: vec![2, 2],
            ..TinySpec::small(TinyReward::Conforming(proj))
        };
        let env = TinyEnv::random(&spec_env, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let sips = exact_variance(&env, &spec(EstimatorFamily::Sips)).unwrap();
        let msips = exact_variance(&env, &spec(EstimatorFamily::Msips)).unwrap();
        for k in 0..2 {
            assert!(
                sips[k] >= msips[k] - 1e-12,
                "seed {seed} k={k}: {} < {}",
                sips[k],
                msips[k]
            );
        }
    }
}

#[test]
fn injective_deterministic_embeddings_collapse_to_action_weights() {
    let base = TinyEnv::random(
        &TinySpec::small(TinyReward::DirectEffect),
        &mut ChaCha8Rng::seed_from_u64(21),
    )
    .unwrap();
    // position 0 maps a -> a, position 1 maps a -> 1 - a
    let emb =
        EmbeddingModel::from_probs(&[2, 2], &[2], vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0])
            .unwrap();
    let env = TinyEnv::new(
        base.logging.clone(),
        base.target.clone(),
        emb,
        RewardKind::Gaussian,
        0.5,
        DEFAULT_CAP,
        |x, a, _, k| 0.2 + 0.1 * (x + 2 * a[0] + a[1] + k) as f64,
    )
    .unwrap();
    let pairs = [
        (EstimatorFamily::Sips, EstimatorFamily::Msips, Scope::Full),
        (
            EstimatorFamily::Iips,
            EstimatorFamily::Miips,
            Scope::Position,
        ),
        (EstimatorFamily::Rips, EstimatorFamily::Mrips, Scope::Prefix),
    ];
    for (g, m, scope) in pairs {
        let wg = atom_weights(&env, &spec(g)).unwrap();
        let wm = atom_weights(&env, &spec(m)).unwrap();
        for (a, b) in wg.iter().zip(&wm) {
            assert!(a.is_nan() == b.is_nan());
            if !a.is_nan() {
                assert!((a - b).abs() < 1e-12, "{g:?} {a} vs {m:?} {b}");
            }
        }
        let gap = variance_gap_vs_action(&env, Projection::new(scope, 1)).unwrap();
        assert!(gap.iter().all(|v| v.abs() < 1e-12), "{scope:?} {gap:?}");
    }
}

#[test]
fn more_actions_never_lower_ranking_weight_variance() {
    let sizes = [2, 3, 4, 5, 6];
    for seed in 0..3 {
        let family = TinyEnv::action_growth_family(seed, &sizes).unwrap();
        let vars: Vec<Vec<f64>> = family
            .iter()
            .map(|env| exact_variance(env, &spec(EstimatorFamily::Sips)).unwrap())
            .collect();
        for pair in vars.windows(2) {
            for (small, large) in pair[0].iter().zip(&pair[1]) {
                assert!(large >= &(small - 1e-12), "seed {seed}: {vars:?}");
            }
        }
        let last = family.last().unwrap();
        let msips = exact_variance(last, &spec(EstimatorFamily::Msips)).unwrap();
        assert!(msips.iter().zip(vars.last().unwrap()).all(|(m, s)| m < s));
    }
}
