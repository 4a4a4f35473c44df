//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one `PASS`/`FAIL` line per criterion; exits non-zero if any fails.
//!
//! The statistical criteria load their sweep configs from `tests/data` so the
//! shipped root seeds are the ones exercised here.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use gmips_core::oracle::{
    atom_weights, embedding_only_bias, exact_expectation, exact_variance, expected_weight,
    literal_marginal_weights, marginal_bias, pairwise_identity_check, policy_value,
    variance_gap_vs_action, variance_gap_vs_full, Projection, TinyEnv, TinyReward, TinySpec,
};
use gmips_core::sweep::{run_sweep, SweepConfig, SweepResults};
use gmips_core::synth::BehaviorMatrix;
use gmips_core::{AipsBehavior, EstimatorFamily, EstimatorSpec, Scope};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SCOPES: [Scope; 3] = [Scope::Full, Scope::Position, Scope::Prefix];
const SEEDS: [u64; 3] = [11, 12, 13];

struct Outcome {
    pass: bool,
    detail: String,
}

fn gips(scope: Scope) -> EstimatorSpec {
    EstimatorSpec::new(match scope {
        Scope::Full => EstimatorFamily::Sips,
        Scope::Position => EstimatorFamily::Iips,
        Scope::Prefix => EstimatorFamily::Rips,
    })
}

fn gmips(scope: Scope, dims: usize) -> EstimatorSpec {
    EstimatorSpec::new(match scope {
        Scope::Full => EstimatorFamily::Msips,
        Scope::Position => EstimatorFamily::Miips,
        Scope::Prefix => EstimatorFamily::Mrips,
    })
    .with_retained_dims(dims)
}

/// Tiny shapes within K=2, |A_k|<=3, D<=2, |E_d|=2, <=3 contexts; varied by seed.
fn tiny_spec(reward: TinyReward, seed: u64) -> TinySpec {
    let dims = match reward {
        TinyReward::Conforming(p) => p.dims.max(1 + (seed % 2) as usize),
        _ => 1 + (seed % 2) as usize,
    };
    TinySpec {
        contexts: 2 + (seed % 2) as usize,
        action_counts: if seed.is_multiple_of(3) {
            vec![3, 2]
        } else {
            vec![2, 3]
        },
        category_counts: vec![2; dims],
        ..TinySpec::small(reward)
    }
}

fn tiny(spec: &TinySpec, seed: u64) -> TinyEnv {
    TinyEnv::random(spec, &mut ChaCha8Rng::seed_from_u64(seed)).expect("tiny env")
}

/// Maximum that keeps NaN, so an undefined deviation fails its criterion.
fn nan_max(m: f64, d: f64) -> f64 {
    if d.is_nan() || m.is_nan() {
        f64::NAN
    } else {
        m.max(d)
    }
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, nan_max)
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn sweep(name: &str) -> SweepResults {
    let cfg = SweepConfig::load(&data(name)).expect("sweep config");
    run_sweep(&cfg).expect("sweep run")
}

fn mse(res: &SweepResults, value: f64, label: &str) -> f64 {
    res.row(value, label).expect("row").outcome.summary.mse
}

fn unbiasedness() -> Outcome {
    let mut worst: f64 = 0.0;
    for scope in SCOPES {
        for dims in 1..=2 {
            for seed in SEEDS {
                let proj = Projection::new(scope, dims);
                let env = tiny(&tiny_spec(TinyReward::Conforming(proj), seed), seed);
                let v = policy_value(&env);
                let e = exact_expectation(&env, &gmips(scope, dims)).expect("expectation");
                worst = nan_max(worst, max_gap(&e.per_position, &v.per_position));
                worst = nan_max(worst, (e.total - v.total).abs());
            }
        }
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("max |E[V_hat] - V| = {worst:.2e} over 3 scopes x 2 dims x 3 seeds"),
    }
}

fn action_variance_gap() -> Outcome {
    let mut worst: f64 = 0.0;
    for scope in SCOPES {
        for seed in SEEDS {
            let proj = Projection::new(scope, 1);
            let mut spec = tiny_spec(TinyReward::Conforming(proj), seed);
            spec.category_counts = vec![2];
            let env = tiny(&spec, seed);
            let lhs: Vec<f64> = exact_variance(&env, &gips(scope))
                .expect("variance")
                .iter()
                .zip(exact_variance(&env, &gmips(scope, 1)).expect("variance"))
                .map(|(a, b)| a - b)
                .collect();
            worst = nan_max(
                worst,
                max_gap(&lhs, &variance_gap_vs_action(&env, proj).expect("gap")),
            );
        }
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("max per-position deviation {worst:.2e} over 3 scope pairs x 3 seeds"),
    }
}

fn bias_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut smallest_bias = f64::INFINITY;
    for scope in SCOPES {
        for seed in SEEDS {
            let env = tiny(&tiny_spec(TinyReward::DirectEffect, seed), seed);
            let dims = env.dims();
            let proj = Projection::new(scope, dims);
            let v = policy_value(&env).per_position;
            let e = exact_expectation(&env, &gmips(scope, dims))
                .expect("expectation")
                .per_position;
            let lhs: Vec<f64> = e.iter().zip(&v).map(|(a, b)| a - b).collect();
            smallest_bias = smallest_bias.min(lhs.iter().map(|b| b.abs()).fold(0.0, nan_max));
            worst = nan_max(
                worst,
                max_gap(&lhs, &marginal_bias(&env, proj).expect("bias")),
            );
        }
    }
    Outcome {
        // a vanishing bias would make the check vacuous
        pass: worst <= 1e-10 && smallest_bias > 1e-6,
        detail: format!("max deviation {worst:.2e}, smallest env bias {smallest_bias:.2e}"),
    }
}

fn appendix_identities() -> Outcome {
    let mut full_gap: f64 = 0.0;
    for (scope, dims) in [
        (Scope::Position, 1),
        (Scope::Position, 2),
        (Scope::Prefix, 1),
        (Scope::Prefix, 2),
    ] {
        for seed in SEEDS {
            let proj = Projection::new(scope, dims);
            let mut spec = tiny_spec(TinyReward::Conforming(proj), seed);
            spec.category_counts = vec![2, 2];
            let env = tiny(&spec, seed);
            let lhs: Vec<f64> = exact_variance(&env, &gmips(Scope::Full, 2))
                .expect("variance")
                .iter()
                .zip(exact_variance(&env, &gmips(scope, dims)).expect("variance"))
                .map(|(a, b)| a - b)
                .collect();
            full_gap = nan_max(
                full_gap,
                max_gap(&lhs, &variance_gap_vs_full(&env, proj).expect("gap")),
            );
        }
    }
    let mut emb_bias: f64 = 0.0;
    for scope in SCOPES {
        for dims in 1..=2 {
            for seed in SEEDS {
                let mut spec = tiny_spec(TinyReward::EmbeddingOnly, seed);
                spec.category_counts = vec![2, 2];
                let env = tiny(&spec, seed);
                let v = policy_value(&env).per_position;
                let e = exact_expectation(&env, &gmips(scope, dims))
                    .expect("expectation")
                    .per_position;
                let lhs: Vec<f64> = e.iter().zip(&v).map(|(a, b)| a - b).collect();
                let rhs = embedding_only_bias(&env, Projection::new(scope, dims)).expect("bias");
                emb_bias = nan_max(emb_bias, max_gap(&lhs, &rhs));
            }
        }
    }
    Outcome {
        pass: full_gap <= 1e-10 && emb_bias <= 1e-10,
        detail: format!(
            "full-scope variance gap {full_gap:.2e}, embedding-only bias {emb_bias:.2e}"
        ),
    }
}

fn pairwise_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let worst = (0..1000)
        .map(|_| {
            let m = rng.random_range(1..=8);
            pairwise_identity_check(m, &mut rng)
        })
        .fold(0.0, nan_max);
    Outcome {
        pass: worst < 1e-9,
        detail: format!("max |lhs - rhs| = {worst:.2e} over 1000 draws, m <= 8"),
    }
}

fn mean_one_weights() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut families = 0;
    for seed in SEEDS {
        let mut spec = tiny_spec(TinyReward::DirectEffect, seed);
        spec.category_counts = vec![2, 2];
        let env = tiny(&spec, seed);
        let mut specs: Vec<EstimatorSpec> = SCOPES.iter().map(|&s| gips(s)).collect();
        for scope in SCOPES {
            for dims in 1..=2 {
                specs.push(gmips(scope, dims));
            }
        }
        for name in ["independent", "cascade", "standard", "neighbor_1"] {
            let c = BehaviorMatrix::named(name, env.positions()).expect("behavior");
            specs.push(
                EstimatorSpec::new(EstimatorFamily::Aips).with_behavior(AipsBehavior::Fixed(c)),
            );
        }
        families = specs.len();
        for s in &specs {
            let m = expected_weight(&env, s).expect("weights");
            worst = nan_max(worst, m.iter().map(|v| (v - 1.0).abs()).fold(0.0, nan_max));
        }
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("max |E[w] - 1| = {worst:.2e} over {families} weight specs x 3 seeds"),
    }
}

fn sample_size_direction() -> Outcome {
    let res = sweep("sample_size.toml");
    let n = 8000.0;
    let (ms, ss) = (mse(&res, n, "MSIPS"), mse(&res, n, "snSIPS"));
    let (mr, sr) = (mse(&res, n, "MRIPS"), mse(&res, n, "snRIPS"));
    Outcome {
        pass: ss >= 2.0 * ms && mr < sr,
        detail: format!(
            "MSE MSIPS {ms:.4e} vs snSIPS {ss:.4e} (x{:.2}); MRIPS {mr:.4e} vs snRIPS {sr:.4e}",
            ss / ms
        ),
    }
}

fn unobserved_dims_direction() -> Outcome {
    let res = sweep("unobserved_dims.toml");
    let rows: Vec<_> = (0..10)
        .map(|u| res.row(u as f64, "MRIPS").expect("row").outcome.summary)
        .collect();
    let bias_drops = rows
        .windows(2)
        .filter(|w| w[1].squared_bias < w[0].squared_bias)
        .count();
    let var_rises = rows
        .windows(2)
        .filter(|w| w[1].variance > w[0].variance)
        .count();
    Outcome {
        pass: bias_drops <= 1 && var_rises <= 1,
        detail: format!(
            "squared-bias inversions {bias_drops}, variance inversions {var_rises}; bias^2 {:.2e} -> {:.2e}, var {:.2e} -> {:.2e}",
            rows[0].squared_bias, rows[9].squared_bias, rows[0].variance, rows[9].variance
        ),
    }
}

fn slope_benefit() -> Outcome {
    let res = sweep("slope.toml");
    let n = 2000.0;
    let (full, tuned) = (mse(&res, n, "MRIPS"), mse(&res, n, "MRIPS+slope"));
    Outcome {
        pass: tuned <= full,
        detail: format!("MSE MRIPS+slope {tuned:.4e} vs MRIPS full {full:.4e}"),
    }
}

fn deficient_support() -> Outcome {
    let res = sweep("deficient.toml");
    let get = |label| res.row(30.0, label).expect("row").outcome.summary;
    let (m, s) = (get("MSIPS"), get("SIPS"));
    Outcome {
        pass: m.bias.abs() < s.bias.abs() && m.mse < s.mse,
        detail: format!(
            "|rel bias| MSIPS {:.3e} vs SIPS {:.3e}; MSE {:.3e} vs {:.3e}",
            m.bias.abs(),
            s.bias.abs(),
            m.mse,
            s.mse
        ),
    }
}

fn factorized_marginals() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in SEEDS {
        let mut spec = tiny_spec(TinyReward::EmbeddingOnly, seed);
        spec.category_counts = vec![2, 2];
        let env = tiny(&spec, seed);
        let (na, ne, kk) = (
            env.rankings().len(),
            env.embeddings().len(),
            env.positions(),
        );
        for scope in SCOPES {
            for dims in 1..=2 {
                let w = atom_weights(&env, &gmips(scope, dims)).expect("weights");
                let lit = literal_marginal_weights(&env, Projection::new(scope, dims));
                for x in 0..env.contexts() {
                    for a in 0..na {
                        for e in 0..ne {
                            for k in 0..kk {
                                let got = w[((x * na + a) * ne + e) * kk + k];
                                if got.is_nan() {
                                    continue;
                                }
                                worst = nan_max(worst, (got - lit[(x * ne + e) * kk + k]).abs());
                            }
                        }
                    }
                }
            }
        }
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("max deviation {worst:.2e} over 3 scopes x 2 dims x 3 seeds"),
    }
}

fn determinism() -> Outcome {
    let runs = [
        (
            "sample_size.toml",
            vec!["replications=8", "values=[300, 600]", "value_budget=20000"],
        ),
        (
            "unobserved_dims.toml",
            vec![
                "replications=6",
                "values=[0, 4, 9]",
                "base.n=300",
                "value_budget=20000",
            ],
        ),
        (
            "slope.toml",
            vec!["replications=4", "base.n=300", "value_budget=20000"],
        ),
    ];
    let mut identical = 0;
    for (name, overrides) in &runs {
        let mut cfg = SweepConfig::load(&data(name)).expect("sweep config");
        for o in overrides {
            cfg.set(o).expect("override");
        }
        let once = run_sweep(&cfg)
            .expect("sweep")
            .to_csv_string()
            .expect("csv");
        // different pool size, same bytes
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .expect("pool");
        let twice = pool
            .install(|| run_sweep(&cfg))
            .expect("sweep")
            .to_csv_string()
            .expect("csv");
        identical += usize::from(once == twice);
    }
    Outcome {
        pass: identical == runs.len(),
        detail: format!(
            "{identical}/{} sweeps byte-identical across reruns",
            runs.len()
        ),
    }
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let minutes = |m: u64| Duration::from_secs(60 * m);
    let criteria: [Criterion; 12] = [
        (
            1,
            "exact unbiasedness under conforming rewards",
            Duration::from_secs(10),
            unbiasedness,
        ),
        (
            2,
            "variance gap against action-space weights",
            Duration::from_secs(30),
            action_variance_gap,
        ),
        (
            3,
            "bias identity with direct effects",
            Duration::from_secs(60),
            bias_identity,
        ),
        (
            4,
            "full-scope variance gap and embedding-only bias",
            minutes(5),
            appendix_identities,
        ),
        (
            5,
            "pairwise rearrangement identity",
            minutes(1),
            pairwise_identity,
        ),
        (
            6,
            "mean-one importance weights",
            minutes(1),
            mean_one_weights,
        ),
        (
            7,
            "marginal estimators win on sample-size sweep",
            minutes(10),
            sample_size_direction,
        ),
        (
            8,
            "bias up, variance down with hidden dims",
            minutes(15),
            unobserved_dims_direction,
        ),
        (9, "SLOPE beats full embeddings", minutes(10), slope_benefit),
        (
            10,
            "robustness to deficient logging support",
            minutes(10),
            deficient_support,
        ),
        (
            11,
            "factorized marginals match joint marginalization",
            minutes(1),
            factorized_marginals,
        ),
        (12, "byte-identical sweep reruns", minutes(5), determinism),
    ];
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let pass = out.pass && elapsed <= budget;
        failed += usize::from(!pass);
        println!(
            "{} criterion {id}: {name}: {} [{:.1}s of {}s]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
