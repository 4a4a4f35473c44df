use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::{count, Odometer};
use crate::policy::{FactorizedRankingPolicy, PolicyKind, PositionTable};
use crate::synth::{
    mean_reward, second_moment, BehaviorMatrix, EmbeddingModel, Environment, RewardBehavior,
};
use crate::types::{RewardKind, Scope};

/// Default bound on `|Pi(A)| * |Pi(E)|`.
pub const DEFAULT_CAP: u128 = 1_000_000;

/// The embedding coordinates a marginal weight at position `k` keeps: the
/// first `dims` dimensions of every position in `scope(k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Projection {
    pub scope: Scope,
    pub dims: usize,
}

impl Projection {
    pub fn new(scope: Scope, dims: usize) -> Self {
        Self { scope, dims }
    }

    /// Keeps a coordinate `(l, d)` for position `k`.
    pub fn keeps(&self, k: usize, l: usize, d: usize) -> bool {
        self.scope.contains(k, l) && d < self.dims
    }

    /// Number of distinct projected values at position `k`.
    pub fn key_count(&self, k: usize, positions: usize, cats: &[usize]) -> usize {
        (0..positions)
            .filter(|&l| self.scope.contains(k, l))
            .map(|_| cats[..self.dims].iter().product::<usize>())
            .product()
    }

    /// Mixed-radix index of the kept coordinates of a flat `K x D` embedding.
    pub fn key(&self, k: usize, e: &[usize], cats: &[usize]) -> usize {
        let dd = cats.len();
        let mut key = 0;
        for l in 0..e.len() / dd {
            for d in 0..dd {
                if self.keeps(k, l, d) {
                    key = key * cats[d] + e[l * dd + d];
                }
            }
        }
        key
    }
}

/// How a random tiny environment draws its reward means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TinyReward {
    /// `q_k` depends on `x` and the projected embedding only.
    Conforming(Projection),
    /// `q_k` depends on `(x, e)`; actions have no direct effect.
    EmbeddingOnly,
    /// `q_k` depends on `(x, a, e)`.
    DirectEffect,
}

/// Shape of a random tiny environment.
#[derive(Debug, Clone, PartialEq)]
pub struct TinySpec {
    pub contexts: usize,
    pub action_counts: Vec<usize>,
    pub category_counts: Vec<usize>,
    pub reward: TinyReward,
    pub kind: RewardKind,
    pub sigma_r: f64,
    /// Standard deviation of the policy logits.
    pub policy_scale: f64,
    pub same_policies: bool,
}

impl TinySpec {
    /// Two positions with two actions each, one binary embedding dimension
    /// and two contexts.
    pub fn small(reward: TinyReward) -> Self {
        Self {
            contexts: 2,
            action_counts: vec![2, 2],
            category_counts: vec![2],
            reward,
            kind: RewardKind::Gaussian,
            sigma_r: 0.5,
            policy_scale: 1.0,
            same_policies: false,
        }
    }
}

/// A finite environment whose every `(x, a, e)` atom can be enumerated.
///
/// Contexts are uniform. Rankings and embeddings are enumerated in
/// lexicographic order, last coordinate fastest; embeddings are flat
/// `K x D` rows.
#[derive(Debug, Clone)]
pub struct TinyEnv {
    pub logging: FactorizedRankingPolicy,
    pub target: FactorizedRankingPolicy,
    pub embedding: EmbeddingModel,
    pub kind: RewardKind,
    pub sigma_r: f64,
    /// Behavior matrix logged with every atom, for oracle AIPS.
    pub behavior: Option<BehaviorMatrix>,
    rankings: Vec<Vec<usize>>,
    embeddings: Vec<Vec<usize>>,
    /// `p(e | a)` at `[a * |Pi(E)| + e]`.
    emb_pmf: Vec<f64>,
    /// `E[r(k) | x, a, e]` at `[((x * |Pi(A)| + a) * |Pi(E)| + e) * K + k]`.
    mean: Vec<f64>,
    second: Vec<f64>,
}

impl TinyEnv {
    /// Builds an environment from reward logits or means `q(x, a, e, k)`
    /// passed through the reward link of `kind`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        logging: FactorizedRankingPolicy,
        target: FactorizedRankingPolicy,
        embedding: EmbeddingModel,
        kind: RewardKind,
        sigma_r: f64,
        cap: u128,
        q: impl Fn(usize, &[usize], &[usize], usize) -> f64,
    ) -> Result<Self> {
        Self::build(
            logging,
            target,
            embedding,
            kind,
            sigma_r,
            cap,
            |x, a, e, mean, second| {
                for k in 0..mean.len() {
                    let v = q(x, a, e, k);
                    mean[k] = mean_reward(v, kind);
                    second[k] = second_moment(v, kind, sigma_r);
                }
            },
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        logging: FactorizedRankingPolicy,
        target: FactorizedRankingPolicy,
        embedding: EmbeddingModel,
        kind: RewardKind,
        sigma_r: f64,
        cap: u128,
        mut moments: impl FnMut(usize, &[usize], &[usize], &mut [f64], &mut [f64]),
    ) -> Result<Self> {
        let actions = embedding.action_counts().to_vec();
        if logging.action_counts() != actions.as_slice()
            || target.action_counts() != actions.as_slice()
        {
            return Err(Error::Shape(
                "policy action counts differ from embedding model".into(),
            ));
        }
        if logging.contexts() != target.contexts() || logging.contexts() == 0 {
            return Err(Error::Shape(
                "policies must cover the same nonempty context set".into(),
            ));
        }
        let kk = embedding.positions();
        let dd = embedding.dims();
        let cats = embedding.category_counts().to_vec();
        let radices: Vec<usize> = (0..kk).flat_map(|_| cats.iter().copied()).collect();
        let atoms = count(&actions).saturating_mul(count(&radices));
        if atoms > cap {
            return Err(Error::TooLarge { atoms, cap });
        }
        let rankings = enumerate(&actions);
        let embeddings = enumerate(&radices);
        let mut emb_pmf = Vec::with_capacity(rankings.len() * embeddings.len());
        for a in &rankings {
            for e in &embeddings {
                emb_pmf.push(
                    (0..kk)
                        .map(|k| embedding.prefix_prob(k, a[k], &e[k * dd..(k + 1) * dd], dd))
                        .product(),
                );
            }
        }
        let contexts = logging.contexts();
        let len = contexts * rankings.len() * embeddings.len() * kk;
        let mut mean = vec![0.0; len];
        let mut second = vec![0.0; len];
        let mut slot = 0;
        for x in 0..contexts {
            for a in &rankings {
                for e in &embeddings {
                    moments(
                        x,
                        a,
                        e,
                        &mut mean[slot..slot + kk],
                        &mut second[slot..slot + kk],
                    );
                    slot += kk;
                }
            }
        }
        Ok(Self {
            logging,
            target,
            embedding,
            kind,
            sigma_r,
            behavior: None,
            rankings,
            embeddings,
            emb_pmf,
            mean,
            second,
        })
    }

    /// Random policies, embeddings and reward means of the given shape.
    pub fn random<R: Rng + ?Sized>(spec: &TinySpec, rng: &mut R) -> Result<Self> {
        let kk = spec.action_counts.len();
        let cats = &spec.category_counts;
        let logits = |rng: &mut R| -> Result<FactorizedRankingPolicy> {
            let per: usize = spec.action_counts.iter().sum();
            let values = (0..spec.contexts * per)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * spec.policy_scale)
                .collect();
            FactorizedRankingPolicy::softmax(
                &PositionTable::from_values(&spec.action_counts, values)?,
                1.0,
            )
        };
        let logging = logits(rng)?;
        let target = if spec.same_policies {
            logging.clone()
        } else {
            logits(rng)?
        };
        let embedding = EmbeddingModel::generate(&spec.action_counts, cats, rng)?;
        let per_position: usize = cats.iter().product();
        let n_rank = count(&spec.action_counts) as usize;
        let n_emb = per_position.saturating_pow(kk as u32);
        let table_len = match spec.reward {
            TinyReward::Conforming(p) => {
                if p.dims == 0 || p.dims > cats.len() {
                    return Err(Error::InvalidArgument(format!(
                        "projection keeps {} dims",
                        p.dims
                    )));
                }
                spec.contexts * kk * (0..kk).map(|k| p.key_count(k, kk, cats)).max().unwrap_or(1)
            }
            TinyReward::EmbeddingOnly => spec.contexts * kk * n_emb,
            TinyReward::DirectEffect => spec.contexts * kk * n_emb.saturating_mul(n_rank),
        };
        if table_len as u128 > DEFAULT_CAP * 64 {
            return Err(Error::TooLarge {
                atoms: table_len as u128,
                cap: DEFAULT_CAP * 64,
            });
        }
        let table: Vec<f64> = (0..table_len).map(|_| rng.random::<f64>()).collect();
        let cats = cats.clone();
        let stride = table_len / (spec.contexts * kk);
        Self::new(
            logging,
            target,
            embedding,
            spec.kind,
            spec.sigma_r,
            DEFAULT_CAP,
            |x, a, e, k| {
                let idx = match spec.reward {
                    TinyReward::Conforming(p) => p.key(k, e, &cats),
                    TinyReward::EmbeddingOnly => flat_index(e, &cats),
                    TinyReward::DirectEffect => {
                        rank_index(a, &spec.action_counts) * n_emb + flat_index(e, &cats)
                    }
                };
                table[(x * kk + k) * stride + idx]
            },
        )
    }

    /// The finite-context environment `env` with rewards averaged over the
    /// behavior distribution.
    pub fn from_environment(env: &Environment, cap: u128) -> Result<Self> {
        let contexts = env.contexts.as_ref().ok_or_else(|| {
            Error::InvalidArgument("tiny environment needs finite contexts".into())
        })?;
        let actions = env.action_counts().to_vec();
        let mut logging = PositionTable::zeros(0, &actions);
        let mut target = PositionTable::zeros(0, &actions);
        let views: Vec<_> = contexts.iter().map(|x| env.view(&x.0)).collect();
        for v in &views {
            logging.push_block(&v.logging);
            target.push_block(&v.target);
        }
        let kk = env.positions();
        let dd = env.dims();
        let kind = env.reward.kind;
        let sigma_r = env.reward.sigma_r;
        let mut q = vec![0.0; kk];
        let mut out = Self::build(
            FactorizedRankingPolicy::from_table(PolicyKind::Tabular, logging)?,
            FactorizedRankingPolicy::from_table(PolicyKind::Tabular, target)?,
            env.embedding.clone(),
            kind,
            sigma_r,
            cap,
            |x, a, e, mean, second| {
                let emb = crate::types::RankingEmbedding::new(kk, dd, e.to_vec())
                    .expect("enumerated shape");
                mean.fill(0.0);
                second.fill(0.0);
                for (z, &pz) in views[x].behavior.iter().enumerate() {
                    env.interaction(&views[x], a, &emb, z, &mut q);
                    for k in 0..kk {
                        mean[k] += pz * mean_reward(q[k], kind);
                        second[k] += pz * second_moment(q[k], kind, sigma_r);
                    }
                }
            },
        )?;
        if let RewardBehavior::Fixed(_) = env.reward.behavior {
            out.behavior = Some(env.behaviors[0].clone());
        }
        Ok(out)
    }

    /// Nested environments that differ only in `|A_k|`: uniform logging,
    /// epsilon-greedy target on action 0, rewards depending on `(x, e(k))`.
    /// Action `a` has the same embedding row in every member.
    pub fn action_growth_family(seed: u64, sizes: &[usize]) -> Result<Vec<Self>> {
        use rand::SeedableRng;
        let max = sizes.iter().copied().max().unwrap_or(1);
        let (kk, contexts, epsilon) = (2, 2, 0.3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let alpha: Vec<Vec<[f64; 2]>> = (0..kk)
            .map(|_| {
                (0..max)
                    .map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)])
                    .collect()
            })
            .collect();
        let table: Vec<f64> = (0..contexts * kk * 2).map(|_| rng.random()).collect();
        sizes
            .iter()
            .map(|&n| {
                let counts = vec![n; kk];
                let flat: Vec<f64> = alpha
                    .iter()
                    .flat_map(|pos| pos[..n].iter().flatten().copied())
                    .collect();
                let embedding = EmbeddingModel::from_alpha(&counts, &[2], flat)?;
                let logging = FactorizedRankingPolicy::uniform(contexts, &counts);
                let mut base = PositionTable::zeros(contexts, &counts);
                for x in 0..contexts {
                    for k in 0..kk {
                        base.row_mut(x, k)[0] = 1.0;
                    }
                }
                let target = FactorizedRankingPolicy::epsilon_greedy(&base, epsilon)?;
                Self::new(
                    logging,
                    target,
                    embedding,
                    RewardKind::Gaussian,
                    0.5,
                    DEFAULT_CAP,
                    |x, _, e, k| table[(x * kk + k) * 2 + e[k]],
                )
            })
            .collect()
    }

    pub fn contexts(&self) -> usize {
        self.logging.contexts()
    }

    pub fn positions(&self) -> usize {
        self.embedding.positions()
    }

    pub fn dims(&self) -> usize {
        self.embedding.dims()
    }

    pub fn category_counts(&self) -> &[usize] {
        self.embedding.category_counts()
    }

    pub fn rankings(&self) -> &[Vec<usize>] {
        &self.rankings
    }

    pub fn embeddings(&self) -> &[Vec<usize>] {
        &self.embeddings
    }

    /// `p(x)`; contexts are uniform.
    pub fn context_prob(&self) -> f64 {
        1.0 / self.contexts() as f64
    }

    /// `p(e | a)` by enumeration indices.
    pub fn embedding_prob(&self, a: usize, e: usize) -> f64 {
        self.emb_pmf[a * self.embeddings.len() + e]
    }

    /// `pi(a | x)` of a ranking index.
    pub fn ranking_prob(&self, policy: &FactorizedRankingPolicy, x: usize, a: usize) -> f64 {
        self.rankings[a]
            .iter()
            .enumerate()
            .map(|(k, &ak)| policy.prob(x, k, ak))
            .product()
    }

    fn slot(&self, x: usize, a: usize, e: usize) -> usize {
        ((x * self.rankings.len() + a) * self.embeddings.len() + e) * self.positions()
    }

    /// `E[r(k) | x, a, e]` for every `k`.
    pub fn mean(&self, x: usize, a: usize, e: usize) -> &[f64] {
        let s = self.slot(x, a, e);
        &self.mean[s..s + self.positions()]
    }

    /// `E[r(k)^2 | x, a, e]` for every `k`.
    pub fn second(&self, x: usize, a: usize, e: usize) -> &[f64] {
        let s = self.slot(x, a, e);
        &self.second[s..s + self.positions()]
    }
}

fn enumerate(radices: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut it = Odometer::new(radices);
    while let Some(t) = it.advance() {
        out.push(t.to_vec());
    }
    out
}

fn rank_index(a: &[usize], counts: &[usize]) -> usize {
    a.iter().zip(counts).fold(0, |acc, (&v, &c)| acc * c + v)
}

fn flat_index(e: &[usize], cats: &[usize]) -> usize {
    let dd = cats.len();
    e.iter()
        .enumerate()
        .fold(0, |acc, (i, &v)| acc * cats[i % dd] + v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn distributions_are_normalized() {
        let spec = TinySpec::small(TinyReward::DirectEffect);
        let env = TinyEnv::random(&spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(env.rankings().len(), 4);
        assert_eq!(env.embeddings().len(), 4);
        for a in 0..4 {
            let s: f64 = (0..4).map(|e| env.embedding_prob(a, e)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        for x in 0..2 {
            let s: f64 = (0..4).map(|a| env.ranking_prob(&env.logging, x, a)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cap_is_enforced() {
        let mut spec = TinySpec::small(TinyReward::EmbeddingOnly);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let env = TinyEnv::random(&spec, &mut rng).unwrap();
        let err = TinyEnv::new(
            env.logging.clone(),
            env.target.clone(),
            env.embedding.clone(),
            RewardKind::Gaussian,
            0.1,
            15,
            |_, _, _, _| 0.0,
        );
        assert!(matches!(err, Err(Error::TooLarge { atoms: 16, cap: 15 })));
        spec.action_counts = vec![200, 200, 200];
        spec.category_counts = vec![4, 4];
        assert!(TinyEnv::random(&spec, &mut rng).is_err());
    }

    #[test]
    fn projection_keys() {
        let cats = [2, 3];
        let p = Projection::new(Scope::Prefix, 1);
        // e = [(1, 2), (0, 1)]: prefix of position 1 keeps e(0,0) and e(1,0)
        assert_eq!(p.key(1, &[1, 2, 0, 1], &cats), 2);
        assert_eq!(p.key(0, &[1, 2, 0, 1], &cats), 1);
        assert_eq!(p.key_count(1, 2, &cats), 4);
        let full = Projection::new(Scope::Full, 2);
        assert_eq!(full.key_count(0, 2, &cats), 36);
        assert_eq!(
            full.key(0, &[1, 2, 0, 1], &cats),
            flat_index(&[1, 2, 0, 1], &cats)
        );
    }

    #[test]
    fn conforming_means_depend_on_projection_only() {
        let p = Projection::new(Scope::Position, 1);
        let spec = TinySpec {
            category_counts: vec![2, 2],
            ..TinySpec::small(TinyReward::Conforming(p))
        };
        let env = TinyEnv::random(&spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let cats = env.category_counts().to_vec();
        for x in 0..2 {
            for (ai, _) in env.rankings().iter().enumerate() {
                for (ei, e) in env.embeddings().iter().enumerate() {
                    for (ej, f) in env.embeddings().iter().enumerate() {
                        for k in 0..2 {
                            if p.key(k, e, &cats) == p.key(k, f, &cats) {
                                assert_eq!(env.mean(x, ai, ei)[k], env.mean(x, 0, ej)[k]);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn from_environment_matches_exact_value() {
        let cfg = ExperimentConfig {
            positions: 2,
            actions: 3,
            dims: 1,
            finite_contexts: 3,
            ..Default::default()
        };
        let env = Environment::new(&cfg).unwrap();
        let tiny = TinyEnv::from_environment(&env, DEFAULT_CAP).unwrap();
        let exact = env
            .true_value(crate::synth::ValueMode::Exact, 1_000_000, 0)
            .unwrap();
        let v = super::super::policy_value(&tiny);
        assert!(
            (v.total - exact.value).abs() < 1e-12,
            "{} vs {}",
            v.total,
            exact.value
        );
        assert!(tiny.behavior.is_some());
    }

    #[test]
    fn growth_family_is_nested() {
        let fam = TinyEnv::action_growth_family(7, &[2, 3]).unwrap();
        assert_eq!(fam[0].embedding.row(1, 1, 0), fam[1].embedding.row(1, 1, 0));
        assert!((fam[1].target.prob(0, 0, 0) - 0.8).abs() < 1e-12);
    }
}
