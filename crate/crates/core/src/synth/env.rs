use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::behavior::{BehaviorDistribution, BehaviorMatrix};
use super::embedding::EmbeddingModel;
use super::reward::{
    interact, mean_reward, sample_reward, ContextTerms, MatrixBase, RewardBehavior, RewardModel,
};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::grid::{count, Odometer};
use crate::policy::{
    epsilon_greedy_row, sample_categorical, softmax_row, FactorizedRankingPolicy, PolicyKind,
    PositionTable,
};
use crate::types::{
    Context, LoggedDataset, LoggedSample, RankingAction, RankingEmbedding, RewardVector,
};

/// `n` contexts with i.i.d. standard-normal entries.
pub fn gen_contexts<R: Rng + ?Sized>(n: usize, dim_x: usize, rng: &mut R) -> Vec<Context> {
    (0..n)
        .map(|_| Context((0..dim_x).map(|_| rng.sample(StandardNormal)).collect()))
        .collect()
}

/// Frozen parameters of one synthetic experiment.
///
/// Everything here is a pure function of the config (including its seed);
/// logged data is drawn from it with a separate generator.
#[derive(Debug, Clone)]
pub struct Environment {
    pub config: ExperimentConfig,
    pub embedding: EmbeddingModel,
    pub reward: RewardModel,
    /// Behaviors referenced by logged `behavior_id`s.
    pub behaviors: Vec<BehaviorMatrix>,
    /// Actions with zero logging probability, per position.
    pub removed: Vec<Vec<usize>>,
    /// Uniformly weighted context support, if finite.
    pub contexts: Option<Vec<Context>>,
    offsets: Vec<usize>,
}

/// Everything the generator and the value computation need at one context.
#[derive(Debug, Clone)]
pub struct ContextView {
    pub terms: ContextTerms,
    /// `q̄(x, a)` for every position-action, packed by position.
    pub base: Vec<f64>,
    pub logging: Vec<f64>,
    pub target: Vec<f64>,
    /// `p(c_z | x)` over [`Environment::behaviors`].
    pub behavior: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueMode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValue {
    pub value: f64,
    /// Zero in exact mode.
    pub std_error: f64,
    pub per_position: Vec<f64>,
    pub mode: ValueMode,
}

const MC_CHUNK: usize = 1 << 14;

impl Environment {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let actions = cfg.action_counts();
        let cats = cfg.category_counts();
        let k = cfg.positions;

        let embedding = EmbeddingModel::generate(&actions, &cats, &mut rng)?;
        let mut reward = RewardModel::generate(
            cfg.dim_x,
            k,
            &cats,
            cfg.reward.kind,
            cfg.reward.noise,
            cfg.interaction_max(),
            RewardBehavior::Fixed(Default::default()),
            &mut rng,
        )?;
        let behaviors = match cfg.reward.behavior.fixed() {
            Some(kind) => {
                reward.behavior = RewardBehavior::Fixed(kind);
                vec![kind.matrix(k)]
            }
            None => {
                let catalogue = cfg
                    .reward
                    .catalogue
                    .iter()
                    .map(|n| BehaviorMatrix::named(n, k))
                    .collect::<Result<Vec<_>>>()?;
                let distribution = BehaviorDistribution::generate(
                    catalogue.clone(),
                    cfg.dim_x,
                    cfg.reward.lambda,
                    &mut rng,
                )?;
                reward.behavior = RewardBehavior::Matrix {
                    distribution,
                    base: cfg.reward.matrix_base,
                };
                catalogue
            }
        };
        let removed = actions
            .iter()
            .map(|&a| {
                let mut v = index::sample(&mut rng, a, cfg.logging.deficient_actions).into_vec();
                v.sort_unstable();
                v
            })
            .collect();
        let contexts = (cfg.finite_contexts > 0)
            .then(|| gen_contexts(cfg.finite_contexts, cfg.dim_x, &mut rng));

        if let Some(eta) = &cfg.reward.eta {
            let s: f64 = eta.iter().sum();
            if s <= 0.0 {
                return Err(Error::Config("eta must have positive sum".into()));
            }
            reward.eta = eta.iter().map(|v| v / s).collect();
        }
        if let Some(g) = &cfg.reward.interaction {
            reward.g = g.iter().flatten().copied().collect();
        }

        let mut offsets = Vec::with_capacity(k);
        let mut acc = 0;
        for &a in &actions {
            offsets.push(acc);
            acc += a;
        }
        Ok(Self {
            config: cfg.clone(),
            embedding,
            reward,
            behaviors,
            removed,
            contexts,
            offsets,
        })
    }

    pub fn positions(&self) -> usize {
        self.embedding.positions()
    }

    pub fn dims(&self) -> usize {
        self.embedding.dims()
    }

    pub fn action_counts(&self) -> &[usize] {
        self.embedding.action_counts()
    }

    #[inline]
    pub fn offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    pub fn draw_context<R: Rng + ?Sized>(&self, rng: &mut R) -> Context {
        match &self.contexts {
            Some(list) => list[rng.random_range(0..list.len())].clone(),
            None => gen_contexts(1, self.config.dim_x, rng).remove(0),
        }
    }

    /// Base rewards, both policies and the behavior distribution at `x`.
    pub fn view(&self, x: &[f64]) -> ContextView {
        let terms = ContextTerms::new(&self.reward, x);
        let base = terms.action_block(&self.embedding);
        let mut logging = vec![0.0; base.len()];
        let mut target = vec![0.0; base.len()];
        for (k, &n) in self.action_counts().iter().enumerate() {
            let span = self.offsets[k]..self.offsets[k] + n;
            let row = &mut logging[span.clone()];
            softmax_row(&base[span.clone()], self.config.logging.beta, row);
            if !self.removed[k].is_empty() {
                for &a in &self.removed[k] {
                    row[a] = 0.0;
                }
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= s);
            }
            epsilon_greedy_row(
                &base[span.clone()],
                self.config.target.epsilon,
                &mut target[span],
            );
        }
        let behavior = match &self.reward.behavior {
            RewardBehavior::Fixed(_) => vec![1.0],
            RewardBehavior::Matrix { distribution, .. } => distribution.probs(x),
        };
        ContextView {
            terms,
            base,
            logging,
            target,
            behavior,
        }
    }

    /// Interaction rewards `q_k` (before the reward link) of one ranking
    /// under behavior `z`.
    pub fn interaction(
        &self,
        view: &ContextView,
        a: &[usize],
        e: &RankingEmbedding,
        z: usize,
        out: &mut [f64],
    ) {
        let use_action = matches!(
            self.reward.behavior,
            RewardBehavior::Matrix {
                base: MatrixBase::Action,
                ..
            }
        );
        let base: Vec<f64> = (0..a.len())
            .map(|k| {
                if use_action {
                    view.base[self.offsets[k] + a[k]]
                } else {
                    view.terms.embedding(e.row(k))
                }
            })
            .collect();
        interact(&base, &self.behaviors[z], &self.reward, out);
    }

    /// Draws `n` logged samples `(x, a, e, r)` under the logging policy.
    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<LoggedDataset> {
        let k = self.positions();
        let d = self.dims();
        let actions = self.action_counts().to_vec();
        let mut logging = PositionTable::zeros(0, &actions);
        let mut target = PositionTable::zeros(0, &actions);
        logging.reserve_contexts(n);
        target.reserve_contexts(n);
        let mut samples = Vec::with_capacity(n);
        let mut q = vec![0.0; k];
        for _ in 0..n {
            let x = self.draw_context(rng);
            let view = self.view(&x.0);
            let a: Vec<usize> = (0..k)
                .map(|pos| {
                    let span = self.offsets[pos]..self.offsets[pos] + actions[pos];
                    sample_categorical(&view.logging[span], rng)
                })
                .collect();
            let mut cats = vec![0; k * d];
            for pos in 0..k {
                self.embedding
                    .sample_row(pos, a[pos], rng, &mut cats[pos * d..(pos + 1) * d]);
            }
            let e = RankingEmbedding::new(k, d, cats)?;
            let z = if view.behavior.len() == 1 {
                0
            } else {
                sample_categorical(&view.behavior, rng)
            };
            self.interaction(&view, &a, &e, z, &mut q);
            let r = q
                .iter()
                .map(|&qk| sample_reward(qk, self.reward.kind, self.reward.sigma_r, rng))
                .collect();
            logging.push_block(&view.logging);
            target.push_block(&view.target);
            samples.push(LoggedSample {
                context: x,
                action: RankingAction(a),
                embedding: e,
                reward: RewardVector(r),
                behavior_id: Some(z),
            });
        }
        Ok(LoggedDataset {
            samples,
            logging_policy: FactorizedRankingPolicy::from_table(
                PolicyKind::Softmax {
                    beta: self.config.logging.beta,
                },
                logging,
            )?,
            target_policy: FactorizedRankingPolicy::from_table(
                PolicyKind::EpsilonGreedy {
                    epsilon: self.config.target.epsilon,
                },
                target,
            )?,
            embedding_model: self.embedding.clone(),
            reward_kind: self.reward.kind,
            behaviors: self.behaviors.clone(),
            config_fingerprint: self.config.fingerprint(),
        })
    }

    /// Number of `(x, a, e, z)` atoms exact evaluation would visit.
    pub fn exact_atoms(&self) -> Option<u128> {
        let contexts = self.contexts.as_ref()?.len();
        let per_pos: usize = self.embedding.category_counts().iter().product();
        let rankings = count(self.action_counts());
        let embeds = count(&vec![per_pos; self.positions()]);
        Some(
            (contexts as u128)
                .saturating_mul(rankings)
                .saturating_mul(embeds)
                .saturating_mul(self.behaviors.len() as u128),
        )
    }

    /// `V(pi) = sum_k E_{x, a ~ pi, e, c}[E[r(k)]]` of the target policy.
    ///
    /// Exact mode enumerates the finite context set and every ranking,
    /// embedding and behavior, refusing more than `budget` atoms. Monte Carlo
    /// mode averages expected rewards over `budget` on-policy draws.
    pub fn true_value(&self, mode: ValueMode, budget: u64, seed: u64) -> Result<PolicyValue> {
        match mode {
            ValueMode::Exact => self.exact_value(budget as u128),
            ValueMode::MonteCarlo => Ok(self.monte_carlo_value(budget, seed)),
        }
    }

    /// Exact when the context set is finite and small enough, else Monte Carlo.
    pub fn true_value_auto(&self, budget: u64, seed: u64) -> Result<PolicyValue> {
        match self.exact_atoms() {
            Some(atoms) if atoms <= budget as u128 => self.exact_value(budget as u128),
            _ => Ok(self.monte_carlo_value(budget, seed)),
        }
    }

    fn exact_value(&self, cap: u128) -> Result<PolicyValue> {
        let contexts = self.contexts.as_ref().ok_or_else(|| {
            Error::InvalidArgument("exact value needs a finite context set".into())
        })?;
        let atoms = self.exact_atoms().unwrap_or(u128::MAX);
        if atoms > cap {
            return Err(Error::TooLarge { atoms, cap });
        }
        let k = self.positions();
        let d = self.dims();
        let cats = self.embedding.category_counts();
        let row_radices: Vec<usize> = (0..k).flat_map(|_| cats.iter().copied()).collect();
        let mut per_position = vec![0.0; k];
        let mut q = vec![0.0; k];
        let px = 1.0 / contexts.len() as f64;
        for x in contexts {
            let view = self.view(&x.0);
            let mut ranks = Odometer::new(self.action_counts());
            while let Some(a) = ranks.advance() {
                let pa: f64 = (0..k)
                    .map(|pos| view.target[self.offsets[pos] + a[pos]])
                    .product();
                if pa == 0.0 {
                    continue;
                }
                let a = a.to_vec();
                let mut embeds = Odometer::new(&row_radices);
                while let Some(flat) = embeds.advance() {
                    let pe: f64 = (0..k)
                        .map(|pos| {
                            self.embedding.prefix_prob(
                                pos,
                                a[pos],
                                &flat[pos * d..(pos + 1) * d],
                                d,
                            )
                        })
                        .product();
                    if pe == 0.0 {
                        continue;
                    }
                    let e = RankingEmbedding::new(k, d, flat.to_vec())?;
                    for (z, &pz) in view.behavior.iter().enumerate() {
                        self.interaction(&view, &a, &e, z, &mut q);
                        let w = px * pa * pe * pz;
                        for pos in 0..k {
                            per_position[pos] += w * mean_reward(q[pos], self.reward.kind);
                        }
                    }
                }
            }
        }
        Ok(PolicyValue {
            value: per_position.iter().sum(),
            std_error: 0.0,
            per_position,
            mode: ValueMode::Exact,
        })
    }

    fn monte_carlo_value(&self, budget: u64, seed: u64) -> PolicyValue {
        let k = self.positions();
        let d = self.dims();
        let budget = budget.max(2) as usize;
        let chunks = budget.div_ceil(MC_CHUNK);
        let partial: Vec<(Vec<f64>, f64, f64)> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(c as u64);
                let len = MC_CHUNK.min(budget - c * MC_CHUNK);
                let mut pos_sum = vec![0.0; k];
                let (mut s1, mut s2) = (0.0, 0.0);
                let mut q = vec![0.0; k];
                let mut cats = vec![0; k * d];
                for _ in 0..len {
                    let x = self.draw_context(&mut rng);
                    let view = self.view(&x.0);
                    let a: Vec<usize> = (0..k)
                        .map(|pos| {
                            let span =
                                self.offsets[pos]..self.offsets[pos] + self.action_counts()[pos];
                            sample_categorical(&view.target[span], &mut rng)
                        })
                        .collect();
                    for pos in 0..k {
                        self.embedding.sample_row(
                            pos,
                            a[pos],
                            &mut rng,
                            &mut cats[pos * d..(pos + 1) * d],
                        );
                    }
                    let e = RankingEmbedding::new(k, d, cats.clone()).expect("shape");
                    let z = if view.behavior.len() == 1 {
                        0
                    } else {
                        sample_categorical(&view.behavior, &mut rng)
                    };
                    self.interaction(&view, &a, &e, z, &mut q);
                    let mut total = 0.0;
                    for pos in 0..k {
                        let m = mean_reward(q[pos], self.reward.kind);
                        pos_sum[pos] += m;
                        total += m;
                    }
                    s1 += total;
                    s2 += total * total;
                }
                (pos_sum, s1, s2)
            })
            .collect();
        let mut per_position = vec![0.0; k];
        let (mut s1, mut s2) = (0.0, 0.0);
        for (p, a, b) in partial {
            for (acc, v) in per_position.iter_mut().zip(p) {
                *acc += v;
            }
            s1 += a;
            s2 += b;
        }
        let n = budget as f64;
        per_position.iter_mut().for_each(|v| *v /= n);
        let mean = s1 / n;
        let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
        PolicyValue {
            value: mean,
            std_error: (var / n).sqrt(),
            per_position,
            mode: ValueMode::MonteCarlo,
        }
    }
}

/// Builds the environment of `cfg` and draws `cfg.n` samples.
pub fn generate_log<R: Rng + ?Sized>(cfg: &ExperimentConfig, rng: &mut R) -> Result<LoggedDataset> {
    Environment::new(cfg)?.generate(cfg.n, rng)
}

/// Policy value of the target policy configured in `cfg`.
pub fn true_policy_value(
    cfg: &ExperimentConfig,
    mode: ValueMode,
    budget: u64,
    seed: u64,
) -> Result<PolicyValue> {
    Environment::new(cfg)?.true_value(mode, budget, seed)
}
