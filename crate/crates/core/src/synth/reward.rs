use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::behavior::{dot, BehaviorDistribution, BehaviorKind, BehaviorMatrix};
use super::embedding::EmbeddingModel;
use crate::error::{Error, Result};
use crate::types::{RankingAction, RankingEmbedding, RewardKind};

/// Which per-position base reward the behavior-matrix model interacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixBase {
    /// `q̄(x, a(l))`, the embedding-averaged reward of the placed action.
    #[default]
    Action,
    /// `q̄(x, e(l))`, the reward of the sampled embedding.
    Embedding,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RewardBehavior {
    Fixed(BehaviorKind),
    /// A behavior matrix is drawn per sample from `distribution`.
    Matrix {
        distribution: BehaviorDistribution,
        base: MatrixBase,
    },
}

/// Parameters of the base and interaction rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    /// Dimension weights, non-negative and summing to one.
    pub eta: Vec<f64>,
    /// `dim_x x dim_x`, row-major.
    pub m: Vec<f64>,
    pub theta_x: Vec<f64>,
    pub theta_e: Vec<f64>,
    /// `latent[d][v]` is the vector `x_{e_d}` of category `v` in dimension `d`.
    pub latent: Vec<Vec<Vec<f64>>>,
    /// `K x K` interaction magnitudes, row-major; diagonal unused.
    pub g: Vec<f64>,
    pub sigma_r: f64,
    pub kind: RewardKind,
    pub behavior: RewardBehavior,
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl RewardModel {
    /// Draws `eta ~ U[0,1]` (normalized), `M, theta_x, theta_e` and the
    /// latents from `N(0, 1)`, and `G ~ U[0, g_max]`, in that order.
    #[allow(clippy::too_many_arguments)]
    pub fn generate<R: Rng + ?Sized>(
        dim_x: usize,
        positions: usize,
        category_counts: &[usize],
        kind: RewardKind,
        sigma_r: f64,
        g_max: f64,
        behavior: RewardBehavior,
        rng: &mut R,
    ) -> Result<Self> {
        let mut eta: Vec<f64> = (0..category_counts.len())
            .map(|_| rng.random::<f64>())
            .collect();
        let s: f64 = eta.iter().sum();
        if s > 0.0 {
            eta.iter_mut().for_each(|v| *v /= s);
        } else {
            eta.fill(1.0 / category_counts.len() as f64);
        }
        let mut normal = || -> f64 { rng.sample(StandardNormal) };
        let m = (0..dim_x * dim_x).map(|_| normal()).collect();
        let theta_x = (0..dim_x).map(|_| normal()).collect();
        let theta_e = (0..dim_x).map(|_| normal()).collect();
        let latent = category_counts
            .iter()
            .map(|&c| {
                (0..c)
                    .map(|_| (0..dim_x).map(|_| normal()).collect())
                    .collect()
            })
            .collect();
        let g = (0..positions * positions)
            .map(|_| rng.random::<f64>() * g_max)
            .collect();
        let model = Self {
            eta,
            m,
            theta_x,
            theta_e,
            latent,
            g,
            sigma_r,
            kind,
            behavior,
        };
        model.validate(positions)?;
        Ok(model)
    }

    pub fn validate(&self, positions: usize) -> Result<()> {
        let dim_x = self.theta_x.len();
        if self.m.len() != dim_x * dim_x || self.theta_e.len() != dim_x {
            return Err(Error::Shape("reward parameters disagree on dim_x".into()));
        }
        if self.eta.len() != self.latent.len() {
            return Err(Error::Shape("eta and latent disagree on D".into()));
        }
        if self.latent.iter().flatten().any(|v| v.len() != dim_x) {
            return Err(Error::Shape("latent vectors must have length dim_x".into()));
        }
        if self.g.len() != positions * positions {
            return Err(Error::Shape(format!("G must be {positions}x{positions}")));
        }
        if self.sigma_r.is_nan() || self.sigma_r < 0.0 {
            return Err(Error::InvalidArgument("sigma_r must be >= 0".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.eta.len()
    }

    pub fn positions(&self) -> usize {
        (self.g.len() as f64).sqrt().round() as usize
    }

    #[inline]
    pub fn g(&self, k: usize, l: usize) -> f64 {
        self.g[k * self.positions() + l]
    }

    /// `x^T M` as a vector.
    fn x_m(&self, x: &[f64]) -> Vec<f64> {
        let dim = x.len();
        let mut u = vec![0.0; dim];
        for (i, xi) in x.iter().enumerate() {
            for (j, uj) in u.iter_mut().enumerate() {
                *uj += xi * self.m[i * dim + j];
            }
        }
        u
    }
}

/// `q̄(x, e) = sum_d eta_d * sigmoid(x^T M x_{e_d} + theta_x^T x + theta_e^T x_{e_d})`.
pub fn base_reward(x: &[f64], e_row: &[usize], model: &RewardModel) -> f64 {
    ContextTerms::new(model, x).embedding(e_row)
}

/// `q̄(x, a) = E_{p(e|a)} q̄(x, e)`, exact.
pub fn base_reward_action(
    x: &[f64],
    k: usize,
    a: usize,
    model: &RewardModel,
    emb: &EmbeddingModel,
) -> f64 {
    ContextTerms::new(model, x).action(emb, k, a)
}

/// Per-context cache of `eta_d * sigmoid(term(d, v))` for all `(d, v)`.
#[derive(Debug, Clone)]
pub struct ContextTerms {
    terms: Vec<Vec<f64>>,
}

impl ContextTerms {
    pub fn new(model: &RewardModel, x: &[f64]) -> Self {
        let u = model.x_m(x);
        let tx = dot(&model.theta_x, x);
        let terms = model
            .latent
            .iter()
            .zip(&model.eta)
            .map(|(cats, &eta)| {
                cats.iter()
                    .map(|l| eta * sigmoid(dot(&u, l) + tx + dot(&model.theta_e, l)))
                    .collect()
            })
            .collect();
        Self { terms }
    }

    #[inline]
    pub fn embedding(&self, e_row: &[usize]) -> f64 {
        e_row.iter().zip(&self.terms).map(|(&v, t)| t[v]).sum()
    }

    /// Dimension-wise expectation; valid because `q̄` is additive over `d`.
    pub fn action(&self, emb: &EmbeddingModel, k: usize, a: usize) -> f64 {
        self.terms
            .iter()
            .enumerate()
            .map(|(d, t)| dot(emb.row(k, a, d), t))
            .sum()
    }

    /// Base rewards of every action at every position, packed per position.
    pub fn action_block(&self, emb: &EmbeddingModel) -> Vec<f64> {
        let mut out = Vec::with_capacity(emb.action_counts().iter().sum());
        for (k, &n) in emb.action_counts().iter().enumerate() {
            for a in 0..n {
                out.push(self.action(emb, k, a));
            }
        }
        out
    }
}

/// `q_k = c(k,k) b_k + sum_{l != k} c(k,l) G(k,l) / |k - l| * b_l`.
pub fn interact(base: &[f64], c: &BehaviorMatrix, model: &RewardModel, out: &mut [f64]) {
    let kk = base.len();
    for (k, o) in out.iter_mut().enumerate().take(kk) {
        let mut q = if c.get(k, k) { base[k] } else { 0.0 };
        for (l, &b) in base.iter().enumerate() {
            if l != k && c.get(k, l) {
                q += model.g[k * kk + l] / k.abs_diff(l) as f64 * b;
            }
        }
        *o = q;
    }
}

/// Interaction reward of an embedding ranking under a fixed behavior.
pub fn expected_reward_embedding(
    x: &[f64],
    e: &RankingEmbedding,
    behavior: BehaviorKind,
    model: &RewardModel,
) -> Vec<f64> {
    let terms = ContextTerms::new(model, x);
    let base: Vec<f64> = (0..e.positions())
        .map(|k| terms.embedding(e.row(k)))
        .collect();
    let mut out = vec![0.0; base.len()];
    interact(&base, &behavior.matrix(base.len()), model, &mut out);
    out
}

/// Interaction reward of an action ranking under behavior matrix `c`, on
/// action-level base rewards.
pub fn expected_reward_matrix(
    x: &[f64],
    a: &RankingAction,
    c: &BehaviorMatrix,
    model: &RewardModel,
    emb: &EmbeddingModel,
) -> Vec<f64> {
    let terms = ContextTerms::new(model, x);
    let base: Vec<f64> =
        a.0.iter()
            .enumerate()
            .map(|(k, &ak)| terms.action(emb, k, ak))
            .collect();
    let mut out = vec![0.0; base.len()];
    interact(&base, c, model, &mut out);
    out
}

/// `E[r | q]`: identity for Gaussian rewards, sigmoid for Bernoulli.
#[inline]
pub fn mean_reward(q: f64, kind: RewardKind) -> f64 {
    match kind {
        RewardKind::Gaussian => q,
        RewardKind::Bernoulli => sigmoid(q),
    }
}

/// `E[r^2 | q]`.
#[inline]
pub fn second_moment(q: f64, kind: RewardKind, sigma_r: f64) -> f64 {
    match kind {
        RewardKind::Gaussian => q * q + sigma_r * sigma_r,
        RewardKind::Bernoulli => sigmoid(q),
    }
}

pub fn sample_reward<R: Rng + ?Sized>(q: f64, kind: RewardKind, sigma_r: f64, rng: &mut R) -> f64 {
    match kind {
        RewardKind::Gaussian => {
            if sigma_r == 0.0 {
                q
            } else {
                Normal::new(q, sigma_r).expect("finite sigma").sample(rng)
            }
        }
        RewardKind::Bernoulli => {
            if rng.random::<f64>() < sigmoid(q) {
                1.0
            } else {
                0.0
            }
        }
    }
}
