use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::policy::{sample_categorical, softmax_row};

/// Categorical embedding distributions `p(e_d = v | a)` for every
/// position-action `a` and dimension `d`.
///
/// Embeddings are drawn independently per dimension and per position given
/// the action placed there, so `p(e(k) | a(k)) = prod_d p(e_d | a(k))`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    action_counts: Vec<usize>,
    category_counts: Vec<usize>,
    action_offsets: Vec<usize>,
    category_offsets: Vec<usize>,
    category_stride: usize,
    /// Logits the probabilities were derived from; empty for hand-built models.
    alpha: Vec<f64>,
    probs: Vec<f64>,
}

fn offsets(counts: &[usize]) -> (Vec<usize>, usize) {
    let mut out = Vec::with_capacity(counts.len());
    let mut acc = 0;
    for &c in counts {
        out.push(acc);
        acc += c;
    }
    (out, acc)
}

impl EmbeddingModel {
    fn empty(action_counts: &[usize], category_counts: &[usize]) -> Result<Self> {
        if action_counts.is_empty() || action_counts.contains(&0) {
            return Err(Error::InvalidArgument(
                "every position needs >= 1 action".into(),
            ));
        }
        if category_counts.is_empty() || category_counts.contains(&0) {
            return Err(Error::InvalidArgument(
                "need D >= 1 and >= 1 category per dimension".into(),
            ));
        }
        let (action_offsets, _) = offsets(action_counts);
        let (category_offsets, category_stride) = offsets(category_counts);
        Ok(Self {
            action_counts: action_counts.to_vec(),
            category_counts: category_counts.to_vec(),
            action_offsets,
            category_offsets,
            category_stride,
            alpha: Vec::new(),
            probs: Vec::new(),
        })
    }

    fn table_len(&self) -> usize {
        self.action_counts.iter().sum::<usize>() * self.category_stride
    }

    /// Softmax over categories of each `(position-action, dimension)` logit row.
    pub fn from_alpha(
        action_counts: &[usize],
        category_counts: &[usize],
        alpha: Vec<f64>,
    ) -> Result<Self> {
        let mut m = Self::empty(action_counts, category_counts)?;
        if alpha.len() != m.table_len() {
            return Err(Error::Shape(format!(
                "alpha has {} entries, expected {}",
                alpha.len(),
                m.table_len()
            )));
        }
        let mut probs = vec![0.0; alpha.len()];
        for slot in 0..action_counts.iter().sum::<usize>() {
            for d in 0..category_counts.len() {
                let start = slot * m.category_stride + m.category_offsets[d];
                let end = start + category_counts[d];
                softmax_row(&alpha[start..end], 1.0, &mut probs[start..end]);
            }
        }
        m.alpha = alpha;
        m.probs = probs;
        Ok(m)
    }

    /// Uses given probabilities directly; each row must sum to one.
    pub fn from_probs(
        action_counts: &[usize],
        category_counts: &[usize],
        probs: Vec<f64>,
    ) -> Result<Self> {
        let mut m = Self::empty(action_counts, category_counts)?;
        if probs.len() != m.table_len() {
            return Err(Error::Shape(format!(
                "probability table has {} entries, expected {}",
                probs.len(),
                m.table_len()
            )));
        }
        m.probs = probs;
        for k in 0..m.positions() {
            for a in 0..action_counts[k] {
                for d in 0..m.dims() {
                    let row = m.row(k, a, d);
                    let s: f64 = row.iter().sum();
                    if row.iter().any(|&p| p.is_nan() || p < 0.0) || (s - 1.0).abs() > 1e-9 {
                        return Err(Error::InvalidArgument(format!(
                            "embedding row ({k}, {a}, {d}) is not a distribution"
                        )));
                    }
                }
            }
        }
        Ok(m)
    }

    /// Restores a model from stored logits and probabilities without
    /// recomputing either.
    pub fn from_parts(
        action_counts: &[usize],
        category_counts: &[usize],
        alpha: Vec<f64>,
        probs: Vec<f64>,
    ) -> Result<Self> {
        let mut m = Self::from_probs(action_counts, category_counts, probs)?;
        if !alpha.is_empty() && alpha.len() != m.table_len() {
            return Err(Error::Shape(
                "alpha and probability tables differ in size".into(),
            ));
        }
        m.alpha = alpha;
        Ok(m)
    }

    /// Draws i.i.d. standard-normal logits.
    pub fn generate<R: Rng + ?Sized>(
        action_counts: &[usize],
        category_counts: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let len = action_counts.iter().sum::<usize>() * category_counts.iter().sum::<usize>();
        let alpha = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        Self::from_alpha(action_counts, category_counts, alpha)
    }

    pub fn positions(&self) -> usize {
        self.action_counts.len()
    }

    pub fn dims(&self) -> usize {
        self.category_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn category_counts(&self) -> &[usize] {
        &self.category_counts
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    fn slot(&self, k: usize, a: usize) -> usize {
        (self.action_offsets[k] + a) * self.category_stride
    }

    /// `p(e_d = . | a)` for action `a` at position `k`.
    #[inline]
    pub fn row(&self, k: usize, a: usize, d: usize) -> &[f64] {
        let start = self.slot(k, a) + self.category_offsets[d];
        &self.probs[start..start + self.category_counts[d]]
    }

    #[inline]
    pub fn prob(&self, k: usize, a: usize, d: usize, v: usize) -> f64 {
        self.probs[self.slot(k, a) + self.category_offsets[d] + v]
    }

    /// `prod_{d < dims} p(e_d = cats[d] | a)`: probability of the first
    /// `dims` coordinates of an embedding row.
    #[inline]
    pub fn prefix_prob(&self, k: usize, a: usize, cats: &[usize], dims: usize) -> f64 {
        let base = self.slot(k, a);
        let mut p = 1.0;
        for d in 0..dims {
            p *= self.probs[base + self.category_offsets[d] + cats[d]];
        }
        p
    }

    /// Draws all dimensions of one position's embedding into `out`.
    pub fn sample_row<R: Rng + ?Sized>(&self, k: usize, a: usize, rng: &mut R, out: &mut [usize]) {
        for (d, o) in out.iter_mut().enumerate() {
            *o = sample_categorical(self.row(k, a, d), rng);
        }
    }
}
