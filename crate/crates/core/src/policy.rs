//! Factorized ranking policies.
//!
//! A policy is materialized as one probability table per context: row
//! `(context, k)` is a categorical distribution over the `|A_k|` actions of
//! position `k`, and the pmf of a ranking is the product of its positions'
//! entries.

use rand::Rng;

use crate::error::{Error, Result};
use crate::types::RankingAction;

/// Per-context, per-position values over each position's action set.
///
/// Positions may have different action counts; rows are packed per context.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionTable {
    action_counts: Vec<usize>,
    offsets: Vec<usize>,
    stride: usize,
    values: Vec<f64>,
}

impl PositionTable {
    pub fn zeros(contexts: usize, action_counts: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(action_counts.len());
        let mut stride = 0;
        for &a in action_counts {
            offsets.push(stride);
            stride += a;
        }
        Self {
            action_counts: action_counts.to_vec(),
            offsets,
            stride,
            values: vec![0.0; contexts * stride],
        }
    }

    pub fn from_values(action_counts: &[usize], values: Vec<f64>) -> Result<Self> {
        let mut t = Self::zeros(0, action_counts);
        if t.stride == 0 || !values.len().is_multiple_of(t.stride) {
            return Err(Error::Shape(format!(
                "{} values do not tile rows of width {}",
                values.len(),
                t.stride
            )));
        }
        t.values = values;
        Ok(t)
    }

    /// Builds a table from nested rows `rows[context][k][a]`.
    pub fn from_rows(rows: &[Vec<Vec<f64>>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Shape("table needs at least one context".into()))?;
        let counts: Vec<usize> = first.iter().map(Vec::len).collect();
        let mut values = Vec::new();
        for ctx in rows {
            if ctx.iter().map(Vec::len).ne(counts.iter().copied()) {
                return Err(Error::Shape("ragged table rows".into()));
            }
            for row in ctx {
                values.extend_from_slice(row);
            }
        }
        Self::from_values(&counts, values)
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn positions(&self) -> usize {
        self.action_counts.len()
    }

    pub fn contexts(&self) -> usize {
        self.values.len().checked_div(self.stride).unwrap_or(0)
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn row(&self, ctx: usize, k: usize) -> &[f64] {
        let start = ctx * self.stride + self.offsets[k];
        &self.values[start..start + self.action_counts[k]]
    }

    pub fn row_mut(&mut self, ctx: usize, k: usize) -> &mut [f64] {
        let start = ctx * self.stride + self.offsets[k];
        &mut self.values[start..start + self.action_counts[k]]
    }

    /// All positions of one context, packed.
    pub fn context_block(&self, ctx: usize) -> &[f64] {
        &self.values[ctx * self.stride..(ctx + 1) * self.stride]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Appends one context block (all positions, packed).
    pub fn push_block(&mut self, block: &[f64]) {
        debug_assert_eq!(block.len(), self.stride);
        self.values.extend_from_slice(block);
    }

    pub fn reserve_contexts(&mut self, contexts: usize) {
        self.values.reserve(contexts * self.stride);
    }

    /// Offset of position `k` inside a context block.
    pub fn offset(&self, k: usize) -> usize {
        self.offsets[k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    Softmax {
        beta: f64,
    },
    EpsilonGreedy {
        epsilon: f64,
    },
    Uniform,
    /// Arbitrary tables, e.g. hand-built test policies.
    Tabular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedRankingPolicy {
    pub kind: PolicyKind,
    probs: PositionTable,
}

/// Writes `softmax(beta * base)` into `out` using max subtraction.
pub fn softmax_row(base: &[f64], beta: f64, out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for &q in base {
        max = max.max(beta * q);
    }
    let mut sum = 0.0;
    for (o, &q) in out.iter_mut().zip(base) {
        let v = (beta * q - max).exp();
        *o = v;
        sum += v;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn epsilon_greedy_row(base: &[f64], epsilon: f64, out: &mut [f64]) {
    let uniform = epsilon / base.len() as f64;
    out.iter_mut().for_each(|o| *o = uniform);
    out[argmax(base)] += 1.0 - epsilon;
}

fn check_finite(base: &PositionTable) -> Result<()> {
    if base.values().iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("NaN in base reward table".into()));
    }
    Ok(())
}

impl FactorizedRankingPolicy {
    /// Wraps probability rows, checking that each sums to one.
    pub fn from_table(kind: PolicyKind, probs: PositionTable) -> Result<Self> {
        for ctx in 0..probs.contexts() {
            for k in 0..probs.positions() {
                let row = probs.row(ctx, k);
                if row.iter().any(|&p| !p.is_finite() || p < 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "negative or non-finite probability in row ({ctx}, {k})"
                    )));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "row ({ctx}, {k}) sums to {s}"
                    )));
                }
            }
        }
        Ok(Self { kind, probs })
    }

    pub fn softmax(base: &PositionTable, beta: f64) -> Result<Self> {
        check_finite(base)?;
        if !beta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "beta must be finite, got {beta}"
            )));
        }
        let mut probs = PositionTable::zeros(base.contexts(), base.action_counts());
        for ctx in 0..base.contexts() {
            for k in 0..base.positions() {
                softmax_row(base.row(ctx, k), beta, probs.row_mut(ctx, k));
            }
        }
        Ok(Self {
            kind: PolicyKind::Softmax { beta },
            probs,
        })
    }

    pub fn epsilon_greedy(base: &PositionTable, epsilon: f64) -> Result<Self> {
        check_finite(base)?;
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in [0, 1], got {epsilon}"
            )));
        }
        let mut probs = PositionTable::zeros(base.contexts(), base.action_counts());
        for ctx in 0..base.contexts() {
            for k in 0..base.positions() {
                epsilon_greedy_row(base.row(ctx, k), epsilon, probs.row_mut(ctx, k));
            }
        }
        Ok(Self {
            kind: PolicyKind::EpsilonGreedy { epsilon },
            probs,
        })
    }

    pub fn uniform(contexts: usize, action_counts: &[usize]) -> Self {
        let mut probs = PositionTable::zeros(contexts, action_counts);
        for ctx in 0..contexts {
            for (k, &a) in action_counts.iter().enumerate() {
                probs.row_mut(ctx, k).fill(1.0 / a as f64);
            }
        }
        Self {
            kind: PolicyKind::Uniform,
            probs,
        }
    }

    /// Zeroes `removed[k]` actions at every position and renormalizes.
    pub fn with_removed_support(&self, removed: &[Vec<usize>]) -> Result<Self> {
        let mut probs = self.probs.clone();
        for ctx in 0..probs.contexts() {
            for (k, gone) in removed.iter().enumerate() {
                let row = probs.row_mut(ctx, k);
                for &a in gone {
                    row[a] = 0.0;
                }
                let s: f64 = row.iter().sum();
                if s <= 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "no support left at position {k}"
                    )));
                }
                row.iter_mut().for_each(|p| *p /= s);
            }
        }
        Ok(Self {
            kind: self.kind,
            probs,
        })
    }

    pub fn table(&self) -> &PositionTable {
        &self.probs
    }

    pub fn action_counts(&self) -> &[usize] {
        self.probs.action_counts()
    }

    pub fn positions(&self) -> usize {
        self.probs.positions()
    }

    pub fn contexts(&self) -> usize {
        self.probs.contexts()
    }

    pub fn row(&self, ctx: usize, k: usize) -> &[f64] {
        self.probs.row(ctx, k)
    }

    pub fn prob(&self, ctx: usize, k: usize, a: usize) -> f64 {
        self.probs.row(ctx, k)[a]
    }

    /// `pi(a | x) = prod_k pi(a(k) | x)`.
    pub fn ranking_pmf(&self, ctx: usize, action: &RankingAction) -> f64 {
        action
            .0
            .iter()
            .enumerate()
            .map(|(k, &a)| self.prob(ctx, k, a))
            .product()
    }

    /// Draws each position independently from its row.
    pub fn sample_ranking<R: Rng + ?Sized>(&self, ctx: usize, rng: &mut R) -> RankingAction {
        RankingAction(
            (0..self.positions())
                .map(|k| sample_categorical(self.row(ctx, k), rng))
                .collect(),
        )
    }
}

/// Inverse-CDF draw from a normalized categorical row.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}
