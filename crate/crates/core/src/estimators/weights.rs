use crate::error::{Error, Result};
use crate::policy::FactorizedRankingPolicy;
use crate::synth::{BehaviorMatrix, EmbeddingModel};
use crate::types::{AipsBehavior, LoggedDataset, Scope};

/// `n x K` importance weights; `w(i, k)` multiplies `r_i(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    positions: usize,
    values: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(positions: usize, values: Vec<f64>) -> Result<Self> {
        if positions == 0 || !values.len().is_multiple_of(positions) {
            return Err(Error::Shape(format!(
                "{} weights do not tile rows of {positions}",
                values.len()
            )));
        }
        Ok(Self { positions, values })
    }

    pub fn ones(n: usize, positions: usize) -> Self {
        Self {
            positions,
            values: vec![1.0; n * positions],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.positions
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn positions(&self) -> usize {
        self.positions
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.positions + k]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.positions..(i + 1) * self.positions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Combines per-position ratios into weights: `w(i, k)` is the product of
    /// `ratios(i, l)` over the `l` that `in_scope(i, k, l)` admits.
    pub fn from_ratios(
        ratios: &WeightMatrix,
        in_scope: impl Fn(usize, usize, usize) -> bool,
    ) -> Self {
        let kk = ratios.positions;
        let mut values = Vec::with_capacity(ratios.values.len());
        for i in 0..ratios.len() {
            let row = ratios.row(i);
            for k in 0..kk {
                let mut w = 1.0;
                for (l, &r) in row.iter().enumerate() {
                    if in_scope(i, k, l) {
                        w *= r;
                    }
                }
                values.push(w);
            }
        }
        Self {
            positions: kk,
            values,
        }
    }

    pub fn scoped(ratios: &WeightMatrix, scope: Scope) -> Self {
        Self::from_ratios(ratios, |_, k, l| scope.contains(k, l))
    }
}

/// Per-position action ratios `pi(a_i(l) | x_i) / pi_0(a_i(l) | x_i)`.
pub fn action_ratios(ds: &LoggedDataset) -> Result<WeightMatrix> {
    let k = ds.positions();
    let mut values = Vec::with_capacity(ds.len() * k);
    for (i, s) in ds.samples.iter().enumerate() {
        for (l, &a) in s.action.0.iter().enumerate() {
            let p0 = ds.logging_policy.prob(i, l, a);
            if p0 <= 0.0 {
                return Err(Error::ZeroLoggingProbability {
                    sample: i,
                    position: l,
                });
            }
            values.push(ds.target_policy.prob(i, l, a) / p0);
        }
    }
    WeightMatrix::new(k, values)
}

/// SIPS (full), IIPS (position) and RIPS (prefix) weights.
pub fn gips_weights(ds: &LoggedDataset, scope: Scope) -> Result<WeightMatrix> {
    Ok(WeightMatrix::scoped(&action_ratios(ds)?, scope))
}

/// AIPS weights: the scope of position `k` in sample `i` is row `k` of that
/// sample's behavior matrix.
pub fn aips_weights(ds: &LoggedDataset, source: &AipsBehavior) -> Result<WeightMatrix> {
    aips_from_ratios(ds, &action_ratios(ds)?, source)
}

/// [`aips_weights`] from precomputed [`action_ratios`].
pub fn aips_from_ratios(
    ds: &LoggedDataset,
    ratios: &WeightMatrix,
    source: &AipsBehavior,
) -> Result<WeightMatrix> {
    let k = ds.positions();
    let matrices: Vec<&BehaviorMatrix> = match source {
        AipsBehavior::Fixed(c) => {
            if c.positions() != k {
                return Err(Error::Shape(format!(
                    "behavior '{}' has {} positions, data has {k}",
                    c.name,
                    c.positions()
                )));
            }
            vec![c; ds.len()]
        }
        AipsBehavior::LoggedTrue => ds
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.behavior_id
                    .and_then(|b| ds.behaviors.get(b))
                    .ok_or(Error::MissingBehavior { sample: i })
            })
            .collect::<Result<_>>()?,
    };
    Ok(WeightMatrix::from_ratios(ratios, |i, kk, l| {
        matrices[i].get(kk, l)
    }))
}

/// Number of category tuples over the first `dims` dimensions.
pub fn tuple_count(category_counts: &[usize], dims: usize) -> usize {
    category_counts[..dims].iter().product()
}

/// Flat index of a category tuple, last dimension fastest.
pub fn tuple_index(category_counts: &[usize], cats: &[usize]) -> usize {
    cats.iter()
        .zip(category_counts)
        .fold(0, |acc, (&v, &c)| acc * c + v)
}

/// `p_k(v | x, pi) = sum_a pi_k(a | x) prod_{d < dims} p(e_d = v_d | a)` for
/// every tuple `v` of the first `dims` dimensions, indexed by [`tuple_index`].
pub fn position_marginal(
    policy: &FactorizedRankingPolicy,
    emb: &EmbeddingModel,
    context: usize,
    k: usize,
    dims: usize,
) -> Vec<f64> {
    let cats = &emb.category_counts()[..dims];
    let mut out = vec![0.0; tuple_count(cats, dims)];
    let mut tuple = vec![0; dims];
    for (a, &pa) in policy.row(context, k).iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        for (idx, slot) in out.iter_mut().enumerate() {
            let mut rem = idx;
            for d in (0..dims).rev() {
                tuple[d] = rem % cats[d];
                rem /= cats[d];
            }
            *slot += pa * emb.prefix_prob(k, a, &tuple, dims);
        }
    }
    out
}

/// Marginal ratios `rho(i, l)` for every retained-dimension count at once:
/// entry `d - 1` of the result keeps the first `d` dimensions.
pub fn marginal_ratios_all(ds: &LoggedDataset) -> Result<Vec<WeightMatrix>> {
    let kk = ds.positions();
    let dd = ds.dims();
    let n = ds.len();
    let emb = &ds.embedding_model;
    let mut out: Vec<Vec<f64>> = vec![Vec::with_capacity(n * kk); dd];
    let mut num = vec![0.0; dd];
    let mut den = vec![0.0; dd];
    for (i, s) in ds.samples.iter().enumerate() {
        for l in 0..kk {
            let v = s.embedding.row(l);
            num.fill(0.0);
            den.fill(0.0);
            let target = ds.target_policy.row(i, l);
            let logging = ds.logging_policy.row(i, l);
            for (a, (&pt, &p0)) in target.iter().zip(logging).enumerate() {
                if pt == 0.0 && p0 == 0.0 {
                    continue;
                }
                let mut pe = 1.0;
                for d in 0..dd {
                    pe *= emb.prob(l, a, d, v[d]);
                    num[d] += pt * pe;
                    den[d] += p0 * pe;
                }
            }
            for d in 0..dd {
                if den[d] <= 0.0 {
                    return Err(Error::ZeroLoggingProbability {
                        sample: i,
                        position: l,
                    });
                }
                out[d].push(num[d] / den[d]);
            }
        }
    }
    out.into_iter().map(|v| WeightMatrix::new(kk, v)).collect()
}

/// Marginal ratios keeping the first `dims` embedding dimensions.
pub fn marginal_ratios(ds: &LoggedDataset, dims: usize) -> Result<WeightMatrix> {
    let kk = ds.positions();
    let emb = &ds.embedding_model;
    check_dims(ds, dims)?;
    let mut values = Vec::with_capacity(ds.len() * kk);
    for (i, s) in ds.samples.iter().enumerate() {
        for l in 0..kk {
            let v = s.embedding.row(l);
            let (mut num, mut den) = (0.0, 0.0);
            let target = ds.target_policy.row(i, l);
            let logging = ds.logging_policy.row(i, l);
            for (a, (&pt, &p0)) in target.iter().zip(logging).enumerate() {
                if pt == 0.0 && p0 == 0.0 {
                    continue;
                }
                let pe = emb.prefix_prob(l, a, v, dims);
                num += pt * pe;
                den += p0 * pe;
            }
            if den <= 0.0 {
                return Err(Error::ZeroLoggingProbability {
                    sample: i,
                    position: l,
                });
            }
            values.push(num / den);
        }
    }
    WeightMatrix::new(kk, values)
}

pub(crate) fn check_dims(ds: &LoggedDataset, dims: usize) -> Result<()> {
    if dims == 0 || dims > ds.dims() {
        return Err(Error::InvalidArgument(format!(
            "retained dims {dims} outside [1, {}]",
            ds.dims()
        )));
    }
    Ok(())
}

/// MSIPS (full), MIIPS (position) and MRIPS (prefix) weights.
pub fn gmips_weights(ds: &LoggedDataset, scope: Scope, dims: usize) -> Result<WeightMatrix> {
    Ok(WeightMatrix::scoped(&marginal_ratios(ds, dims)?, scope))
}
