//! Domain types shared across the crate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::FactorizedRankingPolicy;
use crate::synth::{BehaviorMatrix, EmbeddingModel};

/// Context features `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Context(pub Vec<f64>);

impl Context {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// One within-position action index per slot of the ranking.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RankingAction(pub Vec<usize>);

impl RankingAction {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A `K x D` matrix of embedding categories, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RankingEmbedding {
    dims: usize,
    cats: Vec<usize>,
}

impl RankingEmbedding {
    pub fn new(positions: usize, dims: usize, cats: Vec<usize>) -> Result<Self> {
        if cats.len() != positions * dims {
            return Err(Error::Shape(format!(
                "embedding has {} entries, expected {}x{}",
                cats.len(),
                positions,
                dims
            )));
        }
        Ok(Self { dims, cats })
    }

    pub fn positions(&self) -> usize {
        self.cats.len().checked_div(self.dims).unwrap_or(0)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Categories of all dimensions at position `k`.
    pub fn row(&self, k: usize) -> &[usize] {
        &self.cats[k * self.dims..(k + 1) * self.dims]
    }

    pub fn get(&self, k: usize, d: usize) -> usize {
        self.cats[k * self.dims + d]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.cats
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardVector(pub Vec<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    #[default]
    Gaussian,
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedSample {
    pub context: Context,
    pub action: RankingAction,
    pub embedding: RankingEmbedding,
    pub reward: RewardVector,
    /// Index into [`LoggedDataset::behaviors`] of the behavior that generated
    /// this sample's reward. Only oracle AIPS reads it.
    pub behavior_id: Option<usize>,
}

/// `n` logged samples together with the tables that produced them.
///
/// Row `i` of both policy tables is the policy evaluated at the context of
/// sample `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedDataset {
    pub samples: Vec<LoggedSample>,
    pub logging_policy: FactorizedRankingPolicy,
    pub target_policy: FactorizedRankingPolicy,
    pub embedding_model: EmbeddingModel,
    pub reward_kind: RewardKind,
    /// Behavior catalogue referenced by `LoggedSample::behavior_id`.
    pub behaviors: Vec<BehaviorMatrix>,
    pub config_fingerprint: String,
}

impl LoggedDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positions(&self) -> usize {
        self.embedding_model.positions()
    }

    pub fn dims(&self) -> usize {
        self.embedding_model.dims()
    }

    pub fn action_counts(&self) -> &[usize] {
        self.embedding_model.action_counts()
    }

    pub fn category_counts(&self) -> &[usize] {
        self.embedding_model.category_counts()
    }

    pub fn context_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.context.dim())
    }

    /// Checks every type invariant. Errors name the first offending sample.
    pub fn validate(&self) -> Result<()> {
        let k = self.positions();
        let d = self.dims();
        let actions = self.action_counts();
        let cats = self.category_counts();
        if self.logging_policy.action_counts() != actions
            || self.target_policy.action_counts() != actions
        {
            return Err(Error::Shape(
                "policy action counts differ from embedding model".into(),
            ));
        }
        if self.logging_policy.contexts() != self.len()
            || self.target_policy.contexts() != self.len()
        {
            return Err(Error::Shape(format!(
                "policy tables cover {}/{} contexts for {} samples",
                self.logging_policy.contexts(),
                self.target_policy.contexts(),
                self.len()
            )));
        }
        let dim_x = self.context_dim();
        for (i, s) in self.samples.iter().enumerate() {
            if s.context.dim() != dim_x {
                return Err(Error::OutOfBounds {
                    sample: i,
                    what: format!("context length {} != {}", s.context.dim(), dim_x),
                });
            }
            if s.context.0.iter().any(|v| !v.is_finite()) {
                return Err(Error::OutOfBounds {
                    sample: i,
                    what: "non-finite context entry".into(),
                });
            }
            if s.action.len() != k || s.reward.0.len() != k {
                return Err(Error::OutOfBounds {
                    sample: i,
                    what: format!("ranking length differs from K={k}"),
                });
            }
            if s.embedding.positions() != k || s.embedding.dims() != d {
                return Err(Error::OutOfBounds {
                    sample: i,
                    what: format!("embedding shape differs from ({k}, {d})"),
                });
            }
            for (pos, &a) in s.action.0.iter().enumerate() {
                if a >= actions[pos] {
                    return Err(Error::OutOfBounds {
                        sample: i,
                        what: format!("a({pos})={a} >= |A_{pos}|={}", actions[pos]),
                    });
                }
            }
            for pos in 0..k {
                for (dim, &v) in s.embedding.row(pos).iter().enumerate() {
                    if v >= cats[dim] {
                        return Err(Error::OutOfBounds {
                            sample: i,
                            what: format!("e({pos},{dim})={v} >= |E_{dim}|={}", cats[dim]),
                        });
                    }
                }
            }
            if self.reward_kind == RewardKind::Bernoulli
                && s.reward.0.iter().any(|&r| r != 0.0 && r != 1.0)
            {
                return Err(Error::OutOfBounds {
                    sample: i,
                    what: "non-binary reward in bernoulli dataset".into(),
                });
            }
            if let Some(b) = s.behavior_id {
                if b >= self.behaviors.len() {
                    return Err(Error::OutOfBounds {
                        sample: i,
                        what: format!("behavior id {b} outside catalogue"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Which positions' items an importance weight at position `k` covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    /// Whole ranking.
    Full,
    /// Position `k` only.
    Position,
    /// Positions `1..=k`.
    Prefix,
}

impl Scope {
    /// Whether position `l` belongs to the scope of position `k`.
    pub fn contains(self, k: usize, l: usize) -> bool {
        match self {
            Scope::Full => true,
            Scope::Position => l == k,
            Scope::Prefix => l <= k,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scope::Full => "full",
            Scope::Position => "position",
            Scope::Prefix => "prefix",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorFamily {
    Sips,
    Iips,
    Rips,
    Aips,
    Msips,
    Miips,
    Mrips,
}

impl EstimatorFamily {
    pub const ALL: [EstimatorFamily; 7] = [
        EstimatorFamily::Sips,
        EstimatorFamily::Iips,
        EstimatorFamily::Rips,
        EstimatorFamily::Aips,
        EstimatorFamily::Msips,
        EstimatorFamily::Miips,
        EstimatorFamily::Mrips,
    ];

    pub fn is_marginal(self) -> bool {
        matches!(
            self,
            EstimatorFamily::Msips | EstimatorFamily::Miips | EstimatorFamily::Mrips
        )
    }

    /// Weight scope; `None` for AIPS whose scope comes from the behavior matrix.
    pub fn scope(self) -> Option<Scope> {
        match self {
            EstimatorFamily::Sips | EstimatorFamily::Msips => Some(Scope::Full),
            EstimatorFamily::Iips | EstimatorFamily::Miips => Some(Scope::Position),
            EstimatorFamily::Rips | EstimatorFamily::Mrips => Some(Scope::Prefix),
            EstimatorFamily::Aips => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorFamily::Sips => "SIPS",
            EstimatorFamily::Iips => "IIPS",
            EstimatorFamily::Rips => "RIPS",
            EstimatorFamily::Aips => "AIPS",
            EstimatorFamily::Msips => "MSIPS",
            EstimatorFamily::Miips => "MIIPS",
            EstimatorFamily::Mrips => "MRIPS",
        }
    }
}

impl FromStr for EstimatorFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorFamily::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownEstimator(s.to_string()))
    }
}

/// Where AIPS takes its per-sample behavior matrix from.
#[derive(Debug, Clone, PartialEq)]
pub enum AipsBehavior {
    /// The matrix that actually generated the sample (oracle knowledge).
    LoggedTrue,
    Fixed(BehaviorMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSpec {
    pub family: EstimatorFamily,
    pub self_normalized: bool,
    /// Leading embedding dimensions kept by the marginal families; `None`
    /// keeps all of them. With SLOPE it is the largest candidate. Ignored by
    /// the action-space families.
    pub retained_dims: Option<usize>,
    /// Required iff `family` is AIPS.
    pub behavior: Option<AipsBehavior>,
    /// Select `retained_dims` from the data with SLOPE at this confidence.
    pub slope_delta: Option<f64>,
}

impl EstimatorSpec {
    pub fn new(family: EstimatorFamily) -> Self {
        Self {
            family,
            self_normalized: false,
            retained_dims: None,
            behavior: None,
            slope_delta: None,
        }
    }

    pub fn self_normalized(mut self) -> Self {
        self.self_normalized = true;
        self
    }

    pub fn with_retained_dims(mut self, dims: usize) -> Self {
        self.retained_dims = Some(dims);
        self
    }

    pub fn with_behavior(mut self, behavior: AipsBehavior) -> Self {
        self.behavior = Some(behavior);
        self
    }

    pub fn with_slope(mut self, delta: f64) -> Self {
        self.slope_delta = Some(delta);
        self
    }

    pub fn validate(&self) -> Result<()> {
        match (self.family, &self.behavior) {
            (EstimatorFamily::Aips, None) => {
                return Err(Error::InvalidArgument(
                    "AIPS requires a behavior source".into(),
                ))
            }
            (f, Some(_)) if f != EstimatorFamily::Aips => {
                return Err(Error::InvalidArgument(format!(
                    "{} does not take a behavior source",
                    f.name()
                )))
            }
            _ => {}
        }
        if self.family.is_marginal() {
            if self.retained_dims == Some(0) {
                return Err(Error::InvalidArgument("retained_dims must be >= 1".into()));
            }
            if let Some(delta) = self.slope_delta {
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "slope delta {delta} outside (0, 1)"
                    )));
                }
                if self.self_normalized {
                    return Err(Error::InvalidArgument(
                        "SLOPE selection runs on plain estimators only".into(),
                    ));
                }
            }
        } else if self.slope_delta.is_some() {
            return Err(Error::InvalidArgument(format!(
                "{} has no embedding dimensions to select",
                self.family.name()
            )));
        }
        Ok(())
    }

    /// Short label such as `snSIPS`, `MRIPS`, `MSIPS@2` or `MRIPS+slope`.
    pub fn label(&self) -> String {
        let mut s = String::new();
        if self.self_normalized {
            s.push_str("sn");
        }
        s.push_str(self.family.name());
        if let Some(b) = &self.behavior {
            match b {
                AipsBehavior::LoggedTrue => s.push_str(":true"),
                AipsBehavior::Fixed(c) => {
                    s.push(':');
                    s.push_str(&c.name);
                }
            }
        }
        if self.family.is_marginal() {
            if let Some(d) = self.retained_dims {
                s.push_str(&format!("@{d}"));
            }
            if self.slope_delta.is_some() {
                s.push_str("+slope");
            }
        }
        s
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parses labels of the form `[sn]FAMILY[:behavior][@dims][+slope]`.
///
/// AIPS behaviors are `true` (logged behavior) or a catalogue name, which is
/// materialized for `positions` slots.
pub fn parse_estimator(label: &str, positions: usize, slope_delta: f64) -> Result<EstimatorSpec> {
    let mut rest = label.trim();
    let mut slope = false;
    if let Some(stripped) = rest.strip_suffix("+slope") {
        slope = true;
        rest = stripped;
    }
    let mut dims = None;
    if let Some((head, d)) = rest.rsplit_once('@') {
        dims = Some(
            d.parse::<usize>()
                .map_err(|_| Error::UnknownEstimator(label.to_string()))?,
        );
        rest = head;
    }
    let mut behavior = None;
    if let Some((head, b)) = rest.split_once(':') {
        behavior = Some(b.to_string());
        rest = head;
    }
    let (sn, fam) = match rest.strip_prefix("sn") {
        Some(f) => (true, f),
        None => (false, rest),
    };
    let family: EstimatorFamily = fam
        .parse()
        .map_err(|_| Error::UnknownEstimator(label.to_string()))?;
    let mut spec = EstimatorSpec::new(family);
    spec.self_normalized = sn;
    spec.retained_dims = dims;
    if slope {
        spec.slope_delta = Some(slope_delta);
    }
    spec.behavior = match behavior.as_deref() {
        None => None,
        Some("true") => Some(AipsBehavior::LoggedTrue),
        Some(name) => Some(AipsBehavior::Fixed(BehaviorMatrix::named(name, positions)?)),
    };
    spec.validate()?;
    Ok(spec)
}
