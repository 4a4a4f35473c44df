//! Experiment configuration.
//!
//! Configs are TOML documents; every field has a default, so an empty file is
//! the default experiment. Individual keys can be overridden with dotted
//! `section.key=value` strings.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::synth::{BehaviorKind, MatrixBase};
use crate::types::RewardKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Seed of the frozen environment parameters.
    pub seed: u64,
    pub n: usize,
    pub dim_x: usize,
    /// Ranking length `K`.
    pub positions: usize,
    /// `|A_k|` for every position, unless `action_counts` is set.
    pub actions: usize,
    /// Embedding dimensions `D`.
    pub dims: usize,
    /// `|E_d|` for every dimension, unless `category_counts` is set.
    pub categories: usize,
    pub action_counts: Option<Vec<usize>>,
    pub category_counts: Option<Vec<usize>>,
    /// Size of a finite, uniformly weighted context set; 0 means `x ~ N(0, I)`.
    pub finite_contexts: usize,
    pub reward: RewardConfig,
    pub logging: LoggingConfig,
    pub target: TargetConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub kind: RewardKind,
    /// Gaussian noise standard deviation `sigma_r`.
    pub noise: f64,
    pub behavior: BehaviorSetting,
    /// Upper end of `G ~ U[0, g_max]`; defaults by reward kind.
    pub interaction_max: Option<f64>,
    /// Fixed `K x K` interaction matrix replacing the sampled one.
    pub interaction: Option<Vec<Vec<f64>>>,
    /// Fixed dimension weights replacing the sampled ones.
    pub eta: Option<Vec<f64>>,
    /// Behavior catalogue for `behavior = "matrix"`.
    pub catalogue: Vec<String>,
    pub matrix_base: MatrixBase,
    /// Temperature shared by every behavior in the catalogue.
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorSetting {
    #[default]
    Standard,
    Cascade,
    Independent,
    Matrix,
}

impl BehaviorSetting {
    pub fn fixed(self) -> Option<BehaviorKind> {
        match self {
            BehaviorSetting::Standard => Some(BehaviorKind::Standard),
            BehaviorSetting::Cascade => Some(BehaviorKind::Cascade),
            BehaviorSetting::Independent => Some(BehaviorKind::Independent),
            BehaviorSetting::Matrix => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoggingConfig {
    /// Softmax inverse temperature on `q̄(x, a)`.
    pub beta: f64,
    /// Actions per position removed from the logging support.
    pub deficient_actions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetConfig {
    pub epsilon: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 12345,
            n: 10_000,
            dim_x: 5,
            positions: 5,
            actions: 20,
            dims: 3,
            categories: 2,
            action_counts: None,
            category_counts: None,
            finite_contexts: 0,
            reward: RewardConfig::default(),
            logging: LoggingConfig::default(),
            target: TargetConfig::default(),
        }
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            kind: RewardKind::Gaussian,
            noise: 0.5,
            behavior: BehaviorSetting::Standard,
            interaction_max: None,
            interaction: None,
            eta: None,
            catalogue: Vec::new(),
            matrix_base: MatrixBase::Action,
            lambda: 1.0,
        }
    }
}

impl Default for LoggingConfig {
    fn default() -> Self {
        Self {
            beta: -1.0,
            deficient_actions: 0,
        }
    }
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self { epsilon: 0.3 }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn action_counts(&self) -> Vec<usize> {
        self.action_counts
            .clone()
            .unwrap_or_else(|| vec![self.actions; self.positions])
    }

    pub fn category_counts(&self) -> Vec<usize> {
        self.category_counts
            .clone()
            .unwrap_or_else(|| vec![self.categories; self.dims])
    }

    pub fn interaction_max(&self) -> f64 {
        self.reward
            .interaction_max
            .unwrap_or(match self.reward.kind {
                RewardKind::Gaussian => 3.0,
                RewardKind::Bernoulli => 15.0,
            })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.positions == 0 || self.dim_x == 0 || self.dims == 0 {
            return bad("positions, dim_x and dims must be >= 1".into());
        }
        let actions = self.action_counts();
        if actions.len() != self.positions || actions.contains(&0) {
            return bad(format!(
                "need {} positive action counts, got {:?}",
                self.positions, actions
            ));
        }
        let cats = self.category_counts();
        if cats.len() != self.dims || cats.contains(&0) {
            return bad(format!(
                "need {} positive category counts, got {:?}",
                self.dims, cats
            ));
        }
        if let Some(&a) = actions
            .iter()
            .find(|&&a| self.logging.deficient_actions >= a)
        {
            return bad(format!(
                "deficient_actions {} must be < |A_k| = {a}",
                self.logging.deficient_actions
            ));
        }
        if !(self.reward.noise >= 0.0 && self.reward.noise.is_finite()) {
            return bad(format!(
                "noise must be finite and >= 0, got {}",
                self.reward.noise
            ));
        }
        if !self.logging.beta.is_finite() {
            return bad("beta must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.target.epsilon) {
            return bad(format!(
                "epsilon must lie in [0, 1], got {}",
                self.target.epsilon
            ));
        }
        let gmax = self.interaction_max();
        if !(gmax >= 0.0 && gmax.is_finite()) {
            return bad("interaction_max must be finite and >= 0".into());
        }
        if let Some(g) = &self.reward.interaction {
            if g.len() != self.positions || g.iter().any(|r| r.len() != self.positions) {
                return bad(format!("interaction must be {0}x{0}", self.positions));
            }
        }
        if let Some(eta) = &self.reward.eta {
            if eta.len() != self.dims || eta.iter().any(|&v| v.is_nan() || v < 0.0) {
                return bad(format!("eta must hold {} non-negative weights", self.dims));
            }
        }
        if self.reward.behavior == BehaviorSetting::Matrix {
            if self.reward.catalogue.is_empty() {
                return bad("matrix behavior needs a non-empty catalogue".into());
            }
            for name in &self.reward.catalogue {
                crate::synth::BehaviorMatrix::named(name, self.positions)
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        if !self.reward.lambda.is_finite() {
            return bad("lambda must be finite".into());
        }
        Ok(())
    }

    /// Stable hash of the canonical (JSON) form of the config.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }

    /// Applies one `dotted.key=value` override. Values are parsed as TOML
    /// and fall back to bare strings.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        *self = apply_override(self, assignment)?;
        self.validate()
    }
}

/// Sets a dotted key in the TOML form of `value` and deserializes the result.
pub fn apply_override<T>(value: &T, assignment: &str) -> Result<T>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let parsed = parse_toml_value(raw);
    let mut root = toml::Table::try_from(value).map_err(|e| Error::Config(e.to_string()))?;
    let parts: Vec<&str> = key.split('.').collect();
    let mut table = &mut root;
    for part in &parts[..parts.len() - 1] {
        table = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("'{part}' in '{key}' is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parsed);
    root.try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("override '{assignment}': {e}")))
}

fn parse_toml_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
