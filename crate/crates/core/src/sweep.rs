//! Replicated experiments over one swept configuration variable.
//!
//! Sweep values whose effective environment coincides (same config
//! fingerprint) share one true value and one set of replicated datasets;
//! this is what makes the unobserved-dimension sweep compare estimators on
//! identical data. Rows are ordered by sweep value, then estimator.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{apply_override, BehaviorSetting, ExperimentConfig};
use crate::error::{Error, Result};
use crate::estimators::{collect_outcomes, replicate, value_seed, SpecOutcome};
use crate::slope::DEFAULT_DELTA;
use crate::synth::{Environment, PolicyValue, ValueMode};
use crate::types::{parse_estimator, EstimatorSpec};

/// Version tag written into every row and the header comment.
pub const SCHEMA_VERSION: u32 = 1;

/// Ordered behavior catalogue of the complexity sweep.
pub const COMPLEXITY_ORDER: [&str; 6] = [
    "independent",
    "top_2_cascade",
    "neighbor_1",
    "cascade",
    "inverse_cascade",
    "standard",
];

/// Prefix of [`COMPLEXITY_ORDER`] of length `round(1 + 5 level)`.
pub fn behavior_complexity_schedule(level: f64) -> Result<Vec<String>> {
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::Config(format!(
            "complexity level {level} outside [0, 1]"
        )));
    }
    let len = (1.0 + 5.0 * level).round() as usize;
    Ok(COMPLEXITY_ORDER[..len]
        .iter()
        .map(|s| s.to_string())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    SampleSize,
    UniqueActions,
    RankingLength,
    /// Trailing embedding dimensions hidden from the marginal estimators.
    UnobservedDims,
    Noise,
    Beta,
    Epsilon,
    DeficientActions,
    BehaviorComplexity,
}

impl SweepVariable {
    pub const ALL: [SweepVariable; 9] = [
        SweepVariable::SampleSize,
        SweepVariable::UniqueActions,
        SweepVariable::RankingLength,
        SweepVariable::UnobservedDims,
        SweepVariable::Noise,
        SweepVariable::Beta,
        SweepVariable::Epsilon,
        SweepVariable::DeficientActions,
        SweepVariable::BehaviorComplexity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::SampleSize => "sample_size",
            SweepVariable::UniqueActions => "unique_actions",
            SweepVariable::RankingLength => "ranking_length",
            SweepVariable::UnobservedDims => "unobserved_dims",
            SweepVariable::Noise => "noise",
            SweepVariable::Beta => "beta",
            SweepVariable::Epsilon => "epsilon",
            SweepVariable::DeficientActions => "deficient_actions",
            SweepVariable::BehaviorComplexity => "behavior_complexity",
        }
    }

    fn integral(self) -> bool {
        matches!(
            self,
            SweepVariable::SampleSize
                | SweepVariable::UniqueActions
                | SweepVariable::RankingLength
                | SweepVariable::UnobservedDims
                | SweepVariable::DeficientActions
        )
    }

    /// The experiment config at sweep value `value`.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        if !value.is_finite() {
            return Err(Error::Config(format!(
                "{} value {value} is not finite",
                self.name()
            )));
        }
        if self.integral() && (value < 0.0 || value.fract() != 0.0) {
            return Err(Error::Config(format!(
                "{} needs non-negative integers, got {value}",
                self.name()
            )));
        }
        let mut cfg = base.clone();
        let u = value as usize;
        match self {
            SweepVariable::SampleSize => cfg.n = u,
            SweepVariable::UniqueActions => {
                cfg.actions = u;
                cfg.action_counts = None;
            }
            SweepVariable::RankingLength => {
                cfg.positions = u;
                cfg.action_counts = None;
            }
            SweepVariable::UnobservedDims => {
                if u >= cfg.dims {
                    return Err(Error::Config(format!(
                        "cannot hide {u} of {} embedding dimensions",
                        cfg.dims
                    )));
                }
            }
            SweepVariable::Noise => cfg.reward.noise = value,
            SweepVariable::Beta => cfg.logging.beta = value,
            SweepVariable::Epsilon => cfg.target.epsilon = value,
            SweepVariable::DeficientActions => cfg.logging.deficient_actions = u,
            SweepVariable::BehaviorComplexity => {
                cfg.reward.behavior = BehaviorSetting::Matrix;
                cfg.reward.catalogue = behavior_complexity_schedule(value)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepVariable::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep variable '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    /// Estimator labels such as `MSIPS`, `snRIPS`, `MRIPS+slope`.
    pub estimators: Vec<String>,
    pub replications: usize,
    pub root_seed: u64,
    /// Atoms for exact evaluation or draws for Monte Carlo.
    pub value_budget: u64,
    pub slope_delta: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            base: ExperimentConfig::default(),
            variable: SweepVariable::SampleSize,
            values: vec![2000.0, 4000.0, 8000.0, 16000.0, 32000.0],
            estimators: ["snSIPS", "snIIPS", "snRIPS", "MSIPS", "MIIPS", "MRIPS"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            replications: 200,
            root_seed: 2024,
            value_budget: 1_000_000,
            slope_delta: DEFAULT_DELTA,
        }
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sweep config serializes")
    }

    /// Applies one `dotted.key=value` override, e.g. `base.n=500`.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        *self = apply_override(self, assignment)?;
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("sweep needs at least one estimator".into()));
        }
        if self.replications < 2 {
            return Err(Error::Config("sweep needs at least 2 replications".into()));
        }
        if self.value_budget == 0 {
            return Err(Error::Config("value_budget must be positive".into()));
        }
        for &v in &self.values {
            let cfg = self.variable.apply(&self.base, v)?;
            self.specs_at(&cfg, v)?;
        }
        Ok(())
    }

    /// Effective estimator specs at one sweep value.
    pub fn specs_at(&self, cfg: &ExperimentConfig, value: f64) -> Result<Vec<EstimatorSpec>> {
        let hidden = match self.variable {
            SweepVariable::UnobservedDims => value as usize,
            _ => 0,
        };
        self.estimators
            .iter()
            .map(|label| {
                let mut spec = parse_estimator(label, cfg.positions, self.slope_delta)
                    .map_err(|e| Error::Config(e.to_string()))?;
                if spec.family.is_marginal() {
                    let dims = spec.retained_dims.unwrap_or(cfg.dims);
                    if dims > cfg.dims || dims <= hidden {
                        return Err(Error::Config(format!(
                            "{label}: {dims} retained of {} dims with {hidden} hidden",
                            cfg.dims
                        )));
                    }
                    if hidden > 0 {
                        spec.retained_dims = Some(dims - hidden);
                    }
                }
                Ok(spec)
            })
            .collect()
    }
}

/// One estimator at one sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub config: ExperimentConfig,
    pub value: PolicyValue,
    pub outcome: SpecOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResults {
    pub variable: SweepVariable,
    pub replications: usize,
    pub root_seed: u64,
    pub rows: Vec<SweepRow>,
    /// Wall-clock seconds per sweep value; kept out of the CSV so reruns
    /// stay byte-identical.
    pub timings: Vec<(f64, f64)>,
}

/// Runs every estimator at every sweep value.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResults> {
    cfg.validate()?;
    let configs: Vec<ExperimentConfig> = cfg
        .values
        .iter()
        .map(|&v| cfg.variable.apply(&cfg.base, v))
        .collect::<Result<_>>()?;
    let specs: Vec<Vec<EstimatorSpec>> = configs
        .iter()
        .zip(&cfg.values)
        .map(|(c, &v)| cfg.specs_at(c, v))
        .collect::<Result<_>>()?;
    let fingerprints: Vec<String> = configs.iter().map(|c| c.fingerprint()).collect();
    let mut slots: Vec<Option<(PolicyValue, Vec<SpecOutcome>)>> = vec![None; cfg.values.len()];
    let mut timings = vec![0.0; cfg.values.len()];
    for i in 0..cfg.values.len() {
        if slots[i].is_some() {
            continue;
        }
        let start = Instant::now();
        let group: Vec<usize> = (i..cfg.values.len())
            .filter(|&j| fingerprints[j] == fingerprints[i])
            .collect();
        let env = Environment::new(&configs[i])?;
        let value = env.true_value_auto(cfg.value_budget, value_seed(cfg.root_seed))?;
        let joint: Vec<EstimatorSpec> = group
            .iter()
            .flat_map(|&j| specs[j].iter().cloned())
            .collect();
        let runs = replicate(&env, configs[i].n, &joint, cfg.replications, cfg.root_seed);
        let mut offset = 0;
        for &j in &group {
            let width = specs[j].len();
            let part: Vec<Vec<_>> = runs
                .iter()
                .map(|r| r[offset..offset + width].to_vec())
                .collect();
            offset += width;
            let mut outcomes = collect_outcomes(&specs[j], part, value.value);
            // series keep their configured name even when the effective spec varies
            for (o, label) in outcomes.iter_mut().zip(&cfg.estimators) {
                o.label.clone_from(label);
            }
            slots[j] = Some((value.clone(), outcomes));
        }
        let elapsed = start.elapsed().as_secs_f64() / group.len() as f64;
        for &j in &group {
            timings[j] = elapsed;
        }
    }
    let mut rows = Vec::new();
    for (i, slot) in slots.into_iter().enumerate() {
        let (value, outcomes) = slot.expect("every sweep value evaluated");
        for outcome in outcomes {
            rows.push(SweepRow {
                sweep_value: cfg.values[i],
                config: configs[i].clone(),
                value: value.clone(),
                outcome,
            });
        }
    }
    Ok(SweepResults {
        variable: cfg.variable,
        replications: cfg.replications,
        root_seed: cfg.root_seed,
        rows,
        timings: cfg.values.iter().copied().zip(timings).collect(),
    })
}

/// CSV column names, in order.
pub const CSV_COLUMNS: [&str; 22] = [
    "schema_version",
    "sweep_variable",
    "sweep_value",
    "estimator",
    "behavior",
    "fingerprint",
    "seed",
    "root_seed",
    "n",
    "replications",
    "successes",
    "true_value",
    "true_value_se",
    "value_mode",
    "mean_estimate",
    "relative_bias",
    "squared_bias",
    "variance",
    "mse",
    "mean_selected_dims",
    "failures",
    "errors",
];

fn behavior_name(cfg: &ExperimentConfig) -> &'static str {
    match cfg.reward.behavior {
        BehaviorSetting::Standard => "standard",
        BehaviorSetting::Cascade => "cascade",
        BehaviorSetting::Independent => "independent",
        BehaviorSetting::Matrix => "matrix",
    }
}

impl SweepResults {
    /// Writes the documented CSV: `#` comment lines, a header row, then one
    /// row per (sweep value, estimator).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# gmips sweep results, schema v{SCHEMA_VERSION}")?;
        writeln!(
            out,
            "# squared_bias, variance and mse are divided by true_value^2"
        )?;
        writeln!(
            out,
            "# relative_bias = (mean_estimate - true_value) / |true_value|"
        )?;
        writeln!(
            out,
            "# variance is the unbiased sample variance over successful replications"
        )?;
        writeln!(
            out,
            "# errors holds the first failure message; failures counts them"
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for row in &self.rows {
            let s = &row.outcome.summary;
            let selected: Vec<usize> = row
                .outcome
                .runs
                .iter()
                .filter_map(|r| r.as_ref().ok().and_then(|o| o.selected_dims))
                .collect();
            let mean_selected = if selected.is_empty() {
                String::new()
            } else {
                (selected.iter().sum::<usize>() as f64 / selected.len() as f64).to_string()
            };
            let mode = match row.value.mode {
                ValueMode::Exact => "exact",
                ValueMode::MonteCarlo => "monte_carlo",
            };
            w.write_record([
                SCHEMA_VERSION.to_string(),
                self.variable.name().to_string(),
                row.sweep_value.to_string(),
                row.outcome.label.clone(),
                behavior_name(&row.config).to_string(),
                row.config.fingerprint(),
                row.config.seed.to_string(),
                self.root_seed.to_string(),
                row.config.n.to_string(),
                self.replications.to_string(),
                s.successes.to_string(),
                row.value.value.to_string(),
                row.value.std_error.to_string(),
                mode.to_string(),
                s.mean_estimate.to_string(),
                s.bias.to_string(),
                s.squared_bias.to_string(),
                s.variance.to_string(),
                s.mse.to_string(),
                mean_selected,
                row.outcome.failures().to_string(),
                row.outcome.first_error().unwrap_or("").to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }

    /// `sweep_value,seconds` lines.
    pub fn timing_csv(&self) -> String {
        let mut s = String::from("sweep_value,seconds\n");
        for (v, t) in &self.timings {
            s.push_str(&format!("{v},{t:.3}\n"));
        }
        s
    }

    /// Row of `label` at `value`, if present.
    pub fn row(&self, value: f64, label: &str) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.sweep_value == value && r.outcome.label == label)
    }
}
