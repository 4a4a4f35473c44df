use std::cell::OnceCell;

use super::estimate::estimate;
use super::evaluate::RunOutput;
use super::weights::{
    action_ratios, aips_from_ratios, check_dims, marginal_ratios_all, WeightMatrix,
};
use crate::error::{Error, Result};
use crate::slope::{slope_from_ratios, SlopeReport};
use crate::types::{EstimatorSpec, LoggedDataset};

/// Per-position ratios of one dataset, computed on first use and shared by
/// every estimator run on it.
pub struct WeightCache<'a> {
    ds: &'a LoggedDataset,
    action: OnceCell<WeightMatrix>,
    marginal: OnceCell<Vec<WeightMatrix>>,
}

impl<'a> WeightCache<'a> {
    pub fn new(ds: &'a LoggedDataset) -> Self {
        Self {
            ds,
            action: OnceCell::new(),
            marginal: OnceCell::new(),
        }
    }

    pub fn dataset(&self) -> &'a LoggedDataset {
        self.ds
    }

    pub fn action_ratios(&self) -> Result<&WeightMatrix> {
        if let Some(w) = self.action.get() {
            return Ok(w);
        }
        let w = action_ratios(self.ds)?;
        Ok(self.action.get_or_init(|| w))
    }

    /// Marginal ratios for every retained-dimension count, index `d - 1`.
    pub fn marginal_ratios(&self) -> Result<&[WeightMatrix]> {
        if let Some(w) = self.marginal.get() {
            return Ok(w);
        }
        let w = marginal_ratios_all(self.ds)?;
        Ok(self.marginal.get_or_init(|| w))
    }

    /// Weights of a spec without SLOPE selection.
    pub fn weights(&self, spec: &EstimatorSpec) -> Result<WeightMatrix> {
        spec.validate()?;
        if let Some(behavior) = &spec.behavior {
            return aips_from_ratios(self.ds, self.action_ratios()?, behavior);
        }
        let scope = spec.family.scope().expect("non-AIPS family has a scope");
        if spec.family.is_marginal() {
            let dims = spec.retained_dims.unwrap_or(self.ds.dims());
            check_dims(self.ds, dims)?;
            Ok(WeightMatrix::scoped(
                &self.marginal_ratios()?[dims - 1],
                scope,
            ))
        } else {
            Ok(WeightMatrix::scoped(self.action_ratios()?, scope))
        }
    }

    /// SLOPE over candidates keeping `retained_dims` (default `D`) down to
    /// one dimension.
    pub fn slope(&self, spec: &EstimatorSpec) -> Result<SlopeReport> {
        spec.validate()?;
        let (Some(delta), Some(scope)) = (spec.slope_delta, spec.family.scope()) else {
            return Err(Error::InvalidArgument(
                "SLOPE needs a marginal family and delta".into(),
            ));
        };
        let max = spec.retained_dims.unwrap_or(self.ds.dims());
        check_dims(self.ds, max)?;
        slope_from_ratios(self.ds, &self.marginal_ratios()?[..max], scope, delta)
    }

    pub fn run(&self, spec: &EstimatorSpec) -> Result<RunOutput> {
        if spec.slope_delta.is_some() {
            let r = self.slope(spec)?;
            return Ok(RunOutput {
                report: r.report,
                selected_dims: Some(r.retained_dims),
            });
        }
        let w = self.weights(spec)?;
        Ok(RunOutput {
            report: estimate(self.ds, &w, spec.self_normalized)?,
            selected_dims: None,
        })
    }
}
