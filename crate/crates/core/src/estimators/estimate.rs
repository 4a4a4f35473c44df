use serde::Serialize;

use super::weights::WeightMatrix;
use crate::error::{Error, Result};
use crate::types::LoggedDataset;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    /// `sum_k V^(k)`.
    pub value: f64,
    pub position_values: Vec<f64>,
}

/// Plain: `V^(k) = (1/n) sum_i w(i,k) r_i(k)`.
/// Self-normalized: `V^(k) = sum_i w(i,k) r_i(k) / sum_i w(i,k)`.
pub fn estimate(
    ds: &LoggedDataset,
    w: &WeightMatrix,
    self_normalized: bool,
) -> Result<EstimateReport> {
    let n = ds.len();
    let k = ds.positions();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "cannot estimate from an empty dataset".into(),
        ));
    }
    if w.len() != n || w.positions() != k {
        return Err(Error::Shape(format!(
            "weights are {}x{}, data is {n}x{k}",
            w.len(),
            w.positions()
        )));
    }
    let mut num = vec![0.0; k];
    let mut den = vec![0.0; k];
    for (i, s) in ds.samples.iter().enumerate() {
        for (pos, &r) in s.reward.0.iter().enumerate() {
            let wi = w.get(i, pos);
            num[pos] += wi * r;
            den[pos] += wi;
        }
    }
    let position_values = if self_normalized {
        num.iter()
            .zip(&den)
            .enumerate()
            .map(|(pos, (&a, &b))| {
                if b > 0.0 {
                    Ok(a / b)
                } else {
                    Err(Error::ZeroWeightColumn { position: pos })
                }
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        num.iter().map(|v| v / n as f64).collect()
    };
    Ok(EstimateReport {
        value: position_values.iter().sum(),
        position_values,
    })
}

/// Per-sample plain contributions `sum_k w(i,k) r_i(k)`.
pub fn contributions(ds: &LoggedDataset, w: &WeightMatrix) -> Vec<f64> {
    ds.samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.reward
                .0
                .iter()
                .enumerate()
                .map(|(pos, &r)| w.get(i, pos) * r)
                .sum()
        })
        .collect()
}
