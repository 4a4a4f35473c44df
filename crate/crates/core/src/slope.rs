//! Selection of the retained embedding dimensions by Lepski-style
//! comparison of confidence intervals (SLOPE).
//!
//! Candidates are ordered so that bias grows and the confidence half-width
//! `CNF` shrinks with the index: index 1 keeps all `D` dimensions, index `D`
//! keeps one. The selected index is the largest `j` with
//! `|V_j - V_m| <= CNF_j + (sqrt(6) - 1) CNF_m` for every `m < j`.

use std::fmt;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::estimators::{
    contributions, estimate, marginal_ratios_all, EstimateReport, WeightMatrix,
};
use crate::types::{LoggedDataset, Scope};

/// Default confidence parameter.
pub const DEFAULT_DELTA: f64 = 0.05;

pub fn inflation() -> f64 {
    6f64.sqrt() - 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeCandidate {
    pub retained_dims: usize,
    pub estimate: f64,
    pub contributions: Vec<f64>,
    pub cnf: f64,
}

/// One pairwise check `lhs <= rhs` of candidate `j` against earlier `m`
/// (1-based).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditEntry {
    pub j: usize,
    pub m: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl fmt::Display for AuditEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.j, self.m, self.lhs, self.rhs, self.pass
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeOutcome {
    /// 1-based index of the chosen candidate.
    pub selected: usize,
    pub audit: Vec<AuditEntry>,
    /// Indices `j` (1-based) with `CNF_j > CNF_{j-1}`.
    pub cnf_violations: Vec<usize>,
}

impl SlopeOutcome {
    /// Audit rows as `j,m,lhs,rhs,pass` lines with a header.
    pub fn audit_text(&self) -> String {
        let mut s = String::from("j,m,lhs,rhs,pass\n");
        for e in &self.audit {
            s.push_str(&e.to_string());
            s.push('\n');
        }
        for j in &self.cnf_violations {
            s.push_str(&format!("# cnf increases at j={j}\n"));
        }
        s
    }

    /// Whether the audit log shows the rule was applied literally: every
    /// check of the selected index passes and every later index fails one.
    pub fn is_consistent(&self, candidates: usize) -> bool {
        let passes = |j: usize| {
            self.audit
                .iter()
                .filter(|e| e.j == j)
                .all(|e| e.pass && e.lhs <= e.rhs)
        };
        let checks = |j: usize| self.audit.iter().filter(|e| e.j == j).count() == j - 1;
        (1..=candidates).all(checks)
            && passes(self.selected)
            && (self.selected + 1..=candidates).all(|j| !passes(j))
    }
}

/// `t_{1 - delta/2, n-1} * sd / sqrt(n)` of per-sample contributions.
pub fn cnf(contributions: &[f64], delta: f64) -> Result<f64> {
    let n = contributions.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("cnf needs n >= 2, got {n}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta {delta} outside (0, 1)"
        )));
    }
    let nf = n as f64;
    let mean = contributions.iter().sum::<f64>() / nf;
    let var = contributions
        .iter()
        .map(|c| (c - mean).powi(2))
        .sum::<f64>()
        / (nf - 1.0);
    let t = StudentsT::new(0.0, 1.0, nf - 1.0)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .inverse_cdf(1.0 - delta / 2.0);
    Ok(t * var.sqrt() / nf.sqrt())
}

/// Applies the selection rule to candidates given in order `j = 1..M`.
pub fn slope_select(estimates: &[f64], cnfs: &[f64]) -> Result<SlopeOutcome> {
    if estimates.is_empty() {
        return Err(Error::InvalidArgument(
            "SLOPE needs at least one candidate".into(),
        ));
    }
    if estimates.len() != cnfs.len() {
        return Err(Error::Shape("one CNF per candidate required".into()));
    }
    let c = inflation();
    let mut audit = Vec::new();
    let mut selected = 1;
    for j in 1..=estimates.len() {
        let mut ok = true;
        for m in 1..j {
            let lhs = (estimates[j - 1] - estimates[m - 1]).abs();
            let rhs = cnfs[j - 1] + c * cnfs[m - 1];
            let pass = lhs <= rhs;
            ok &= pass;
            audit.push(AuditEntry {
                j,
                m,
                lhs,
                rhs,
                pass,
            });
        }
        if ok {
            selected = j;
        }
    }
    let cnf_violations = (2..=cnfs.len())
        .filter(|&j| cnfs[j - 1] > cnfs[j - 2])
        .collect();
    Ok(SlopeOutcome {
        selected,
        audit,
        cnf_violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeReport {
    pub report: EstimateReport,
    pub retained_dims: usize,
    pub candidates: Vec<SlopeCandidate>,
    pub outcome: SlopeOutcome,
}

/// Plain GMIPS with the retained dimensions chosen among `D, D-1, ..., 1`.
pub fn gmips_with_slope(ds: &LoggedDataset, scope: Scope, delta: f64) -> Result<SlopeReport> {
    slope_from_ratios(ds, &marginal_ratios_all(ds)?, scope, delta)
}

/// SLOPE over marginal ratios `ratios[d - 1]` keeping `d` dimensions; the
/// candidates run from `ratios.len()` down to one.
pub fn slope_from_ratios(
    ds: &LoggedDataset,
    ratios: &[WeightMatrix],
    scope: Scope,
    delta: f64,
) -> Result<SlopeReport> {
    if ratios.is_empty() {
        return Err(Error::InvalidArgument(
            "SLOPE needs at least one candidate".into(),
        ));
    }
    let mut candidates = Vec::with_capacity(ratios.len());
    let mut reports = Vec::with_capacity(ratios.len());
    for dims in (1..=ratios.len()).rev() {
        let w = WeightMatrix::scoped(&ratios[dims - 1], scope);
        let report = estimate(ds, &w, false)?;
        let contrib = contributions(ds, &w);
        let half = cnf(&contrib, delta)?;
        candidates.push(SlopeCandidate {
            retained_dims: dims,
            estimate: report.value,
            contributions: contrib,
            cnf: half,
        });
        reports.push(report);
    }
    let estimates: Vec<f64> = candidates.iter().map(|c| c.estimate).collect();
    let cnfs: Vec<f64> = candidates.iter().map(|c| c.cnf).collect();
    let outcome = slope_select(&estimates, &cnfs)?;
    let pick = outcome.selected - 1;
    Ok(SlopeReport {
        report: reports.swap_remove(pick),
        retained_dims: candidates[pick].retained_dims,
        candidates,
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cnf_cases() {
        assert_eq!(cnf(&[1.5; 10], 0.05).unwrap(), 0.0);
        let v = cnf(&[0.0, 0.0, 2.0, 2.0], 0.05).unwrap();
        assert!(
            (v - 3.182446305284263 * (2.0 / 3f64.sqrt()) / 2.0).abs() < 1e-6,
            "{v}"
        );
        assert!((v - 1.8374).abs() < 1e-4);
        assert!(cnf(&[1.0], 0.05).is_err());
        assert!(cnf(&[1.0, 2.0], 1.5).is_err());
        let data = [0.3, 1.2, -0.7, 2.2, 0.9];
        assert!(cnf(&data, 0.025).unwrap() >= cnf(&data, 0.05).unwrap());
    }

    #[test]
    fn selection_cases() {
        assert_eq!(slope_select(&[3.0], &[1.0]).unwrap().selected, 1);
        assert_eq!(
            slope_select(&[2.0; 5], &[1.0, 0.8, 0.5, 0.4, 0.1])
                .unwrap()
                .selected,
            5
        );
        let two = slope_select(&[0.0, 10.0], &[1.0, 0.5]).unwrap();
        assert_eq!(two.selected, 1);
        assert!((two.audit[0].rhs - (0.5 + inflation())).abs() < 1e-15);
        assert!(two.is_consistent(2));
        assert!(slope_select(&[], &[]).is_err());
    }

    #[test]
    fn cnf_violation_is_recorded() {
        let out = slope_select(&[1.0, 1.0, 1.0], &[0.5, 0.7, 0.2]).unwrap();
        assert_eq!(out.cnf_violations, vec![2]);
        assert!(out.audit_text().contains("cnf increases at j=2"));
    }

    proptest! {
        #[test]
        fn shift_invariance(
            est in prop::collection::vec(-5.0f64..5.0, 1..8),
            shift in -100.0f64..100.0,
        ) {
            let cnfs: Vec<f64> = (0..est.len()).map(|j| 2.0 / (j + 1) as f64).collect();
            let base = slope_select(&est, &cnfs).unwrap();
            let shifted: Vec<f64> = est.iter().map(|e| e + shift).collect();
            let moved = slope_select(&shifted, &cnfs).unwrap();
            prop_assert!(base.is_consistent(est.len()));
            // rounding in the shift can only matter for checks on the boundary
            if base.audit.iter().all(|e| (e.lhs - e.rhs).abs() > 1e-9) {
                prop_assert_eq!(base.selected, moved.selected);
            }
        }

        #[test]
        fn zero_deviation_selects_last(v in -3.0f64..3.0, m in 1usize..10) {
            let cnfs: Vec<f64> = (0..m).map(|j| 1.0 / (j + 1) as f64).collect();
            prop_assert_eq!(slope_select(&vec![v; m], &cnfs).unwrap().selected, m);
        }
    }
}
