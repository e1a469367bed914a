//! Quantitative evaluation: feature discovery, projected-predictor error,
//! rule quality and stability, and validation of projected CDFs against a
//! Monte-Carlo oracle.

mod oracle;
mod rule_metrics;

use serde::{Deserialize, Serialize};

pub use oracle::{
    cdf_validation, compare_curves, conditional_gaussian, y_grid, CdfOracle, CdfValidation, ConditionalGaussian, CurveComparison,
    McOracle, Y_GRID_POINTS,
};
pub use rule_metrics::{
    rule_metrics, stability, ForestRuleExplainer, RuleExplainer, RuleReport, Sparsity, StabilityResult, NEAR_MATCH_IOU,
};

use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::subset::Subset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub tpr: f64,
    pub fdr: f64,
    /// Instances scored (non-empty truth).
    pub n_scored: usize,
    /// Instances skipped because their truth set was empty.
    pub n_skipped: usize,
    /// `(tpr, fdr)` per scored instance, in input order.
    pub per_instance: Vec<(f64, f64)>,
}

/// Mean true-positive and false-discovery rates of selected feature sets.
pub fn discovery_metrics(selected: &[Vec<usize>], truth: &[Vec<usize>]) -> Result<DiscoveryReport> {
    if selected.len() != truth.len() {
        return Err(Error::param("selected", format!("{} selections for {} truth sets", selected.len(), truth.len())));
    }
    let mut per_instance = Vec::new();
    let mut skipped = 0;
    for (sel, tru) in selected.iter().zip(truth) {
        let sel = Subset::new(sel.clone());
        let tru = Subset::new(tru.clone());
        if tru.is_empty() {
            skipped += 1;
            continue;
        }
        let hits = sel.iter().filter(|&f| tru.contains(f)).count();
        let tpr = hits as f64 / tru.len() as f64;
        let fdr = (sel.len() - hits) as f64 / sel.len().max(1) as f64;
        per_instance.push((tpr, fdr));
    }
    let m = per_instance.len().max(1) as f64;
    Ok(DiscoveryReport {
        tpr: per_instance.iter().map(|v| v.0).sum::<f64>() / m,
        fdr: per_instance.iter().map(|v| v.1).sum::<f64>() / m,
        n_scored: per_instance.len(),
        n_skipped: skipped,
        per_instance,
    })
}

/// Mean over probes of `(predict(z) - projected_mean(z, S_z))^2`, with one
/// subset per probe.
pub fn p_mse(forest: &Forest, probes: &[Vec<f64>], subsets: &[Subset], min_node_size: usize) -> Result<f64> {
    forest.require_task("p_mse", crate::Task::Regression)?;
    if probes.len() != subsets.len() {
        return Err(Error::param("subsets", format!("{} subsets for {} probes", subsets.len(), probes.len())));
    }
    if probes.is_empty() {
        return Err(Error::param("probes", "at least one probe is required"));
    }
    let mut total = 0.0;
    for (z, s) in probes.iter().zip(subsets) {
        let full = forest.predict_value(z)?;
        let proj = forest.projected_mean(z, s, min_node_size)?;
        total += (full - proj) * (full - proj);
    }
    Ok(total / probes.len() as f64)
}

/// Coefficient of determination of `pred` against `truth`.
pub fn r_squared(pred: &[f64], truth: &[f64]) -> f64 {
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|y| (y - mean) * (y - mean)).sum();
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, y)| (p - y) * (p - y)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY };
    }
    1.0 - ss_res / ss_tot
}

pub fn mean_absolute_error(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, y)| (p - y).abs()).sum::<f64>() / truth.len().max(1) as f64
}

pub fn accuracy(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).filter(|(p, y)| p == y).count() as f64 / truth.len().max(1) as f64
}

#[cfg(test)]
mod tests;
