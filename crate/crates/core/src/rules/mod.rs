//! Sufficient rules: axis-aligned boxes over a sufficient subset `S` inside
//! which the forest keeps the anchor's decision with probability `pi`.

mod global;
mod grow;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use global::{GlobalSrParams, GlobalSrReport, RuleModel, RulePrediction};
pub use grow::{greedy_grow, BoxGrowth, GrowthStep, RuleParams};

use crate::dataset::Task;
use crate::projected::Interval;
use crate::sdp::Decision;
use crate::subset::Subset;

/// How the volume of a candidate box is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeMode {
    /// Empirical training mass, ties broken by scaled Lebesgue volume.
    #[default]
    Probability,
    /// Product of interval lengths after min-max feature scaling.
    Lebesgue,
}

impl std::str::FromStr for VolumeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "probability" => Ok(VolumeMode::Probability),
            "lebesgue" => Ok(VolumeMode::Lebesgue),
            other => Err(format!("unknown volume mode `{other}` (expected probability or lebesgue)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    /// Names of the constrained features, aligned with `intervals`.
    pub features: Vec<String>,
    pub feature_indices: Subset,
    /// One `(lo, hi]` interval per feature of `feature_indices`.
    pub intervals: Vec<Interval>,
    /// Mean target (regression) or majority label (classification) of the
    /// covered training samples.
    pub output: f64,
    pub task: Task,
    /// Decision of the instance the rule was grown from.
    pub decision: Decision,
    pub sdp_at_anchor: f64,
    /// Fraction of training samples inside the box.
    pub coverage: f64,
    /// Accuracy (classification) or negative MAE (regression) of `output`
    /// on the covered training samples.
    pub precision: f64,
    /// Number of covered training samples.
    pub support: usize,
}

impl Rule {
    /// Whether `x` (a full feature vector) satisfies every condition.
    pub fn covers(&self, x: &[f64]) -> bool {
        self.feature_indices.iter().zip(&self.intervals).all(|(f, iv)| iv.contains(x[f]))
    }

    /// Number of constrained features.
    pub fn size(&self) -> usize {
        self.feature_indices.len()
    }

    /// Same features and intervals.
    pub fn same_box(&self, other: &Rule) -> bool {
        self.feature_indices == other.feature_indices && self.intervals == other.intervals
    }

    pub fn render(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let conds: Vec<String> = self
            .features
            .iter()
            .zip(&self.intervals)
            .filter(|(_, iv)| !iv.is_unbounded())
            .map(|(name, iv)| match (iv.lo.is_finite(), iv.hi.is_finite()) {
                (true, true) => format!("{} < {name} <= {}", iv.lo, iv.hi),
                (true, false) => format!("{name} > {}", iv.lo),
                _ => format!("{name} <= {}", iv.hi),
            })
            .collect();
        let cond = if conds.is_empty() { "TRUE".to_string() } else { conds.join(" AND ") };
        match self.task {
            Task::Regression => write!(f, "IF {cond} THEN {:.4}", self.output),
            Task::Classification => write!(f, "IF {cond} THEN class {}", self.output),
        }
    }
}
