//! Same Decision Probability: the projected-forest probability that the
//! response keeps the instance's decision given only `x_S`.

use serde::{Deserialize, Serialize};

use crate::dataset::Task;
use crate::error::{Error, Result};
use crate::forest::{popcount_and, Forest, Prediction};
use crate::projected::{Projection, Traversal};
use crate::subset::Subset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BandProvenance {
    /// `[y - sqrt(t), y + sqrt(t)]` around a prediction `y`.
    FixedT { t: f64 },
    /// `[q_alpha1(x), q_{1-alpha2}(x)]` from the forest's conditional quantiles.
    AdaptiveQuantile { alpha1: f64, alpha2: f64 },
    /// Given explicitly by the caller.
    Manual,
}

/// Closed interval of responses counted as "the same decision".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionBand {
    pub lo: f64,
    pub hi: f64,
    pub provenance: BandProvenance,
}

impl DecisionBand {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::param("band", format!("need lo <= hi, got [{lo}, {hi}]")));
        }
        Ok(DecisionBand { lo, hi, provenance: BandProvenance::Manual })
    }

    /// Band of squared radius `t` around `y`.
    pub fn fixed(y: f64, t: f64) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) || !y.is_finite() {
            return Err(Error::param("t", format!("need finite y and t >= 0, got y={y}, t={t}")));
        }
        let r = t.sqrt();
        Ok(DecisionBand { lo: y - r, hi: y + r, provenance: BandProvenance::FixedT { t } })
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }
}

/// The decision an explanation must preserve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Band(DecisionBand),
    Class(usize),
}

impl Decision {
    /// Whether a response value keeps the decision.
    pub fn accepts(&self, y: f64) -> bool {
        match self {
            Decision::Band(b) => b.contains(y),
            Decision::Class(c) => y == *c as f64,
        }
    }

    /// Whether a forest prediction keeps the decision.
    pub fn accepts_prediction(&self, p: &Prediction) -> bool {
        match (self, p) {
            (Decision::Band(b), Prediction::Value { value }) => b.contains(*value),
            (Decision::Class(c), Prediction::Class { label, .. }) => label == c,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpResult {
    pub value: f64,
    pub subset: Subset,
    pub decision: Decision,
}

/// Default adaptive-band quantile levels.
pub const DEFAULT_ALPHA1: f64 = 0.05;
pub const DEFAULT_ALPHA2: f64 = 0.05;

impl Forest {
    fn check_decision(&self, decision: &Decision) -> Result<()> {
        match decision {
            Decision::Band(b) => {
                self.require_task("sdp_regression", Task::Regression)?;
                if b.lo.is_nan() || b.hi.is_nan() || b.lo > b.hi {
                    return Err(Error::param("band", "need lo <= hi"));
                }
            }
            Decision::Class(c) => {
                self.require_task("sdp_classification", Task::Classification)?;
                if *c >= self.data().n_classes() {
                    return Err(Error::UnknownClass { label: *c, n_classes: self.data().n_classes() });
                }
            }
        }
        Ok(())
    }

    /// `sum_i w_i(x_S) 1{lo <= Y_i <= hi}`.
    pub fn sdp_regression(&self, x: &[f64], band: DecisionBand, subset: &Subset, min_node_size: usize) -> Result<SdpResult> {
        let decision = Decision::Band(band);
        let eval = SdpEvaluator::new(self, x, decision, min_node_size)?;
        eval.result(subset)
    }

    /// `sum_i w_i(x_S) 1{Y_i = label}`.
    pub fn sdp_classification(&self, x: &[f64], label: usize, subset: &Subset, min_node_size: usize) -> Result<SdpResult> {
        let eval = SdpEvaluator::new(self, x, Decision::Class(label), min_node_size)?;
        eval.result(subset)
    }

    /// `[q_alpha1(x), q_{1-alpha2}(x)]` from the full forest's weights.
    pub fn adaptive_band(&self, x: &[f64], alpha1: f64, alpha2: f64) -> Result<DecisionBand> {
        self.require_task("adaptive_band", Task::Regression)?;
        for (name, a) in [("alpha1", alpha1), ("alpha2", alpha2)] {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::param(name, format!("must lie in (0, 1), got {a}")));
            }
        }
        if alpha1 + alpha2 >= 1.0 {
            return Err(Error::param("alpha2", "alpha1 + alpha2 must be below 1"));
        }
        let proj = Projection::from_weights(self, self.weights(x)?);
        let lo = proj.quantile(alpha1)?;
        let hi = proj.quantile(1.0 - alpha2)?;
        assert!(lo <= hi, "quantiles crossed: {lo} > {hi}");
        Ok(DecisionBand { lo, hi, provenance: BandProvenance::AdaptiveQuantile { alpha1, alpha2 } })
    }

    /// The decision of the forest at `x`: the adaptive band (regression) or
    /// the predicted class (classification).
    pub fn decision_at(&self, x: &[f64], alpha1: f64, alpha2: f64) -> Result<Decision> {
        match self.task() {
            Task::Regression => Ok(Decision::Band(self.adaptive_band(x, alpha1, alpha2)?)),
            Task::Classification => Ok(Decision::Class(self.predict(x)?.label().expect("classification"))),
        }
    }
}

/// SDP of many subsets for one query. Per-tree masks of the bootstrap
/// observations keeping the decision are built once.
pub struct SdpEvaluator<'f> {
    forest: &'f Forest,
    x: Vec<f64>,
    decision: Decision,
    min_node_size: u64,
    masks: Vec<Vec<u64>>,
}

impl<'f> SdpEvaluator<'f> {
    pub fn new(forest: &'f Forest, x: &[f64], decision: Decision, min_node_size: usize) -> Result<Self> {
        forest.check_query(x)?;
        forest.check_decision(&decision)?;
        if min_node_size == 0 {
            return Err(Error::param("min_node_size", "must be at least 1"));
        }
        let y = forest.data().targets();
        let masks = forest.index.trees.iter().map(|ti| ti.slot_mask(|i| decision.accepts(y[i]))).collect();
        Ok(SdpEvaluator { forest, x: x.to_vec(), decision, min_node_size: min_node_size as u64, masks })
    }

    pub fn forest(&self) -> &'f Forest {
        self.forest
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn decision(&self) -> &Decision {
        &self.decision
    }

    /// SDP of `subset` at the evaluator's own query.
    pub fn sdp(&self, subset: &Subset) -> f64 {
        self.sdp_at(&self.x, subset)
    }

    /// SDP of `subset` at another point `z` (same decision).
    pub fn sdp_at(&self, z: &[f64], subset: &Subset) -> f64 {
        let mask = subset.mask(self.forest.n_features());
        let mut tr = Traversal::new();
        let mut total = 0.0;
        for (l, m) in self.masks.iter().enumerate() {
            tr.run(self.forest, l, z, &mask, self.min_node_size);
            assert!(tr.count > 0, "projected cell without bootstrap mass");
            total += popcount_and(&tr.bits, m) as f64 / tr.count as f64;
        }
        (total / self.masks.len() as f64).min(1.0)
    }

    pub fn result(&self, subset: &Subset) -> Result<SdpResult> {
        subset.validate(self.forest.n_features())?;
        Ok(SdpResult { value: self.sdp(subset), subset: subset.clone(), decision: self.decision })
    }
}
