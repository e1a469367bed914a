use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::GaussianSampler;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::explain::ExplainParams;
use crate::forest::Forest;
use crate::projected::Interval;
use crate::rules::{Rule, RuleModel, RuleParams};
use crate::sdp::{Decision, SdpEvaluator, DEFAULT_ALPHA1, DEFAULT_ALPHA2};

/// Interval IoU above which two rule boxes count as the same in the
/// near-match statistic.
pub const NEAR_MATCH_IOU: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sparsity {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max: usize,
}

impl Sparsity {
    pub fn of(sizes: &[usize]) -> Sparsity {
        if sizes.is_empty() {
            return Sparsity { mean: 0.0, std: 0.0, max: 0 };
        }
        let n = sizes.len() as f64;
        let mean = sizes.iter().sum::<usize>() as f64 / n;
        let var = sizes.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / n;
        Sparsity { mean, std: var.sqrt(), max: *sizes.iter().max().unwrap() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleReport {
    /// Fraction of test rows covered by some rule.
    pub coverage: f64,
    /// Among covered rows, fraction where the forest's prediction keeps the
    /// decision of the answering rule's anchor.
    pub correctness: f64,
    pub sparsity: Sparsity,
    pub n_test: usize,
    pub n_covered: usize,
}

/// Coverage, correctness and sparsity of a rule model on `test`.
pub fn rule_metrics(forest: &Forest, model: &RuleModel, test: &Dataset) -> Result<RuleReport> {
    let mut covered = 0;
    let mut correct = 0;
    for x in test.rows() {
        if let Some(pred) = model.predict(x) {
            covered += 1;
            let rule = &model.rules[pred.rule_id];
            if rule.decision.accepts_prediction(&forest.predict(x)?) {
                correct += 1;
            }
        }
    }
    let sizes: Vec<usize> = model.rules.iter().map(Rule::size).collect();
    Ok(RuleReport {
        coverage: if test.is_empty() { 0.0 } else { covered as f64 / test.n_samples() as f64 },
        correctness: if covered == 0 { 0.0 } else { correct as f64 / covered as f64 },
        sparsity: Sparsity::of(&sizes),
        n_test: test.n_samples(),
        n_covered: covered,
    })
}

/// Anything that produces a rule for an instance, as used by the stability
/// protocol.
pub trait RuleExplainer: Sync {
    /// The rule explaining `x`, if one can be built.
    fn explain(&self, x: &[f64]) -> Result<Option<Rule>>;

    /// Whether the model's decision at `z` equals its decision at `x`.
    fn same_prediction(&self, x: &[f64], z: &[f64]) -> Result<bool>;

    /// Data range of each feature, used to clamp infinite interval ends
    /// when comparing boxes.
    fn feature_ranges(&self) -> Vec<(f64, f64)>;
}

/// Rule of the highest-SDP minimal sufficient explanation of the forest's
/// own decision at `x`. When that set cannot support a rule, the next one
/// in SDP order is tried.
pub struct ForestRuleExplainer<'f> {
    pub forest: &'f Forest,
    pub explain: ExplainParams,
    pub rule: RuleParams,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl<'f> ForestRuleExplainer<'f> {
    pub fn new(forest: &'f Forest, explain: ExplainParams, rule: RuleParams) -> Self {
        ForestRuleExplainer { forest, explain, rule, alpha1: DEFAULT_ALPHA1, alpha2: DEFAULT_ALPHA2 }
    }

    fn decision(&self, x: &[f64]) -> Result<Decision> {
        self.forest.decision_at(x, self.alpha1, self.alpha2)
    }
}

impl RuleExplainer for ForestRuleExplainer<'_> {
    fn explain(&self, x: &[f64]) -> Result<Option<Rule>> {
        let decision = self.decision(x)?;
        let expl = self.forest.find_explanations(x, decision, &self.explain)?;
        let mns = self.rule.min_node_size.unwrap_or_else(|| self.forest.default_min_node_size());
        let eval = SdpEvaluator::new(self.forest, x, decision, mns)?;
        let mut order: Vec<_> = expl.mse.iter().collect();
        // Stable sort keeps the enumeration order among equal SDPs.
        order.sort_by(|a, b| b.sdp.total_cmp(&a.sdp));
        for m in order {
            match self.forest.grow_rule_with(&eval, &m.features, &self.rule) {
                Ok(r) => return Ok(Some(r)),
                Err(Error::NotSufficient(_) | Error::EmptyCell(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(None)
    }

    fn same_prediction(&self, x: &[f64], z: &[f64]) -> Result<bool> {
        let px = self.forest.predict(x)?;
        let pz = self.forest.predict(z)?;
        Ok(match (px.label(), pz.label()) {
            (Some(a), Some(b)) => a == b,
            _ => self.decision(x)?.accepts_prediction(&pz),
        })
    }

    fn feature_ranges(&self) -> Vec<(f64, f64)> {
        self.forest
            .index
            .columns
            .iter()
            .map(|c| (c.iter().copied().fold(f64::INFINITY, f64::min), c.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityResult {
    /// Distinct rules under exact box equality; "no rule" counts as one
    /// outcome.
    pub distinct: usize,
    /// Distinct rules when boxes with interval IoU >=
    /// [`NEAR_MATCH_IOU`] on every feature are merged.
    pub near_distinct: usize,
    /// Perturbations drawn, including rejected ones.
    pub attempts: usize,
}

/// Explain `n_perturb` noisy copies `x + N(0, epsilon I)` of `x` whose
/// prediction matches that of `x`, and count the distinct rules produced. Draws that change the prediction are resampled, up to
/// `10 * n_perturb` attempts.
pub fn stability(explainer: &dyn RuleExplainer, x: &[f64], epsilon: f64, n_perturb: usize, seed: u64) -> Result<StabilityResult> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::param("epsilon", "must be finite and non-negative"));
    }
    if n_perturb == 0 {
        return Err(Error::param("n_perturb", "must be at least 1"));
    }
    let max_attempts = 10 * n_perturb;
    let p = x.len();
    let sampler = GaussianSampler::new(&nalgebra::DMatrix::identity(p, p))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = epsilon.sqrt();
    let mut noise = vec![0.0; p];
    let mut points = Vec::with_capacity(n_perturb);
    let mut attempts = 0;
    while points.len() < n_perturb {
        if attempts == max_attempts {
            return Err(Error::UnstablePrediction { attempts });
        }
        attempts += 1;
        sampler.sample_into(&mut rng, &mut noise);
        let z: Vec<f64> = x.iter().zip(&noise).map(|(a, e)| a + sd * e).collect();
        if explainer.same_prediction(x, &z)? {
            points.push(z);
        }
    }
    let outcomes: Vec<Option<Rule>> = {
        use rayon::prelude::*;
        points.par_iter().map(|z| explainer.explain(z)).collect::<Result<_>>()?
    };

    let mut exact: Vec<&Option<Rule>> = Vec::new();
    for o in &outcomes {
        if !exact.iter().any(|e| same_outcome(e, o)) {
            exact.push(o);
        }
    }
    let ranges = explainer.feature_ranges();
    let mut near: Vec<&Option<Rule>> = Vec::new();
    for o in &outcomes {
        if !near.iter().any(|e| near_outcome(e, o, &ranges)) {
            near.push(o);
        }
    }
    Ok(StabilityResult { distinct: exact.len(), near_distinct: near.len(), attempts })
}

fn same_outcome(a: &Option<Rule>, b: &Option<Rule>) -> bool {
    match (a, b) {
        (Some(r), Some(q)) => r.same_box(q),
        (None, None) => true,
        _ => false,
    }
}

fn near_outcome(a: &Option<Rule>, b: &Option<Rule>, ranges: &[(f64, f64)]) -> bool {
    match (a, b) {
        (Some(r), Some(q)) => {
            r.feature_indices == q.feature_indices
                && r.feature_indices
                    .iter()
                    .zip(r.intervals.iter().zip(&q.intervals))
                    .all(|(f, (u, v))| interval_iou(u, v, ranges[f]) >= NEAR_MATCH_IOU)
        }
        (None, None) => true,
        _ => false,
    }
}

/// IoU of two intervals after clamping to `range`; two empty clamped
/// intervals count as identical.
fn interval_iou(a: &Interval, b: &Interval, range: (f64, f64)) -> f64 {
    let clamp = |iv: &Interval| (iv.lo.max(range.0), iv.hi.min(range.1));
    let (a0, a1) = clamp(a);
    let (b0, b1) = clamp(b);
    let inter = (a1.min(b1) - a0.max(b0)).max(0.0);
    let union = (a1 - a0).max(0.0) + (b1 - b0).max(0.0) - inter;
    if union <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    inter / union
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparsity_arithmetic() {
        let s = Sparsity::of(&[1, 1, 2]);
        assert!((s.mean - 4.0 / 3.0).abs() < 1e-12);
        assert!((s.std - (2.0f64 / 9.0).sqrt()).abs() < 1e-12);
        assert_eq!(s.max, 2);
    }

    #[test]
    fn iou_clamps_infinite_ends() {
        let r = (0.0, 10.0);
        let a = Interval::new(5.0, f64::INFINITY);
        let b = Interval::new(5.0, 1e9);
        assert_eq!(interval_iou(&a, &b, r), 1.0);
        let c = Interval::new(0.0, 5.0);
        assert_eq!(interval_iou(&a, &c, r), 0.0);
        let d = Interval::new(6.0, 10.0);
        assert!((interval_iou(&a, &d, r) - 0.8).abs() < 1e-12);
    }

    /// Rule `(floor(x0), floor(x0) + 1]` on feature 0; the prediction is
    /// the sign of feature 1, undefined at 0. Records every point it
    /// explains.
    struct FloorExplainer(std::sync::Mutex<Vec<Vec<f64>>>);

    impl RuleExplainer for FloorExplainer {
        fn explain(&self, x: &[f64]) -> Result<Option<Rule>> {
            self.0.lock().unwrap().push(x.to_vec());
            if x[0] > 3.0 {
                return Ok(None);
            }
            let lo = x[0].floor();
            Ok(Some(Rule {
                features: vec!["X1".into()],
                feature_indices: crate::subset::Subset::new(vec![0]),
                intervals: vec![Interval::new(lo, lo + 1.0)],
                output: 1.0,
                task: crate::dataset::Task::Classification,
                decision: Decision::Class(1),
                sdp_at_anchor: 1.0,
                coverage: 0.5,
                precision: 1.0,
                support: 10,
            }))
        }

        fn same_prediction(&self, x: &[f64], z: &[f64]) -> Result<bool> {
            Ok(x[1] != 0.0 && z[1] != 0.0 && (x[1] > 0.0) == (z[1] > 0.0))
        }

        fn feature_ranges(&self) -> Vec<(f64, f64)> {
            vec![(-10.0, 10.0); 2]
        }
    }

    #[test]
    fn stability_counts_distinct_boxes_of_kept_draws() {
        for (x, eps) in [([0.5, 0.2], 0.0), ([0.5, 0.2], 0.3), ([2.9, 1.0], 1.0), ([1.0, -0.1], 2.0)] {
            let stub = FloorExplainer(Default::default());
            let r = stability(&stub, &x, eps, 40, 9).unwrap();
            let seen = stub.0.into_inner().unwrap();
            assert_eq!(seen.len(), 40);
            assert!(seen.iter().all(|z| (z[1] > 0.0) == (x[1] > 0.0)));
            let mut keys: Vec<Option<i64>> = seen.iter().map(|z| (z[0] <= 3.0).then(|| z[0].floor() as i64)).collect();
            keys.sort();
            keys.dedup();
            assert_eq!(r.distinct, keys.len());
            assert!(r.near_distinct <= r.distinct);
            assert!(r.attempts >= 40);
            if eps == 0.0 {
                assert_eq!(r.distinct, 1);
            }
        }
    }

    #[test]
    fn stability_gives_up_when_prediction_always_changes() {
        let stub = FloorExplainer(Default::default());
        let err = stability(&stub, &[0.5, 0.0], 0.0, 5, 1).unwrap_err();
        assert!(matches!(err, Error::UnstablePrediction { attempts: 50 }));
    }
}
