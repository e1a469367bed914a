//! Global-SR: a rule model assembled from the sufficient rules of many
//! training instances. Prediction uses the most precise covering rule and
//! abstains when no rule covers the point.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Rule, RuleParams, VolumeMode};
use crate::dataset::{Dataset, Task};
use crate::error::{Error, Result};
use crate::explain::ExplainParams;
use crate::forest::Forest;
use crate::sdp::{SdpEvaluator, DEFAULT_ALPHA1, DEFAULT_ALPHA2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSrParams {
    pub explain: ExplainParams,
    pub volume_mode: VolumeMode,
    /// Adaptive band levels (regression).
    pub alpha1: f64,
    pub alpha2: f64,
    /// Explain at most this many instances, drawn with `seed`.
    pub max_instances: Option<usize>,
    pub seed: u64,
}

impl Default for GlobalSrParams {
    fn default() -> Self {
        GlobalSrParams {
            explain: ExplainParams::default(),
            volume_mode: VolumeMode::Probability,
            alpha1: DEFAULT_ALPHA1,
            alpha2: DEFAULT_ALPHA2,
            max_instances: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSrReport {
    pub instances: usize,
    /// Instances without any sufficient explanation.
    pub skipped_instances: usize,
    /// M-SE members whose rule could not be grown.
    pub failed_rules: usize,
    pub duplicate_rules: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleModel {
    pub task: Task,
    pub feature_names: Vec<String>,
    pub rules: Vec<Rule>,
    pub report: GlobalSrReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RulePrediction {
    pub output: f64,
    pub rule_id: usize,
}

impl RuleModel {
    pub fn new(task: Task, feature_names: Vec<String>, rules: Vec<Rule>) -> Self {
        RuleModel {
            task,
            feature_names,
            rules,
            report: GlobalSrReport { instances: 0, skipped_instances: 0, failed_rules: 0, duplicate_rules: 0 },
        }
    }

    /// Output of the covering rule with the best precision (lowest id on
    /// ties), or `None` when no rule covers `x`.
    pub fn predict(&self, x: &[f64]) -> Option<RulePrediction> {
        let mut best: Option<(usize, &Rule)> = None;
        for (id, rule) in self.rules.iter().enumerate() {
            if rule.covers(x) && best.is_none_or(|(_, b)| rule.precision > b.precision) {
                best = Some((id, rule));
            }
        }
        best.map(|(rule_id, r)| RulePrediction { output: r.output, rule_id })
    }

    /// Fraction of rows of `data` covered by at least one rule.
    pub fn coverage(&self, data: &Dataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        data.rows().filter(|x| self.rules.iter().any(|r| r.covers(x))).count() as f64 / data.n_samples() as f64
    }
}

impl Forest {
    /// Explain instances of `train`, grow one rule per minimal sufficient
    /// explanation and merge them, dropping repeated boxes.
    pub fn build_global_sr(&self, train: &Dataset, params: &GlobalSrParams) -> Result<RuleModel> {
        params.explain.validate()?;
        if train.n_features() != self.n_features() {
            return Err(Error::DimensionMismatch { expected: self.n_features(), got: train.n_features() });
        }
        let mut ids: Vec<usize> = (0..train.n_samples()).collect();
        if let Some(m) = params.max_instances {
            if m < ids.len() {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                ids.shuffle(&mut rng);
                ids.truncate(m);
                ids.sort_unstable();
            }
        }
        let rule_params =
            RuleParams { pi: params.explain.pi, volume_mode: params.volume_mode, min_node_size: params.explain.min_node_size };
        let mns = params.explain.min_node_size.unwrap_or_else(|| self.default_min_node_size());

        let per_instance: Vec<Result<Option<(Vec<Rule>, usize)>>> = ids
            .par_iter()
            .map(|&i| {
                let x = train.row(i);
                let decision = self.decision_at(x, params.alpha1, params.alpha2)?;
                let expl = self.find_explanations(x, decision, &params.explain)?;
                if expl.mse.is_empty() {
                    return Ok(None);
                }
                let eval = SdpEvaluator::new(self, x, decision, mns)?;
                let mut rules = Vec::new();
                let mut failed = 0;
                for m in &expl.mse {
                    match self.grow_rule_with(&eval, &m.features, &rule_params) {
                        Ok(r) => rules.push(r),
                        Err(Error::NotSufficient(_) | Error::EmptyCell(_)) => failed += 1,
                        Err(e) => return Err(e),
                    }
                }
                Ok(Some((rules, failed)))
            })
            .collect();

        let mut report = GlobalSrReport { instances: ids.len(), skipped_instances: 0, failed_rules: 0, duplicate_rules: 0 };
        let mut rules: Vec<Rule> = Vec::new();
        for res in per_instance {
            match res? {
                None => report.skipped_instances += 1,
                Some((grown, failed)) => {
                    report.failed_rules += failed;
                    for r in grown {
                        if rules.iter().any(|q| q.same_box(&r)) {
                            report.duplicate_rules += 1;
                        } else {
                            rules.push(r);
                        }
                    }
                }
            }
        }
        log::info!(
            "global rule model: {} rules from {} instances ({} skipped)",
            rules.len(),
            report.instances,
            report.skipped_instances
        );
        Ok(RuleModel { task: self.task(), feature_names: self.data().feature_names().to_vec(), rules, report })
    }
}
