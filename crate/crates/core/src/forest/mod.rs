//! CART random forests for regression and classification, with the
//! adaptive-neighborhood view of their predictions: every query is a
//! weighted average over training samples, where sample `i` receives
//! `(1/k) * sum_l B_l(i) * 1{i in leaf_l(x)} / N_l(x)`.

mod index;
mod model;
mod tree;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub(crate) use index::{ones, popcount_and, ForestIndex};
pub use model::{HashPolicy, ModelDocument, MODEL_FORMAT, MODEL_VERSION};
pub use tree::{NodeId, Tree, TreeNode};

use crate::dataset::{Dataset, Task};
use crate::error::{Error, Result};

/// Forest hyperparameters. `None` fields are resolved at fit time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Minimum number of bootstrap observations per leaf.
    pub min_samples_leaf: usize,
    /// Candidate features per node; defaults to `ceil(p/3)` for regression
    /// and `ceil(sqrt(p))` for classification.
    pub mtry: Option<usize>,
    /// Bootstrap draw size `a_n` (with replacement); defaults to `n`.
    pub bootstrap_size: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 20, min_samples_leaf: 1, mtry: None, bootstrap_size: None, seed: 0 }
    }
}

impl ForestParams {
    /// `floor(sqrt(n) * ln(n)^1.5 / 250)`, at least 1.
    pub fn recommended_min_samples_leaf(n: usize) -> usize {
        if n < 2 {
            return 1;
        }
        let n = n as f64;
        ((n.sqrt() * n.ln().powf(1.5) / 250.0).floor() as usize).max(1)
    }

    /// 20 trees and the recommended leaf size for `n` samples.
    pub fn for_sample_size(n: usize, seed: u64) -> Self {
        Self { min_samples_leaf: Self::recommended_min_samples_leaf(n), seed, ..Self::default() }
    }

    pub fn default_mtry(p: usize, task: Task) -> usize {
        match task {
            Task::Regression => p.div_ceil(3),
            Task::Classification => (p as f64).sqrt().ceil() as usize,
        }
        .clamp(1, p.max(1))
    }

    /// Fill defaults and check ranges against the data shape.
    pub fn resolve(&self, n: usize, p: usize, task: Task) -> Result<ForestParams> {
        if self.n_trees == 0 {
            return Err(Error::param("n_trees", "must be at least 1"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::param("min_samples_leaf", "must be at least 1"));
        }
        let mtry = self.mtry.unwrap_or_else(|| Self::default_mtry(p, task));
        if mtry == 0 || mtry > p {
            return Err(Error::param("mtry", format!("must be in 1..={p}, got {mtry}")));
        }
        let bootstrap_size = self.bootstrap_size.unwrap_or(n);
        if bootstrap_size == 0 || bootstrap_size > n {
            return Err(Error::param("bootstrap_size", format!("must be in 1..={n}, got {bootstrap_size}")));
        }
        Ok(ForestParams { mtry: Some(mtry), bootstrap_size: Some(bootstrap_size), ..self.clone() })
    }
}

/// Per-tree seed derived from the master seed (splitmix64 finalizer).
fn tree_seed(master: u64, tree: usize) -> u64 {
    let mut z = master.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(tree as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Point prediction of the forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Prediction {
    Value { value: f64 },
    Class { label: usize, probabilities: Vec<f64> },
}

impl Prediction {
    pub fn value(&self) -> Option<f64> {
        match self {
            Prediction::Value { value } => Some(*value),
            Prediction::Class { .. } => None,
        }
    }

    pub fn label(&self) -> Option<usize> {
        match self {
            Prediction::Class { label, .. } => Some(*label),
            Prediction::Value { .. } => None,
        }
    }
}

/// A fitted forest. It keeps its training data: weights, projected
/// traversals and rules are all expressed over training samples.
pub struct Forest {
    trees: Vec<Tree>,
    params: ForestParams,
    data: Dataset,
    pub(crate) index: ForestIndex,
}

impl std::fmt::Debug for Forest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Forest")
            .field("n_trees", &self.trees.len())
            .field("params", &self.params)
            .field("n_samples", &self.data.n_samples())
            .field("n_features", &self.data.n_features())
            .finish()
    }
}

impl Forest {
    /// Fit `params.n_trees` CART trees on bootstrap draws of `data`.
    /// Trees are grown in parallel from per-tree seeds; the result does not
    /// depend on scheduling.
    pub fn fit(data: Dataset, params: &ForestParams) -> Result<Forest> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let params = params.resolve(data.n_samples(), data.n_features(), data.task())?;
        let columns = data.columns();
        let cfg = tree::GrowConfig {
            min_samples_leaf: params.min_samples_leaf as u64,
            mtry: params.mtry.unwrap_or(1),
            bootstrap_size: params.bootstrap_size.unwrap_or(data.n_samples()),
        };
        let trees: Vec<Tree> = (0..params.n_trees)
            .into_par_iter()
            .map(|l| {
                let seed = tree_seed(params.seed, l);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                tree::grow_tree(&data, &columns, &cfg, seed, &mut rng)
            })
            .collect();
        log::debug!("fitted {} trees, {} internal nodes", trees.len(), trees.iter().map(Tree::n_internal).sum::<usize>());
        Ok(Self::assemble(trees, params, data))
    }

    /// Build a forest from explicit trees (e.g. hand-made fixtures or a
    /// deserialized model), validating them against `data`.
    pub fn from_parts(trees: Vec<Tree>, params: ForestParams, data: Dataset) -> Result<Forest> {
        if trees.is_empty() {
            return Err(Error::param("n_trees", "a forest needs at least one tree"));
        }
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let p = data.n_features();
        for (l, tree) in trees.iter().enumerate() {
            if tree.bootstrap_counts().len() != data.n_samples() {
                return Err(Error::ModelFormat(format!(
                    "tree {l} has {} bootstrap counts for {} samples",
                    tree.bootstrap_counts().len(),
                    data.n_samples()
                )));
            }
            tree.validate()?;
            for node in tree.nodes() {
                if let TreeNode::Internal { feature, .. } = node {
                    if *feature >= p {
                        return Err(Error::FeatureOutOfRange { index: *feature, n_features: p });
                    }
                }
                if let TreeNode::Leaf { bootstrap_total: 0, .. } = node {
                    return Err(Error::ModelFormat(format!("tree {l} has a leaf without bootstrap mass")));
                }
            }
        }
        let params = ForestParams { n_trees: trees.len(), ..params };
        Ok(Self::assemble(trees, params, data))
    }

    fn assemble(trees: Vec<Tree>, params: ForestParams, data: Dataset) -> Forest {
        let index = ForestIndex::build(&trees, &data);
        Forest { trees, params, data, index }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn task(&self) -> Task {
        self.data.task()
    }

    pub fn n_features(&self) -> usize {
        self.data.n_features()
    }

    pub fn n_samples(&self) -> usize {
        self.data.n_samples()
    }

    /// All thresholds used on `feature`, ascending.
    pub fn thresholds(&self, feature: usize) -> &[f64] {
        &self.index.thresholds[feature]
    }

    pub(crate) fn check_query(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch { expected: self.n_features(), got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("x", "query contains non-finite values"));
        }
        Ok(())
    }

    pub(crate) fn require_task(&self, op: &'static str, task: Task) -> Result<()> {
        if self.task() != task {
            return Err(Error::WrongTask { op, expected: task.as_str() });
        }
        Ok(())
    }

    /// Leaf of tree `tree` reached by `x`.
    pub fn tree_leaf(&self, tree: usize, x: &[f64]) -> NodeId {
        self.trees[tree].leaf(x)
    }

    /// Adaptive-neighborhood weights of the training samples for `x`.
    pub fn weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_query(x)?;
        let k = self.trees.len() as f64;
        let mut w = vec![0.0; self.n_samples()];
        for tree in &self.trees {
            let TreeNode::Leaf { sample_ids, bootstrap_total } = tree.node(tree.leaf(x)) else {
                unreachable!("descent always ends at a leaf")
            };
            assert!(*bootstrap_total > 0, "corrupted model: leaf without bootstrap mass");
            let denom = k * *bootstrap_total as f64;
            let counts = tree.bootstrap_counts();
            for &i in sample_ids {
                w[i as usize] += f64::from(counts[i as usize]) / denom;
            }
        }
        Ok(w)
    }

    /// Forest prediction: weighted mean (regression) or weighted class vote
    /// with ties going to the smallest label (classification).
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let w = self.weights(x)?;
        Ok(self.prediction_from_weights(&w))
    }

    pub(crate) fn prediction_from_weights(&self, w: &[f64]) -> Prediction {
        match self.task() {
            Task::Regression => Prediction::Value { value: weighted_mean(w, self.data.targets()) },
            Task::Classification => {
                let probabilities = class_probabilities(w, &self.data);
                let label = argmax(&probabilities);
                Prediction::Class { label, probabilities }
            }
        }
    }

    /// Regression prediction as a plain number.
    pub fn predict_value(&self, x: &[f64]) -> Result<f64> {
        self.require_task("predict_value", Task::Regression)?;
        let w = self.weights(x)?;
        Ok(weighted_mean(&w, self.data.targets()))
    }

    /// Predicted label (classification) or value (regression) as `f64`.
    pub fn predict_scalar(&self, x: &[f64]) -> Result<f64> {
        Ok(match self.predict(x)? {
            Prediction::Value { value } => value,
            Prediction::Class { label, .. } => label as f64,
        })
    }

    /// Number of internal nodes splitting on each feature, over all trees.
    pub fn split_frequency(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_features()];
        for tree in &self.trees {
            for node in tree.nodes() {
                if let TreeNode::Internal { feature, .. } = node {
                    counts[*feature] += 1;
                }
            }
        }
        counts
    }
}

/// `sum_i w_i * y_i`, accumulated in index order.
pub(crate) fn weighted_mean(w: &[f64], y: &[f64]) -> f64 {
    w.iter().zip(y).map(|(w, y)| w * y).sum()
}

pub(crate) fn class_probabilities(w: &[f64], data: &Dataset) -> Vec<f64> {
    let mut probs = vec![0.0; data.n_classes()];
    for (i, &wi) in w.iter().enumerate() {
        if wi != 0.0 {
            probs[data.label(i)] += wi;
        }
    }
    probs
}

/// Index of the maximum, smallest index on ties.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests;
