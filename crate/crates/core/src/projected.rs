//! Projected forests: estimates conditioned on a feature subset `S` only.
//!
//! Each tree is descended level by level. At a split on a feature in `S`
//! the query follows the child containing `x_S` and the tree's set of
//! compatible bootstrap observations is filtered by the split; at a split
//! on any other feature both children are visited and nothing is filtered.
//! A tree's compatible set is therefore the bootstrap sample restricted to
//! the intersection of all retained `S`-constraints, and its box is the
//! conjunction of those constraints.
//!
//! A constraint that would leave fewer than `min_node_size` bootstrap
//! observations is not applied and the node is frozen: its subtree is not
//! explored. Nodes are processed in level order, left before right.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::Task;
use crate::error::{Error, Result};
use crate::forest::{argmax, class_probabilities, ones, popcount_and, weighted_mean, Forest, TreeNode};
use crate::subset::{FeatureMask, Subset};

/// Half-open interval `(lo, hi]`, matching the "`<=` goes left" routing.
/// Infinite ends are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo < v && v <= self.hi
    }

    pub fn is_unbounded(&self) -> bool {
        self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY
    }

    /// Interval of points in both.
    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.max(other.lo), hi: self.hi.min(other.hi) }
    }

    pub fn is_within(&self, other: &Interval) -> bool {
        self.lo >= other.lo && self.hi <= other.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}]", self.lo, self.hi)
    }
}

// JSON form: `[lo, hi]` with `null` for infinite ends.
impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let lo = self.lo.is_finite().then_some(self.lo);
        let hi = self.hi.is_finite().then_some(self.hi);
        (lo, hi).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let (lo, hi) = <(Option<f64>, Option<f64>)>::deserialize(d)?;
        Ok(Interval { lo: lo.unwrap_or(f64::NEG_INFINITY), hi: hi.unwrap_or(f64::INFINITY) })
    }
}

/// Compatible samples and box of a projected traversal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedCell {
    pub subset: Subset,
    /// One interval per feature of `subset`, in the same order.
    pub intervals: Vec<Interval>,
    /// Training indices of the cell, ascending.
    pub sample_ids: Vec<usize>,
    /// Bootstrap observations carried by `sample_ids`.
    pub bootstrap_total: u64,
    /// Nodes where refinement stopped because of `min_node_size`.
    pub frozen_nodes: usize,
}

impl ProjectedCell {
    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    /// Whether `x` (a full feature vector) lies in the box.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.subset.iter().zip(&self.intervals).all(|(f, iv)| iv.contains(x[f]))
    }
}

/// Reusable state of one projected tree descent.
pub(crate) struct Traversal {
    /// Compatible bootstrap slots.
    pub bits: Vec<u64>,
    pub count: u64,
    /// Box bounds indexed by feature (only `S` entries are meaningful).
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub frozen: usize,
    queue: VecDeque<usize>,
}

impl Traversal {
    pub fn new() -> Self {
        Traversal { bits: Vec::new(), count: 0, lo: Vec::new(), hi: Vec::new(), frozen: 0, queue: VecDeque::new() }
    }

    pub fn run(&mut self, forest: &Forest, tree: usize, x: &[f64], mask: &FeatureMask, min_node_size: u64) {
        let index = &forest.index;
        let ti = &index.trees[tree];
        let nodes = forest.trees()[tree].nodes();
        ti.fill_full(&mut self.bits);
        self.count = ti.slots.len() as u64;
        let p = forest.n_features();
        self.lo.clear();
        self.lo.resize(p, f64::NEG_INFINITY);
        self.hi.clear();
        self.hi.resize(p, f64::INFINITY);
        self.frozen = 0;
        self.queue.clear();
        self.queue.push_back(forest.trees()[tree].root());

        while let Some(id) = self.queue.pop_front() {
            let TreeNode::Internal { feature, threshold, left, right } = nodes[id] else {
                continue;
            };
            if !mask.intersects(&ti.subtree_features[id]) {
                continue;
            }
            if !mask.contains(feature) {
                self.queue.push_back(left);
                self.queue.push_back(right);
                continue;
            }
            let goes_left = x[feature] <= threshold;
            let tightens = if goes_left { threshold < self.hi[feature] } else { threshold > self.lo[feature] };
            if tightens {
                let lb = ti.left_bits(id, feature, threshold, &index.columns);
                let kept = if goes_left {
                    popcount_and(&self.bits, lb)
                } else {
                    self.bits.iter().zip(lb).map(|(a, b)| u64::from((a & !b).count_ones())).sum()
                };
                if kept < min_node_size {
                    self.frozen += 1;
                    continue;
                }
                if goes_left {
                    self.bits.iter_mut().zip(lb).for_each(|(a, b)| *a &= b);
                    self.hi[feature] = threshold;
                } else {
                    self.bits.iter_mut().zip(lb).for_each(|(a, b)| *a &= !b);
                    self.lo[feature] = threshold;
                }
                self.count = kept;
            }
            self.queue.push_back(if goes_left { left } else { right });
        }
    }
}

/// Projected forest evaluated at one query: per-sample weights plus the
/// quantities derived from them.
#[derive(Debug, Clone)]
pub struct Projection<'f> {
    forest: &'f Forest,
    weights: Vec<f64>,
}

impl Forest {
    /// Default minimum node size of projected traversals: the forest's
    /// `min_samples_leaf`.
    pub fn default_min_node_size(&self) -> usize {
        self.params().min_samples_leaf
    }

    fn check_projection_args(&self, x: &[f64], subset: &Subset, min_node_size: usize) -> Result<()> {
        self.check_query(x)?;
        subset.validate(self.n_features())?;
        if min_node_size == 0 {
            return Err(Error::param("min_node_size", "must be at least 1"));
        }
        Ok(())
    }

    /// Projected traversal of a single tree.
    pub fn projected_cell(&self, tree: usize, x: &[f64], subset: &Subset, min_node_size: usize) -> Result<ProjectedCell> {
        self.check_projection_args(x, subset, min_node_size)?;
        if tree >= self.n_trees() {
            return Err(Error::param("tree", format!("index {tree} out of range for {} trees", self.n_trees())));
        }
        let mut tr = Traversal::new();
        tr.run(self, tree, x, &subset.mask(self.n_features()), min_node_size as u64);
        let slots = &self.index.trees[tree].slots;
        let mut sample_ids: Vec<usize> = ones(&tr.bits).map(|s| slots[s] as usize).collect();
        sample_ids.dedup();
        Ok(ProjectedCell {
            subset: subset.clone(),
            intervals: subset.iter().map(|f| Interval::new(tr.lo[f], tr.hi[f])).collect(),
            sample_ids,
            bootstrap_total: tr.count,
            frozen_nodes: tr.frozen,
        })
    }

    /// Cell shared by all trees: the box is the per-dimension intersection
    /// of the per-tree boxes and the samples are every training sample
    /// lying in it. The result may be empty; callers must check.
    pub fn intersection_cell(&self, x: &[f64], subset: &Subset, min_node_size: usize) -> Result<ProjectedCell> {
        self.check_projection_args(x, subset, min_node_size)?;
        let mask = subset.mask(self.n_features());
        let mut tr = Traversal::new();
        let mut intervals = vec![Interval::UNBOUNDED; subset.len()];
        let mut frozen = 0;
        for l in 0..self.n_trees() {
            tr.run(self, l, x, &mask, min_node_size as u64);
            frozen += tr.frozen;
            for (iv, f) in intervals.iter_mut().zip(subset.iter()) {
                *iv = iv.intersect(&Interval::new(tr.lo[f], tr.hi[f]));
            }
        }
        let data = self.data();
        let sample_ids: Vec<usize> = (0..self.n_samples())
            .filter(|&i| subset.iter().zip(&intervals).all(|(f, iv)| iv.contains(data.value(i, f))))
            .collect();
        let bootstrap_total =
            self.trees().iter().map(|t| sample_ids.iter().map(|&i| u64::from(t.bootstrap_counts()[i])).sum::<u64>()).sum();
        Ok(ProjectedCell { subset: subset.clone(), intervals, sample_ids, bootstrap_total, frozen_nodes: frozen })
    }

    /// Projected forest at `x` for subset `S`.
    pub fn projection(&self, x: &[f64], subset: &Subset, min_node_size: usize) -> Result<Projection<'_>> {
        self.check_projection_args(x, subset, min_node_size)?;
        let mask = subset.mask(self.n_features());
        let k = self.n_trees() as f64;
        let mut w = vec![0.0; self.n_samples()];
        let mut tr = Traversal::new();
        for (l, tree) in self.trees().iter().enumerate() {
            tr.run(self, l, x, &mask, min_node_size as u64);
            assert!(tr.count > 0, "projected cell without bootstrap mass");
            let denom = k * tr.count as f64;
            let counts = tree.bootstrap_counts();
            let slots = &self.index.trees[l].slots;
            let mut last = u32::MAX;
            for s in ones(&tr.bits) {
                let i = slots[s];
                if i != last {
                    w[i as usize] += f64::from(counts[i as usize]) / denom;
                    last = i;
                }
            }
        }
        Ok(Projection { forest: self, weights: w })
    }

    pub fn projected_weights(&self, x: &[f64], subset: &Subset, min_node_size: usize) -> Result<Vec<f64>> {
        Ok(self.projection(x, subset, min_node_size)?.weights)
    }

    pub fn projected_cdf(&self, x: &[f64], subset: &Subset, y: f64, min_node_size: usize) -> Result<f64> {
        self.require_task("projected_cdf", Task::Regression)?;
        Ok(self.projection(x, subset, min_node_size)?.cdf(y))
    }

    pub fn projected_quantile(&self, x: &[f64], subset: &Subset, alpha: f64, min_node_size: usize) -> Result<f64> {
        self.require_task("projected_quantile", Task::Regression)?;
        self.projection(x, subset, min_node_size)?.quantile(alpha)
    }

    pub fn projected_mean(&self, x: &[f64], subset: &Subset, min_node_size: usize) -> Result<f64> {
        self.require_task("projected_mean", Task::Regression)?;
        Ok(self.projection(x, subset, min_node_size)?.mean())
    }
}

impl<'f> Projection<'f> {
    /// Weights computed directly (e.g. the unprojected forest weights).
    pub(crate) fn from_weights(forest: &'f Forest, weights: Vec<f64>) -> Self {
        Projection { forest, weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    /// Weighted mean of the targets (regression).
    pub fn mean(&self) -> f64 {
        weighted_mean(&self.weights, self.forest.data().targets())
    }

    /// Weighted class frequencies (classification).
    pub fn class_probabilities(&self) -> Vec<f64> {
        class_probabilities(&self.weights, self.forest.data())
    }

    pub fn predicted_class(&self) -> usize {
        argmax(&self.class_probabilities())
    }

    fn support_max(&self) -> f64 {
        let y = self.forest.data().targets();
        self.weights.iter().zip(y).filter(|(w, _)| **w > 0.0).map(|(_, y)| *y).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `sum_i w_i 1{Y_i <= y}`, exactly 1 at or above the largest target
    /// carrying weight.
    pub fn cdf(&self, y: f64) -> f64 {
        if y >= self.support_max() {
            return 1.0;
        }
        self.cdf_sum(y)
    }

    fn cdf_sum(&self, y: f64) -> f64 {
        let targets = self.forest.data().targets();
        let s: f64 = self.weights.iter().zip(targets).filter(|(_, t)| **t <= y).map(|(w, _)| *w).sum();
        s.min(1.0)
    }

    /// Weighted mass of targets inside the closed interval `[lo, hi]`.
    pub fn mass_in(&self, lo: f64, hi: f64) -> f64 {
        let targets = self.forest.data().targets();
        let s: f64 = self.weights.iter().zip(targets).filter(|(_, t)| lo <= **t && **t <= hi).map(|(w, _)| *w).sum();
        s.min(1.0)
    }

    /// Smallest training target `q` (with positive weight) such that
    /// `cdf(q) >= alpha`.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::param("alpha", format!("must lie in (0, 1), got {alpha}")));
        }
        let y = self.forest.data().targets();
        let mut support: Vec<f64> = self.weights.iter().zip(y).filter(|(w, _)| **w > 0.0).map(|(_, y)| *y).collect();
        support.sort_by(f64::total_cmp);
        support.dedup();
        let max = *support.last().expect("weights carry mass");
        // cdf is monotone over the support and 1 at its maximum.
        let pos = support.partition_point(|&v| v < max && self.cdf_sum(v) < alpha);
        Ok(support[pos])
    }
}
