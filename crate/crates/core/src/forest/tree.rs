use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Task};
use crate::error::{Error, Result};

pub type NodeId = usize;

/// A node of a fitted CART tree. Routing rule: go left iff
/// `x[split_feature] <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: NodeId,
        right: NodeId,
    },
    Leaf {
        /// Distinct in-bag training indices routed to this leaf, ascending.
        sample_ids: Vec<u32>,
        /// Sum of the bootstrap counts of `sample_ids`.
        bootstrap_total: u64,
    },
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }
}

/// One tree of the forest together with its bootstrap draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<TreeNode>,
    root: NodeId,
    /// Number of times each training sample was drawn for this tree.
    bootstrap_counts: Vec<u32>,
    rng_seed: u64,
}

impl Tree {
    /// Assemble a tree from explicit parts, checking structural invariants.
    pub fn from_parts(nodes: Vec<TreeNode>, root: NodeId, bootstrap_counts: Vec<u32>, rng_seed: u64) -> Result<Self> {
        let tree = Tree { nodes, root, bootstrap_counts, rng_seed };
        tree.validate()?;
        Ok(tree)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ModelFormat(msg));
        let n_nodes = self.nodes.len();
        if self.root >= n_nodes {
            return bad(format!("root {} out of range ({} nodes)", self.root, n_nodes));
        }
        let n = self.bootstrap_counts.len();
        let mut seen = vec![false; n_nodes];
        let mut stack = vec![self.root];
        let mut in_leaves = 0u64;
        while let Some(id) = stack.pop() {
            if id >= n_nodes || seen[id] {
                return bad(format!("node {id} is out of range or reachable twice"));
            }
            seen[id] = true;
            match &self.nodes[id] {
                TreeNode::Internal { threshold, left, right, .. } => {
                    if !threshold.is_finite() {
                        return bad(format!("node {id} has a non-finite threshold"));
                    }
                    stack.push(*right);
                    stack.push(*left);
                }
                TreeNode::Leaf { sample_ids, bootstrap_total } => {
                    let mut total = 0u64;
                    for &s in sample_ids {
                        let s = s as usize;
                        if s >= n {
                            return bad(format!("leaf {id} references sample {s} >= {n}"));
                        }
                        total += u64::from(self.bootstrap_counts[s]);
                    }
                    if total != *bootstrap_total {
                        return bad(format!("leaf {id}: bootstrap_total {bootstrap_total} != sum of member counts {total}"));
                    }
                    in_leaves += total;
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return bad("node array contains unreachable nodes".into());
        }
        let drawn: u64 = self.bootstrap_counts.iter().map(|&c| u64::from(c)).sum();
        if drawn != in_leaves {
            return bad(format!("leaves hold {in_leaves} bootstrap observations but {drawn} were drawn"));
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn bootstrap_counts(&self) -> &[u32] {
        &self.bootstrap_counts
    }

    /// Total number of bootstrap draws (`a_n`).
    pub fn bootstrap_size(&self) -> u64 {
        self.bootstrap_counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Leaf reached by `x` under the "`<=` goes left" rule.
    pub fn leaf(&self, x: &[f64]) -> NodeId {
        let mut id = self.root;
        loop {
            match &self.nodes[id] {
                TreeNode::Internal { feature, threshold, left, right } => {
                    id = if x[*feature] <= *threshold { *left } else { *right }
                }
                TreeNode::Leaf { .. } => return id,
            }
        }
    }

    pub fn n_internal(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_leaf()).count()
    }
}

/// Growth settings shared by every tree of a forest.
pub(crate) struct GrowConfig {
    pub min_samples_leaf: u64,
    pub mtry: usize,
    pub bootstrap_size: usize,
}

/// Grow one tree on a bootstrap draw. `columns` is the column-major view
/// of `data`.
pub(crate) fn grow_tree(data: &Dataset, columns: &[Vec<f64>], cfg: &GrowConfig, rng_seed: u64, rng: &mut ChaCha8Rng) -> Tree {
    let n = data.n_samples();
    let mut counts = vec![0u32; n];
    for _ in 0..cfg.bootstrap_size {
        counts[rng.gen_range(0..n)] += 1;
    }
    Tree { root: 0, nodes: grow_from_counts(data, columns, cfg, &counts, rng), bootstrap_counts: counts, rng_seed }
}

/// Grow the node array for fixed bootstrap counts; the root is node 0.
pub(crate) fn grow_from_counts(
    data: &Dataset,
    columns: &[Vec<f64>],
    cfg: &GrowConfig,
    counts: &[u32],
    rng: &mut ChaCha8Rng,
) -> Vec<TreeNode> {
    let root_samples: Vec<(u32, u32)> = counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (i as u32, c)).collect();
    let mut builder = Builder {
        data,
        columns,
        cfg,
        rng,
        nodes: Vec::new(),
        buf: Vec::new(),
        class_left: vec![0.0; data.n_classes()],
        class_total: vec![0.0; data.n_classes()],
    };
    builder.grow(root_samples);
    builder.nodes
}

struct Builder<'a, 'r> {
    data: &'a Dataset,
    columns: &'a [Vec<f64>],
    cfg: &'a GrowConfig,
    rng: &'r mut ChaCha8Rng,
    nodes: Vec<TreeNode>,
    buf: Vec<(f64, u32)>,
    class_left: Vec<f64>,
    class_total: Vec<f64>,
}

struct Split {
    feature: usize,
    threshold: f64,
}

impl Builder<'_, '_> {
    fn grow(&mut self, samples: Vec<(u32, u32)>) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { sample_ids: Vec::new(), bootstrap_total: 0 });
        match self.best_split(&samples) {
            Some(split) => {
                let col = &self.columns[split.feature];
                let (left, right): (Vec<_>, Vec<_>) = samples.into_iter().partition(|&(i, _)| col[i as usize] <= split.threshold);
                let l = self.grow(left);
                let r = self.grow(right);
                self.nodes[id] = TreeNode::Internal { feature: split.feature, threshold: split.threshold, left: l, right: r };
            }
            None => {
                let total = samples.iter().map(|&(_, c)| u64::from(c)).sum();
                self.nodes[id] =
                    TreeNode::Leaf { sample_ids: samples.into_iter().map(|(i, _)| i).collect(), bootstrap_total: total };
            }
        }
        id
    }

    fn best_split(&mut self, samples: &[(u32, u32)]) -> Option<Split> {
        let min_leaf = self.cfg.min_samples_leaf as f64;
        let total_w: f64 = samples.iter().map(|&(_, c)| f64::from(c)).sum();
        if total_w < 2.0 * min_leaf || samples.len() < 2 {
            return None;
        }
        let y = self.data.targets();
        let first = y[samples[0].0 as usize];
        if samples.iter().all(|&(i, _)| y[i as usize] == first) {
            return None;
        }

        let task = self.data.task();
        // Parent term of the criterion; a split must beat it.
        let parent = match task {
            Task::Regression => {
                let s: f64 = samples.iter().map(|&(i, c)| f64::from(c) * y[i as usize]).sum();
                s * s / total_w
            }
            Task::Classification => {
                self.class_total.iter_mut().for_each(|v| *v = 0.0);
                for &(i, c) in samples {
                    self.class_total[y[i as usize] as usize] += f64::from(c);
                }
                self.class_total.iter().map(|v| v * v).sum::<f64>() / total_w
            }
        };
        let tolerance = 1e-12 * parent.abs().max(1.0);

        let p = self.columns.len();
        let mut features = index::sample(self.rng, p, self.cfg.mtry).into_vec();
        features.sort_unstable();

        let mut best: Option<(f64, Split)> = None;
        for f in features {
            let col = &self.columns[f];
            self.buf.clear();
            self.buf.extend(samples.iter().enumerate().map(|(k, &(i, _))| (col[i as usize], k as u32)));
            self.buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if self.buf[0].0 == self.buf[self.buf.len() - 1].0 {
                continue;
            }
            let candidate = match task {
                Task::Regression => scan_regression(&self.buf, samples, y, total_w, min_leaf),
                Task::Classification => {
                    scan_classification(&self.buf, samples, y, total_w, min_leaf, &mut self.class_left, &self.class_total)
                }
            };
            if let Some((score, pos)) = candidate {
                if score - parent > tolerance && best.as_ref().is_none_or(|(b, _)| score > *b) {
                    let a = self.buf[pos].0;
                    let b = self.buf[pos + 1].0;
                    let mut threshold = a + (b - a) / 2.0;
                    if !(threshold >= a && threshold < b) {
                        threshold = a;
                    }
                    best = Some((score, Split { feature: f, threshold }));
                }
            }
        }
        best.map(|(_, s)| s)
    }
}

/// Best `(sum_l^2 / w_l + sum_r^2 / w_r, position)` over admissible cut
/// positions; maximizing it maximizes the weighted variance reduction.
fn scan_regression(
    sorted: &[(f64, u32)],
    samples: &[(u32, u32)],
    y: &[f64],
    total_w: f64,
    min_leaf: f64,
) -> Option<(f64, usize)> {
    let total_s: f64 = samples.iter().map(|&(i, c)| f64::from(c) * y[i as usize]).sum();
    let mut wl = 0.0;
    let mut sl = 0.0;
    let mut best: Option<(f64, usize)> = None;
    for pos in 0..sorted.len() - 1 {
        let (i, c) = samples[sorted[pos].1 as usize];
        let c = f64::from(c);
        wl += c;
        sl += c * y[i as usize];
        if sorted[pos].0 == sorted[pos + 1].0 {
            continue;
        }
        let wr = total_w - wl;
        if wl < min_leaf || wr < min_leaf {
            continue;
        }
        let sr = total_s - sl;
        let score = sl * sl / wl + sr * sr / wr;
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, pos));
        }
    }
    best
}

/// Gini analogue of [`scan_regression`]: maximizes
/// `sum_c n_lc^2 / w_l + sum_c n_rc^2 / w_r`.
fn scan_classification(
    sorted: &[(f64, u32)],
    samples: &[(u32, u32)],
    y: &[f64],
    total_w: f64,
    min_leaf: f64,
    left: &mut [f64],
    total: &[f64],
) -> Option<(f64, usize)> {
    left.iter_mut().for_each(|v| *v = 0.0);
    let mut sq_left = 0.0;
    let mut sq_right: f64 = total.iter().map(|v| v * v).sum();
    let mut wl = 0.0;
    let mut best: Option<(f64, usize)> = None;
    for pos in 0..sorted.len() - 1 {
        let (i, c) = samples[sorted[pos].1 as usize];
        let c = f64::from(c);
        let k = y[i as usize] as usize;
        let right_k = total[k] - left[k];
        sq_left += (left[k] + c) * (left[k] + c) - left[k] * left[k];
        sq_right += (right_k - c) * (right_k - c) - right_k * right_k;
        left[k] += c;
        wl += c;
        if sorted[pos].0 == sorted[pos + 1].0 {
            continue;
        }
        let wr = total_w - wl;
        if wl < min_leaf || wr < min_leaf {
            continue;
        }
        let score = sq_left / wl + sq_right / wr;
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, pos));
        }
    }
    best
}
