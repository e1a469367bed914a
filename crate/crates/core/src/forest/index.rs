//! Query-side acceleration structures, rebuilt from a fitted forest and its
//! training data (never serialized).
//!
//! Each tree's bootstrap draw is laid out as `a_n` "slots" (one per drawn
//! observation, grouped by sample id). A set of slots is a packed bitset, so
//! its popcount is directly a bootstrap-weighted count.

use std::sync::OnceLock;

use super::tree::{Tree, TreeNode};
use crate::dataset::Dataset;

pub(crate) struct TreeIndex {
    /// Sample id of every bootstrap slot, ascending.
    pub slots: Vec<u32>,
    pub words: usize,
    /// Per internal node: slots whose sample goes left at that node.
    left_bits: Vec<OnceLock<Box<[u64]>>>,
    /// Per node: features split on anywhere in its subtree (node included).
    pub subtree_features: Vec<Box<[u64]>>,
}

impl TreeIndex {
    fn build(tree: &Tree, p: usize) -> Self {
        let mut slots = Vec::with_capacity(tree.bootstrap_size() as usize);
        for (i, &c) in tree.bootstrap_counts().iter().enumerate() {
            for _ in 0..c {
                slots.push(i as u32);
            }
        }
        let words = slots.len().div_ceil(64);
        let fw = p.div_ceil(64).max(1);
        let nodes = tree.nodes();
        let mut subtree_features = vec![vec![0u64; fw].into_boxed_slice(); nodes.len()];
        // Children always have larger ids than their parent when grown here,
        // but hand-built trees may not; use an explicit post-order.
        let mut order = Vec::with_capacity(nodes.len());
        let mut stack = vec![(tree.root(), false)];
        while let Some((id, expanded)) = stack.pop() {
            if expanded {
                order.push(id);
                continue;
            }
            stack.push((id, true));
            if let TreeNode::Internal { left, right, .. } = &nodes[id] {
                stack.push((*right, false));
                stack.push((*left, false));
            }
        }
        for id in order {
            if let TreeNode::Internal { feature, left, right, .. } = &nodes[id] {
                let mut mask = vec![0u64; fw];
                for w in 0..fw {
                    mask[w] = subtree_features[*left][w] | subtree_features[*right][w];
                }
                mask[feature / 64] |= 1 << (feature % 64);
                subtree_features[id] = mask.into_boxed_slice();
            }
        }
        TreeIndex { slots, words, left_bits: (0..nodes.len()).map(|_| OnceLock::new()).collect(), subtree_features }
    }

    /// Bitset of slots going left at internal node `id`; built on first use.
    pub fn left_bits(&self, id: usize, feature: usize, threshold: f64, columns: &[Vec<f64>]) -> &[u64] {
        self.left_bits[id].get_or_init(|| {
            let col = &columns[feature];
            let mut bits = vec![0u64; self.words];
            for (s, &i) in self.slots.iter().enumerate() {
                if col[i as usize] <= threshold {
                    bits[s / 64] |= 1 << (s % 64);
                }
            }
            bits.into_boxed_slice()
        })
    }

    /// Overwrite `bits` with every slot set.
    pub fn fill_full(&self, bits: &mut Vec<u64>) {
        bits.clear();
        bits.resize(self.words, u64::MAX);
        let rem = self.slots.len() % 64;
        if rem != 0 {
            bits[self.words - 1] = (1u64 << rem) - 1;
        }
    }

    /// Bitset of slots whose sample satisfies `pred`.
    pub fn slot_mask(&self, mut pred: impl FnMut(usize) -> bool) -> Vec<u64> {
        let mut bits = vec![0u64; self.words];
        let mut last: Option<(u32, bool)> = None;
        for (s, &i) in self.slots.iter().enumerate() {
            let hit = match last {
                Some((prev, hit)) if prev == i => hit,
                _ => {
                    let hit = pred(i as usize);
                    last = Some((i, hit));
                    hit
                }
            };
            if hit {
                bits[s / 64] |= 1 << (s % 64);
            }
        }
        bits
    }
}

pub(crate) struct ForestIndex {
    pub columns: Vec<Vec<f64>>,
    pub trees: Vec<TreeIndex>,
    /// Every split threshold used on each feature, ascending and unique.
    pub thresholds: Vec<Vec<f64>>,
    sorted_by_feature: Vec<OnceLock<Vec<u32>>>,
}

impl ForestIndex {
    pub fn build(trees: &[Tree], data: &Dataset) -> Self {
        let p = data.n_features();
        let mut thresholds = vec![Vec::new(); p];
        for tree in trees {
            for node in tree.nodes() {
                if let TreeNode::Internal { feature, threshold, .. } = node {
                    thresholds[*feature].push(*threshold);
                }
            }
        }
        for t in &mut thresholds {
            t.sort_by(f64::total_cmp);
            t.dedup();
        }
        ForestIndex {
            columns: data.columns(),
            trees: trees.iter().map(|t| TreeIndex::build(t, p)).collect(),
            thresholds,
            sorted_by_feature: (0..p).map(|_| OnceLock::new()).collect(),
        }
    }

    /// All training sample ids ordered by their value on `feature`.
    pub fn sorted_by(&self, feature: usize) -> &[u32] {
        self.sorted_by_feature[feature].get_or_init(|| {
            let col = &self.columns[feature];
            let mut ids: Vec<u32> = (0..col.len() as u32).collect();
            ids.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            ids
        })
    }
}

#[inline]
pub(crate) fn popcount_and(a: &[u64], b: &[u64]) -> u64 {
    a.iter().zip(b).map(|(x, y)| u64::from((x & y).count_ones())).sum()
}

/// Iterate the positions of set bits.
pub(crate) fn ones(bits: &[u64]) -> impl Iterator<Item = usize> + '_ {
    bits.iter().enumerate().flat_map(|(w, &word)| {
        let mut word = word;
        std::iter::from_fn(move || {
            if word == 0 {
                return None;
            }
            let b = word.trailing_zeros() as usize;
            word &= word - 1;
            Some(w * 64 + b)
        })
    })
}
