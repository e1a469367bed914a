//! Greedy rule growth over the grid formed by every forest threshold on the
//! rule's features. Along feature `d` with sorted thresholds `t`, grid
//! interval `k` is `(t[k-1], t[k]]` with infinite ends; a box is an
//! inclusive range of interval indices per feature. SDP is constant on each
//! grid cell because projected traversals only compare coordinates with
//! thresholds.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Rule, VolumeMode};
use crate::dataset::Task;
use crate::error::{Error, Result};
use crate::explain::check_pi;
use crate::forest::{argmax, Forest};
use crate::projected::Interval;
use crate::sdp::{Decision, SdpEvaluator};
use crate::subset::Subset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleParams {
    pub pi: f64,
    pub volume_mode: VolumeMode,
    /// Projected traversal node size; the forest's leaf size when `None`.
    pub min_node_size: Option<usize>,
}

impl Default for RuleParams {
    fn default() -> Self {
        RuleParams { pi: 0.9, volume_mode: VolumeMode::Probability, min_node_size: None }
    }
}

/// One accepted extension: grid dimension and side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrowthStep {
    pub dim: usize,
    pub upper: bool,
}

/// Problem-specific side of the greedy search.
pub trait BoxGrowth {
    /// Whether adding interval `k` of `dim` to the box `bounds` keeps every
    /// probed cell sufficient.
    fn extension_ok(&mut self, bounds: &[(usize, usize)], dim: usize, k: usize) -> bool;

    /// Volume gained by the extension, compared lexicographically.
    fn gain(&mut self, bounds: &[(usize, usize)], dim: usize, k: usize) -> (f64, f64);
}

/// Repeatedly apply the acceptable one-interval extension with the largest
/// gain (ties: lowest dimension, lower side first) until none is left.
/// `n_cells[d]` is the number of grid intervals along `d`.
pub fn greedy_grow(
    n_cells: &[usize],
    start: Vec<(usize, usize)>,
    growth: &mut impl BoxGrowth,
) -> (Vec<(usize, usize)>, Vec<GrowthStep>) {
    let mut bounds = start;
    let mut steps = Vec::new();
    loop {
        let mut candidates = Vec::new();
        for (dim, &(a, b)) in bounds.iter().enumerate() {
            if a > 0 {
                candidates.push((dim, false, a - 1));
            }
            if b + 1 < n_cells[dim] {
                candidates.push((dim, true, b + 1));
            }
        }
        let mut scored: Vec<((f64, f64), usize)> =
            candidates.iter().enumerate().map(|(c, &(dim, _, k))| (growth.gain(&bounds, dim, k), c)).collect();
        // Stable sort keeps enumeration order among equal gains.
        scored.sort_by(|x, y| y.0 .0.total_cmp(&x.0 .0).then(y.0 .1.total_cmp(&x.0 .1)));
        let chosen = scored.iter().map(|&(_, c)| candidates[c]).find(|&(dim, _, k)| growth.extension_ok(&bounds, dim, k));
        let Some((dim, upper, k)) = chosen else {
            break;
        };
        if upper {
            bounds[dim].1 = k;
        } else {
            bounds[dim].0 = k;
        }
        steps.push(GrowthStep { dim, upper });
    }
    (bounds, steps)
}

/// Grid index of `v`: the number of thresholds strictly below it.
#[inline]
fn cell_of(grid: &[f64], v: f64) -> usize {
    grid.partition_point(|&t| t < v)
}

fn interval_of(grid: &[f64], a: usize, b: usize) -> Interval {
    Interval::new(if a == 0 { f64::NEG_INFINITY } else { grid[a - 1] }, if b == grid.len() { f64::INFINITY } else { grid[b] })
}

/// A point inside grid interval `k`.
fn representative(grid: &[f64], k: usize) -> f64 {
    let iv = interval_of(grid, k, k);
    match (iv.lo.is_finite(), iv.hi.is_finite()) {
        (true, true) => {
            let m = iv.lo + (iv.hi - iv.lo) / 2.0;
            if m > iv.lo && m <= iv.hi {
                m
            } else {
                iv.hi
            }
        }
        (false, true) => iv.hi - 1.0f64.max(iv.hi.abs() * 1e-9),
        (true, false) => iv.lo + 1.0f64.max(iv.lo.abs() * 1e-9),
        (false, false) => 0.0,
    }
}

struct ForestGrowth<'a, 'f> {
    forest: &'f Forest,
    eval: &'a SdpEvaluator<'f>,
    subset: &'a Subset,
    feats: Vec<usize>,
    grids: Vec<&'f [f64]>,
    anchor: Vec<f64>,
    pi: f64,
    mode: VolumeMode,
    ranges: Vec<(f64, f64)>,
    memo: HashMap<Vec<u32>, bool>,
}

impl ForestGrowth<'_, '_> {
    /// Training samples whose coordinate on `dim` lies in interval `k` and
    /// whose other coordinates lie in the box.
    fn slab(&self, bounds: &[(usize, usize)], dim: usize, k: usize) -> Vec<u32> {
        let cols = &self.forest.index.columns;
        let f = self.feats[dim];
        let col = &cols[f];
        let iv = interval_of(self.grids[dim], k, k);
        let order = self.forest.index.sorted_by(f);
        let start = order.partition_point(|&i| col[i as usize] <= iv.lo);
        let end = order.partition_point(|&i| col[i as usize] <= iv.hi);
        let others: Vec<(usize, Interval)> = (0..self.feats.len())
            .filter(|&d| d != dim)
            .map(|d| (self.feats[d], interval_of(self.grids[d], bounds[d].0, bounds[d].1)))
            .collect();
        order[start..end].iter().copied().filter(|&i| others.iter().all(|(g, iv)| iv.contains(cols[*g][i as usize]))).collect()
    }

    fn cell_sufficient(&mut self, z: &[f64]) -> bool {
        let key: Vec<u32> = self.feats.iter().zip(&self.grids).map(|(&f, g)| cell_of(g, z[f]) as u32).collect();
        if let Some(&ok) = self.memo.get(&key) {
            return ok;
        }
        let ok = self.eval.sdp_at(z, self.subset) >= self.pi;
        self.memo.insert(key, ok);
        ok
    }

    fn scaled_volume(&self, bounds: &[(usize, usize)]) -> f64 {
        bounds
            .iter()
            .enumerate()
            .map(|(d, &(a, b))| {
                let (min, max) = self.ranges[d];
                if max <= min {
                    return 1.0;
                }
                let iv = interval_of(self.grids[d], a, b);
                (iv.hi.min(max) - iv.lo.max(min)).max(0.0) / (max - min)
            })
            .product()
    }
}

impl BoxGrowth for ForestGrowth<'_, '_> {
    fn extension_ok(&mut self, bounds: &[(usize, usize)], dim: usize, k: usize) -> bool {
        let slab = self.slab(bounds, dim, k);
        let mut z = self.anchor.clone();
        if slab.is_empty() {
            z[self.feats[dim]] = representative(self.grids[dim], k);
            return self.cell_sufficient(&z);
        }
        let cols = &self.forest.index.columns;
        for i in slab {
            for &f in &self.feats {
                z[f] = cols[f][i as usize];
            }
            if !self.cell_sufficient(&z) {
                return false;
            }
        }
        true
    }

    fn gain(&mut self, bounds: &[(usize, usize)], dim: usize, k: usize) -> (f64, f64) {
        let mass = self.slab(bounds, dim, k).len() as f64;
        let mut grown = bounds.to_vec();
        if k < bounds[dim].0 {
            grown[dim].0 = k;
        } else {
            grown[dim].1 = k;
        }
        let leb = self.scaled_volume(&grown) - self.scaled_volume(bounds);
        match self.mode {
            VolumeMode::Probability => (mass, leb),
            VolumeMode::Lebesgue => (leb, mass),
        }
    }
}

impl Forest {
    /// Grow a sufficient rule for `decision` around `x` over the features of
    /// `subset`.
    pub fn grow_rule(&self, x: &[f64], decision: Decision, subset: &Subset, params: &RuleParams) -> Result<Rule> {
        let mns = params.min_node_size.unwrap_or_else(|| self.default_min_node_size());
        let eval = SdpEvaluator::new(self, x, decision, mns)?;
        self.grow_rule_with(&eval, subset, params)
    }

    /// [`Forest::grow_rule`] reusing an evaluator built for the anchor.
    pub fn grow_rule_with(&self, eval: &SdpEvaluator<'_>, subset: &Subset, params: &RuleParams) -> Result<Rule> {
        check_pi(params.pi)?;
        if subset.is_empty() {
            return Err(Error::param("subset", "a rule needs at least one feature"));
        }
        subset.validate(self.n_features())?;
        let x = eval.x();
        let anchor_sdp = eval.sdp(subset);
        if anchor_sdp < params.pi {
            return Err(Error::NotSufficient(format!("SDP of {subset} at the anchor is {anchor_sdp:.4} < pi = {}", params.pi)));
        }
        let mns = params.min_node_size.unwrap_or_else(|| self.default_min_node_size());
        let cell = self.intersection_cell(x, subset, mns)?;
        if cell.is_empty() {
            return Err(Error::EmptyCell(format!(
                "no training sample lies in the intersection of the projected cells of {subset}"
            )));
        }

        let feats: Vec<usize> = subset.indices().to_vec();
        let grids: Vec<&[f64]> = feats.iter().map(|&f| self.thresholds(f)).collect();
        let start: Vec<(usize, usize)> = cell
            .intervals
            .iter()
            .zip(&grids)
            .map(|(iv, g)| {
                let a = if iv.lo == f64::NEG_INFINITY { 0 } else { cell_of(g, iv.lo) + 1 };
                let b = if iv.hi == f64::INFINITY { g.len() } else { cell_of(g, iv.hi) };
                (a, b)
            })
            .collect();
        let cols = &self.index.columns;
        let ranges = feats
            .iter()
            .map(|&f| {
                let c = &cols[f];
                (c.iter().copied().fold(f64::INFINITY, f64::min), c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            })
            .collect();
        let mut growth = ForestGrowth {
            forest: self,
            eval,
            subset,
            feats: feats.clone(),
            grids: grids.clone(),
            anchor: x.to_vec(),
            pi: params.pi,
            mode: params.volume_mode,
            ranges,
            memo: HashMap::new(),
        };
        let n_cells: Vec<usize> = grids.iter().map(|g| g.len() + 1).collect();
        let (bounds, steps) = greedy_grow(&n_cells, start, &mut growth);
        log::trace!("rule over {subset}: {} extensions", steps.len());

        let intervals: Vec<Interval> = bounds.iter().zip(&grids).map(|(&(a, b), g)| interval_of(g, a, b)).collect();
        Ok(self.summarize_rule(subset, intervals, *eval.decision(), anchor_sdp))
    }

    /// Output, precision and coverage of a box over the training data.
    pub(crate) fn summarize_rule(&self, subset: &Subset, intervals: Vec<Interval>, decision: Decision, sdp: f64) -> Rule {
        let data = self.data();
        let covered: Vec<usize> = (0..data.n_samples())
            .filter(|&i| subset.iter().zip(&intervals).all(|(f, iv)| iv.contains(data.value(i, f))))
            .collect();
        let y = data.targets();
        let (output, precision) = if covered.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            match data.task() {
                Task::Regression => {
                    let m = covered.iter().map(|&i| y[i]).sum::<f64>() / covered.len() as f64;
                    let mae = covered.iter().map(|&i| (y[i] - m).abs()).sum::<f64>() / covered.len() as f64;
                    (m, -mae)
                }
                Task::Classification => {
                    let mut counts = vec![0.0; data.n_classes()];
                    for &i in &covered {
                        counts[data.label(i)] += 1.0;
                    }
                    let label = argmax(&counts);
                    (label as f64, counts[label] / covered.len() as f64)
                }
            }
        };
        let names = data.feature_names();
        Rule {
            features: subset.iter().map(|f| names[f].clone()).collect(),
            feature_indices: subset.clone(),
            intervals,
            output,
            task: data.task(),
            decision,
            sdp_at_anchor: sdp,
            coverage: covered.len() as f64 / data.n_samples() as f64,
            precision,
            support: covered.len(),
        }
    }
}
