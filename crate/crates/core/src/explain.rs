//! Sufficient explanations: subset-minimal feature sets whose SDP reaches
//! `pi`, searched among the features the forest splits on most.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::sdp::{Decision, SdpEvaluator};
use crate::subset::Subset;

/// Largest preselection budget accepted (the search visits up to `2^s`
/// subsets).
pub const MAX_PRESELECT: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainParams {
    /// SDP threshold, in (0, 1).
    pub pi: f64,
    /// Number of preselected candidate features.
    pub s: usize,
    /// Projected traversal node size; the forest's leaf size when `None`.
    pub min_node_size: Option<usize>,
}

impl Default for ExplainParams {
    fn default() -> Self {
        ExplainParams { pi: 0.9, s: 10, min_node_size: None }
    }
}

impl ExplainParams {
    pub fn validate(&self) -> Result<()> {
        check_pi(self.pi)?;
        if self.s == 0 {
            return Err(Error::param("s", "must be at least 1"));
        }
        if self.min_node_size == Some(0) {
            return Err(Error::param("min_node_size", "must be at least 1"));
        }
        Ok(())
    }
}

pub(crate) fn check_pi(pi: f64) -> Result<()> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::param("pi", format!("must lie in (0, 1), got {pi}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSubset {
    pub features: Subset,
    pub sdp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationSet {
    pub decision: Decision,
    pub pi: f64,
    /// Candidate features, most split-on first.
    pub preselected: Vec<usize>,
    /// All subset-minimal sufficient sets, by (cardinality, lexicographic).
    pub ase: Vec<ScoredSubset>,
    /// Members of `ase` of minimum cardinality.
    pub mse: Vec<ScoredSubset>,
    /// Highest-SDP subset seen, reported only when `ase` is empty.
    pub best_fallback: Option<ScoredSubset>,
}

impl ExplanationSet {
    pub fn is_sufficient(&self) -> bool {
        !self.ase.is_empty()
    }

    /// The M-SE member with the highest SDP (first on ties), or the
    /// fallback when nothing is sufficient.
    pub fn best(&self) -> Option<&ScoredSubset> {
        let mut best: Option<&ScoredSubset> = None;
        for m in &self.mse {
            if best.is_none_or(|b| m.sdp > b.sdp) {
                best = Some(m);
            }
        }
        best.or(self.best_fallback.as_ref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LxiMode {
    #[default]
    Ase,
    Mse,
}

/// Outcome of the raw subset search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub ase: Vec<ScoredSubset>,
    pub best_fallback: Option<ScoredSubset>,
}

/// Enumerate non-empty subsets of `candidates` by increasing cardinality
/// (lexicographic within a cardinality over the sorted candidates),
/// skipping supersets of already accepted sets, and accept those with
/// `sdp >= pi`. `sdp` is called concurrently.
pub fn search_sufficient<F>(candidates: &[usize], pi: f64, sdp: F) -> Result<SearchOutcome>
where
    F: Fn(&Subset) -> f64 + Sync,
{
    check_pi(pi)?;
    let mut cand = candidates.to_vec();
    cand.sort_unstable();
    cand.dedup();
    let m = cand.len();
    if m > MAX_PRESELECT {
        return Err(Error::param("s", format!("at most {MAX_PRESELECT} candidates are supported, got {m}")));
    }
    let to_subset = |mask: u64| Subset::new((0..m).filter(|b| mask >> b & 1 == 1).map(|b| cand[b]).collect());

    let mut accepted: Vec<u64> = Vec::new();
    let mut ase = Vec::new();
    let mut best: Option<ScoredSubset> = None;
    for size in 1..=m {
        let level: Vec<u64> = combinations(m, size).filter(|&c| !accepted.iter().any(|&a| c & a == a)).collect();
        if level.is_empty() {
            break;
        }
        let scores: Vec<f64> = level.par_iter().map(|&c| sdp(&to_subset(c))).collect();
        for (&c, &v) in level.iter().zip(&scores) {
            if best.as_ref().is_none_or(|b| v > b.sdp) {
                best = Some(ScoredSubset { features: to_subset(c), sdp: v });
            }
            if v >= pi {
                accepted.push(c);
                ase.push(ScoredSubset { features: to_subset(c), sdp: v });
            }
        }
    }
    Ok(SearchOutcome { best_fallback: if ase.is_empty() { best } else { None }, ase })
}

/// Bitmasks of all `size`-subsets of `m` positions in lexicographic order
/// of their sorted position lists.
fn combinations(m: usize, size: usize) -> impl Iterator<Item = u64> {
    let mut idx: Vec<usize> = (0..size).collect();
    let mut done = size > m;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let mask = idx.iter().fold(0u64, |acc, &i| acc | 1 << i);
        // Advance to the next combination.
        let mut k = size;
        loop {
            if k == 0 {
                done = true;
                break;
            }
            k -= 1;
            if idx[k] < m - size + k {
                idx[k] += 1;
                for j in k + 1..size {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(mask)
    })
}

impl Forest {
    /// The `s` most split-on features, ties to the lower index. `s > p` is
    /// clamped to `p`.
    pub fn preselect(&self, s: usize) -> Result<Vec<usize>> {
        if s == 0 {
            return Err(Error::param("s", "must be at least 1"));
        }
        let p = self.n_features();
        let s = if s > p {
            log::warn!("preselection budget {s} exceeds {p} features; using {p}");
            p
        } else {
            s
        };
        let freq = self.split_frequency();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| freq[b].cmp(&freq[a]).then(a.cmp(&b)));
        order.truncate(s);
        Ok(order)
    }

    /// All and minimal sufficient explanations of `decision` at `x`.
    pub fn find_explanations(&self, x: &[f64], decision: Decision, params: &ExplainParams) -> Result<ExplanationSet> {
        params.validate()?;
        let preselected = self.preselect(params.s)?;
        let mns = params.min_node_size.unwrap_or_else(|| self.default_min_node_size());
        let eval = SdpEvaluator::new(self, x, decision, mns)?;
        let outcome = search_sufficient(&preselected, params.pi, |s| eval.sdp(s))?;
        Ok(assemble(decision, params.pi, preselected, outcome))
    }
}

fn assemble(decision: Decision, pi: f64, preselected: Vec<usize>, outcome: SearchOutcome) -> ExplanationSet {
    let min_len = outcome.ase.iter().map(|s| s.features.len()).min();
    let mse = outcome.ase.iter().filter(|s| Some(s.features.len()) == min_len).cloned().collect();
    ExplanationSet { decision, pi, preselected, ase: outcome.ase, mse, best_fallback: outcome.best_fallback }
}

/// Per-feature frequency of appearance across the chosen collection.
pub fn lxi(expl: &ExplanationSet, p: usize, mode: LxiMode) -> Result<Vec<f64>> {
    let sets = match mode {
        LxiMode::Ase => &expl.ase,
        LxiMode::Mse => &expl.mse,
    };
    if sets.is_empty() {
        return Err(Error::EmptyCollection("no sufficient explanation was found; inspect `best_fallback` instead".into()));
    }
    let mut out = vec![0.0; p];
    for s in sets {
        s.features.validate(p)?;
        for f in s.features.iter() {
            out[f] += 1.0;
        }
    }
    let n = sets.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_are_lexicographic() {
        let c: Vec<u64> = combinations(4, 2).collect();
        assert_eq!(c, vec![0b0011, 0b0101, 0b1001, 0b0110, 0b1010, 0b1100]);
        assert_eq!(combinations(5, 5).count(), 1);
        assert_eq!(combinations(3, 4).count(), 0);
    }

    #[test]
    fn hand_search_with_synthetic_sdp() {
        // Sufficient: anything containing {1,3} or {2}.
        let sdp = |s: &Subset| {
            if s.contains(2) || (s.contains(1) && s.contains(3)) {
                0.95
            } else {
                0.1 * s.len() as f64
            }
        };
        let out = search_sufficient(&[3, 1, 2, 7], 0.9, sdp).unwrap();
        let sets: Vec<Vec<usize>> = out.ase.iter().map(|s| s.features.indices().to_vec()).collect();
        assert_eq!(sets, vec![vec![2], vec![1, 3]]);
        assert!(out.best_fallback.is_none());
    }

    #[test]
    fn fallback_when_nothing_is_sufficient() {
        let out = search_sufficient(&[0, 1, 2], 0.9, |s| 0.1 * s.len() as f64 + if s.contains(0) { 0.05 } else { 0.0 }).unwrap();
        assert!(out.ase.is_empty());
        let fb = out.best_fallback.unwrap();
        assert_eq!(fb.features.indices(), &[0, 1, 2]);
    }

    #[test]
    fn pi_must_be_open_unit() {
        assert!(search_sufficient(&[0], 0.0, |_| 1.0).is_err());
        assert!(search_sufficient(&[0], 1.0, |_| 1.0).is_err());
    }

    #[test]
    fn lxi_counts_membership() {
        let s = |v: Vec<usize>| ScoredSubset { features: Subset::new(v), sdp: 1.0 };
        let e = ExplanationSet {
            decision: Decision::Class(0),
            pi: 0.9,
            preselected: vec![0, 1, 2],
            ase: vec![s(vec![0, 2]), s(vec![1, 2])],
            mse: vec![s(vec![0, 2]), s(vec![1, 2])],
            best_fallback: None,
        };
        assert_eq!(lxi(&e, 4, LxiMode::Ase).unwrap(), vec![0.5, 0.5, 1.0, 0.0]);
        let empty = ExplanationSet { ase: vec![], mse: vec![], ..e };
        assert!(matches!(lxi(&empty, 4, LxiMode::Mse), Err(Error::EmptyCollection(_))));
    }

    /// Minimal sufficient sets by brute force: every non-empty subset with
    /// `sdp >= pi` that has no sufficient proper subset, sorted by
    /// (cardinality, lexicographic).
    fn oracle_minimal(cand: &[usize], pi: f64, sdp: &dyn Fn(&Subset) -> f64) -> Vec<Vec<usize>> {
        let m = cand.len();
        let all: Vec<Vec<usize>> =
            (1u32..1 << m).map(|mask| (0..m).filter(|b| mask >> b & 1 == 1).map(|b| cand[b]).collect()).collect();
        let suff = |v: &Vec<usize>| sdp(&Subset::new(v.clone())) >= pi;
        let mut out: Vec<Vec<usize>> = all
            .iter()
            .filter(|v| suff(v))
            .filter(|v| !all.iter().any(|u| u.len() < v.len() && u.iter().all(|f| v.contains(f)) && suff(u)))
            .cloned()
            .collect();
        out.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
        out
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(128))]

        #[test]
        fn search_matches_brute_force_on_tables(
            table in proptest::collection::vec(0.0f64..1.0, 32),
            pi in 0.3f64..0.95,
            m in 1usize..6,
        ) {
            let cand: Vec<usize> = (0..m).map(|i| 2 * i + 1).collect();
            let sdp = |s: &Subset| {
                let key = s.iter().fold(0usize, |k, f| k | 1 << (f / 2));
                table[key]
            };
            let out = search_sufficient(&cand, pi, sdp).unwrap();
            let got: Vec<Vec<usize>> = out.ase.iter().map(|s| s.features.indices().to_vec()).collect();
            proptest::prop_assert_eq!(got, oracle_minimal(&cand, pi, &sdp));
        }
    }

    #[test]
    fn forest_explanations_match_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y = rows.iter().map(|r| if r[0] > 0.0 { r[1] } else { r[2] } + 0.1 * r[3]).collect();
        let data = crate::Dataset::regression(rows, y, crate::default_feature_names("X", 4)).unwrap();
        let forest =
            Forest::fit(data, &crate::ForestParams { n_trees: 8, min_samples_leaf: 3, mtry: Some(4), ..Default::default() })
                .unwrap();
        for t in 0..10 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.9..0.9)).collect();
            let decision = forest.decision_at(&x, 0.05, 0.05).unwrap();
            let pi = [0.6, 0.75, 0.9][t % 3];
            let params = ExplainParams { pi, s: 4, min_node_size: None };
            let expl = forest.find_explanations(&x, decision, &params).unwrap();
            let eval = SdpEvaluator::new(&forest, &x, decision, forest.default_min_node_size()).unwrap();
            let oracle = oracle_minimal(&[0, 1, 2, 3], pi, &|s| eval.sdp(s));
            let got: Vec<Vec<usize>> = expl.ase.iter().map(|s| s.features.indices().to_vec()).collect();
            assert_eq!(got, oracle);
            let min = oracle.iter().map(Vec::len).min();
            assert!(expl.mse.iter().all(|s| Some(s.features.len()) == min));
            assert_eq!(expl.mse.len(), oracle.iter().filter(|v| Some(v.len()) == min).count());
            assert_eq!(expl.best_fallback.is_some(), oracle.is_empty());
        }
    }

    #[test]
    fn preselect_orders_by_split_count() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y = rows.iter().map(|r| 3.0 * r[3] + r[1]).collect();
        let data = crate::Dataset::regression(rows, y, crate::default_feature_names("X", 5)).unwrap();
        let forest = Forest::fit(data, &crate::ForestParams { n_trees: 5, mtry: Some(5), ..Default::default() }).unwrap();
        let freq = forest.split_frequency();
        let order = forest.preselect(5).unwrap();
        for w in order.windows(2) {
            assert!(freq[w[0]] > freq[w[1]] || (freq[w[0]] == freq[w[1]] && w[0] < w[1]));
        }
        assert_eq!(forest.preselect(9).unwrap(), order);
        assert_eq!(forest.preselect(2).unwrap(), order[..2]);
        assert!(forest.preselect(0).is_err());
        assert!(search_sufficient(&(0..31).collect::<Vec<_>>(), 0.9, |_| 1.0).is_err());
    }
}
