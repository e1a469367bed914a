use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sorted, duplicate-free set of feature indices. The empty subset means
/// "condition on nothing".
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Subset(Vec<usize>);

impl Subset {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Subset(indices)
    }

    pub fn empty() -> Self {
        Subset(Vec::new())
    }

    pub fn all(p: usize) -> Self {
        Subset((0..p).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, feature: usize) -> bool {
        self.0.binary_search(&feature).is_ok()
    }

    pub fn is_subset_of(&self, other: &Subset) -> bool {
        self.0.iter().all(|f| other.contains(*f))
    }

    pub fn is_proper_subset_of(&self, other: &Subset) -> bool {
        self.len() < other.len() && self.is_subset_of(other)
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        match self.0.last() {
            Some(&last) if last >= p => Err(Error::FeatureOutOfRange { index: last, n_features: p }),
            _ => Ok(()),
        }
    }

    /// Word-packed membership mask over `p` features.
    pub(crate) fn mask(&self, p: usize) -> FeatureMask {
        let mut words = vec![0u64; p.div_ceil(64).max(1)];
        for &f in &self.0 {
            words[f / 64] |= 1 << (f % 64);
        }
        FeatureMask(words)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }
}

impl From<Vec<usize>> for Subset {
    fn from(v: Vec<usize>) -> Self {
        Subset::new(v)
    }
}

impl<const N: usize> From<[usize; N]> for Subset {
    fn from(v: [usize; N]) -> Self {
        Subset::new(v.to_vec())
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct FeatureMask(pub(crate) Vec<u64>);

impl FeatureMask {
    #[inline]
    pub(crate) fn contains(&self, f: usize) -> bool {
        self.0[f / 64] >> (f % 64) & 1 == 1
    }

    #[inline]
    pub(crate) fn intersects(&self, other: &[u64]) -> bool {
        self.0.iter().zip(other).any(|(a, b)| a & b != 0)
    }
}
