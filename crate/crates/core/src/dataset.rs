//! Tabular training data: a dense feature matrix, one target column and
//! column metadata.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        }
    }
}

/// Feature matrix (row-major, `n x p`) with its targets.
///
/// Classification targets are stored as `f64` holding integer labels in
/// `0..n_classes`. A dataset may have zero rows (e.g. an empty test split);
/// fitting rejects it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    targets: Vec<f64>,
    feature_names: Vec<String>,
    task: Task,
    n_classes: usize,
}

impl Dataset {
    pub fn regression(rows: Vec<Vec<f64>>, targets: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        let p = feature_names.len();
        Self::from_flat(flatten(rows, p)?, targets, feature_names, Task::Regression, 0)
    }

    /// Classification dataset; `n_classes` is inferred as `max(label) + 1`
    /// (at least 2) when `None`.
    pub fn classification(
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        n_classes: Option<usize>,
    ) -> Result<Self> {
        let p = feature_names.len();
        let n_classes = n_classes.unwrap_or_else(|| labels.iter().max().map_or(2, |m| (m + 1).max(2)));
        let targets = labels.into_iter().map(|l| l as f64).collect();
        Self::from_flat(flatten(rows, p)?, targets, feature_names, Task::Classification, n_classes)
    }

    /// Build from a row-major buffer. `n_classes` is ignored for regression.
    pub fn from_flat(
        features: Vec<f64>,
        targets: Vec<f64>,
        feature_names: Vec<String>,
        task: Task,
        n_classes: usize,
    ) -> Result<Self> {
        let p = feature_names.len();
        if p == 0 {
            return Err(Error::InvalidDataset("at least one feature column is required".into()));
        }
        if features.len() != targets.len() * p {
            return Err(Error::InvalidDataset(format!(
                "feature buffer has {} values, expected {} rows x {} features",
                features.len(),
                targets.len(),
                p
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("non-finite feature value at row {}, column {}", pos / p, pos % p)));
        }
        let n_classes = match task {
            Task::Regression => {
                if let Some(i) = targets.iter().position(|v| !v.is_finite()) {
                    return Err(Error::InvalidDataset(format!("non-finite target at row {i}")));
                }
                0
            }
            Task::Classification => {
                if n_classes < 2 {
                    return Err(Error::InvalidDataset("classification requires at least 2 classes".into()));
                }
                for (i, &t) in targets.iter().enumerate() {
                    if t < 0.0 || t.fract() != 0.0 || t >= n_classes as f64 {
                        return Err(Error::InvalidDataset(format!("row {i}: label {t} is not an integer in 0..{n_classes}")));
                    }
                }
                n_classes
            }
        };
        Ok(Self { features, targets, feature_names, task, n_classes })
    }

    pub fn n_samples(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// Number of classes (0 for regression).
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_features();
        &self.features[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_features())
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.n_features() + j]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.targets[i] as usize
    }

    pub fn flat_features(&self) -> &[f64] {
        &self.features
    }

    /// Column-major copy of the features.
    pub fn columns(&self) -> Vec<Vec<f64>> {
        let p = self.n_features();
        let mut cols = vec![Vec::with_capacity(self.n_samples()); p];
        for row in self.rows() {
            for (c, &v) in cols.iter_mut().zip(row) {
                c.push(v);
            }
        }
        cols
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let p = self.n_features();
        let mut features = Vec::with_capacity(indices.len() * p);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        Dataset { features, targets, feature_names: self.feature_names.clone(), task: self.task, n_classes: self.n_classes }
    }

    /// Same features with a different target vector (e.g. model predictions).
    pub fn with_targets(&self, targets: Vec<f64>) -> Result<Dataset> {
        Dataset::from_flat(self.features.clone(), targets, self.feature_names.clone(), self.task, self.n_classes)
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// SHA-256 over task, shape, names, features and targets (little-endian).
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.task.as_str().as_bytes());
        h.update((self.n_samples() as u64).to_le_bytes());
        h.update((self.n_features() as u64).to_le_bytes());
        h.update((self.n_classes as u64).to_le_bytes());
        for name in &self.feature_names {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
        }
        for v in &self.features {
            h.update(v.to_le_bytes());
        }
        for v in &self.targets {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn flatten(rows: Vec<Vec<f64>>, p: usize) -> Result<Vec<f64>> {
    let mut flat = Vec::with_capacity(rows.len() * p);
    for (i, row) in rows.into_iter().enumerate() {
        if row.len() != p {
            return Err(Error::InvalidDataset(format!("row {i} has {} values, expected {p}", row.len())));
        }
        flat.extend(row);
    }
    Ok(flat)
}

/// `X1..Xp`-style names.
pub fn default_feature_names(prefix: &str, p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("{prefix}{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_features() {
        let err = Dataset::regression(vec![vec![1.0, f64::NAN]], vec![0.0], default_feature_names("X", 2)).unwrap_err();
        assert!(matches!(err, Error::InvalidDataset(_)));
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let rows = vec![vec![0.0], vec![1.0]];
        assert!(Dataset::classification(rows.clone(), vec![0, 2], vec!["a".into()], Some(2)).is_err());
        let d = Dataset::classification(rows, vec![0, 0], vec!["a".into()], None).unwrap();
        assert_eq!(d.n_classes(), 2);
    }

    #[test]
    fn zero_features_rejected() {
        assert!(Dataset::from_flat(vec![], vec![], vec![], Task::Regression, 0).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = Dataset::regression(vec![vec![1.0], vec![2.0]], vec![0.0, 1.0], vec!["a".into()]).unwrap();
        let b = a.with_targets(vec![0.0, 1.5]).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash(), a.clone().content_hash());
    }

    #[test]
    fn select_and_columns() {
        let d = Dataset::regression(
            vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]],
            vec![0.0, 1.0, 2.0],
            default_feature_names("X", 2),
        )
        .unwrap();
        let s = d.select(&[2, 0]);
        assert_eq!(s.row(0), &[5.0, 6.0]);
        assert_eq!(s.targets(), &[2.0, 0.0]);
        assert_eq!(d.columns()[1], vec![2.0, 4.0, 6.0]);
    }
}
