//! Synthetic generators, CSV ingestion and train/test splitting.

mod generators;

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use generators::*;

use crate::dataset::{Dataset, Task};
use crate::error::{Error, Result};

/// Read a CSV with a header row; every column except `target` becomes a
/// feature. Classification targets must be non-negative integers.
pub fn load_csv(path: &Path, target: &str, task: Task) -> Result<Dataset> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path).map_err(|e| csv_error(path, e))?;
    let headers: Vec<String> = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(str::to_string).collect();
    let target_col = headers
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| Error::MissingColumn { path: path.to_path_buf(), column: target.to_string() })?;
    let feature_names: Vec<String> =
        headers.iter().enumerate().filter(|&(j, _)| j != target_col).map(|(_, h)| h.clone()).collect();

    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != headers.len() {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                row,
                column: String::new(),
                reason: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Csv {
                path: path.to_path_buf(),
                row,
                column: headers[j].clone(),
                reason: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv {
                    path: path.to_path_buf(),
                    row,
                    column: headers[j].clone(),
                    reason: format!("`{cell}` is not finite"),
                });
            }
            if j == target_col {
                if task == Task::Classification && (v < 0.0 || v.fract() != 0.0) {
                    return Err(Error::Csv {
                        path: path.to_path_buf(),
                        row,
                        column: headers[j].clone(),
                        reason: format!("class label `{cell}` is not a non-negative integer"),
                    });
                }
                targets.push(v);
            } else {
                features.push(v);
            }
        }
    }
    let n_classes = match task {
        Task::Regression => 0,
        Task::Classification => targets.iter().fold(0.0f64, |m, &v| m.max(v)) as usize + 1,
    };
    Dataset::from_flat(features, targets, feature_names, task, n_classes.max(if task == Task::Classification { 2 } else { 0 }))
}

/// Read query rows from a CSV with a header. Columns are matched to
/// `feature_names` by name; any other column (such as a target) is ignored.
pub fn load_instances(path: &Path, feature_names: &[String]) -> Result<Vec<Vec<f64>>> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path).map_err(|e| csv_error(path, e))?;
    let headers: Vec<String> = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(str::to_string).collect();
    let cols = feature_names
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn { path: path.to_path_buf(), column: name.clone() })
        })
        .collect::<Result<Vec<usize>>>()?;
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = cols
            .iter()
            .map(|&j| {
                let cell = record.get(j).unwrap_or("");
                cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Csv {
                    path: path.to_path_buf(),
                    row: r + 1,
                    column: headers[j].clone(),
                    reason: format!("`{cell}` is not a finite number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
        kind => Error::Csv { path: path.to_path_buf(), row: 0, column: String::new(), reason: format!("{kind:?}") },
    }
}

/// Write features and the target column (named `target_name`) with a header.
pub fn write_csv(data: &Dataset, path: &Path, target_name: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header: Vec<&str> = data.feature_names().iter().map(String::as_str).collect();
    header.push(target_name);
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (row, y) in data.rows().zip(data.targets()) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(y.to_string());
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Per-instance feature sets as CSV rows `instance_id,features` with
/// features as `;`-separated names.
pub fn write_feature_sets(path: &Path, sets: &[Vec<usize>], feature_names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["instance_id", "features"]).map_err(|e| csv_error(path, e))?;
    for (i, set) in sets.iter().enumerate() {
        let names: Vec<&str> = set.iter().map(|&f| feature_names[f].as_str()).collect();
        w.write_record([i.to_string(), names.join(";")]).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Read per-instance feature sets written by [`write_feature_sets`] or by
/// an external tool. Entries may be feature names or 0-based indices.
/// Returns `(instance_id, features)` pairs in file order.
pub fn read_feature_sets(path: &Path, feature_names: &[String]) -> Result<Vec<(usize, Vec<usize>)>> {
    let by_name: HashMap<&str, usize> = feature_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let bad = |column: &str, reason: String| Error::Csv { path: path.to_path_buf(), row, column: column.to_string(), reason };
        let id: usize = rec.get(0).unwrap_or("").parse().map_err(|_| bad("instance_id", "not a non-negative integer".into()))?;
        let mut set = Vec::new();
        for tok in rec.get(1).unwrap_or("").split(';').map(str::trim).filter(|t| !t.is_empty()) {
            let f = match by_name.get(tok) {
                Some(&f) => f,
                None => tok
                    .parse::<usize>()
                    .ok()
                    .filter(|&f| f < feature_names.len())
                    .ok_or_else(|| bad("features", format!("unknown feature `{tok}`")))?,
            };
            set.push(f);
        }
        set.sort_unstable();
        set.dedup();
        out.push((id, set));
    }
    Ok(out)
}

/// Deterministic train/test split. Classification splits are stratified:
/// each class contributes `round(n_c * test_fraction)` test rows.
/// Returns row indices `(train, test)`, each ascending.
pub fn split_indices(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::param("test_fraction", format!("must lie in [0, 1), got {test_fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<Vec<usize>> = match data.task() {
        Task::Regression => vec![(0..data.n_samples()).collect()],
        Task::Classification => {
            let mut g = vec![Vec::new(); data.n_classes()];
            for i in 0..data.n_samples() {
                g[data.label(i)].push(i);
            }
            g
        }
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut g in groups {
        g.shuffle(&mut rng);
        let n_test = (g.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&g[..n_test]);
        train.extend_from_slice(&g[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(data, test_fraction, seed)?;
    Ok((data.select(&train), data.select(&test)))
}

#[cfg(test)]
mod tests;
