//! JSON model persistence. The document stores trees and parameters plus a
//! hash of the training data; the data itself travels separately and must
//! be supplied again on load.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Forest, ForestParams, Tree};
use crate::dataset::{Dataset, Task};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "sufficient-forest";
pub const MODEL_VERSION: u32 = 1;

/// What to do when the supplied training data does not match the hash
/// recorded in the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashPolicy {
    Reject,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub library_version: String,
    pub task: Task,
    pub n_samples: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub feature_names: Vec<String>,
    pub data_hash: String,
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            library_version: crate::VERSION.to_string(),
            task: self.task(),
            n_samples: self.n_samples(),
            n_features: self.n_features(),
            n_classes: self.data.n_classes(),
            feature_names: self.data.feature_names().to_vec(),
            data_hash: self.data.content_hash(),
            params: self.params.clone(),
            trees: self.trees.clone(),
        }
    }

    /// Rebuild a forest from a document and its training data.
    pub fn from_document(doc: ModelDocument, data: Dataset, policy: HashPolicy) -> Result<Forest> {
        if doc.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!("unknown model format '{}'", doc.format)));
        }
        if doc.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!("unsupported model version {} (expected {MODEL_VERSION})", doc.version)));
        }
        if doc.task != data.task() || doc.n_samples != data.n_samples() || doc.n_features != data.n_features() {
            return Err(Error::ModelFormat(format!(
                "model was fitted on {} data of shape {}x{}, got {} data of shape {}x{}",
                doc.task.as_str(),
                doc.n_samples,
                doc.n_features,
                data.task().as_str(),
                data.n_samples(),
                data.n_features()
            )));
        }
        let actual = data.content_hash();
        if actual != doc.data_hash {
            match policy {
                HashPolicy::Reject => return Err(Error::HashMismatch { expected: doc.data_hash, actual }),
                HashPolicy::Warn => {
                    log::warn!("training data hash {actual} differs from the model's {}; continuing", doc.data_hash)
                }
            }
        }
        Forest::from_parts(doc.trees, doc.params, data)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document())?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = self.to_json()?;
        std::fs::write(path, json).map_err(|source| Error::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path, data: Dataset, policy: HashPolicy) -> Result<Forest> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let doc: ModelDocument = serde_json::from_str(&text)?;
        Forest::from_document(doc, data, policy)
    }
}
