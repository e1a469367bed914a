//! Sufficient explanations and sufficient rules for tree ensembles.
//!
//! A fitted [`Forest`] is viewed as an adaptive nearest-neighbor estimator.
//! On top of it the crate computes projected forests (the forest's estimate
//! of `E[Y | X_S = x_S]`), Same Decision Probabilities, minimal sufficient
//! explanations and sufficient rules.

pub mod data;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod explain;
pub mod forest;
pub mod projected;
pub mod rules;
pub mod sdp;
pub mod subset;

pub use dataset::{default_feature_names, Dataset, Task};
pub use error::{Error, Result};
pub use explain::{lxi, search_sufficient, ExplainParams, ExplanationSet, LxiMode, ScoredSubset};
pub use forest::{Forest, ForestParams, HashPolicy, Prediction, Tree, TreeNode};
pub use projected::{Interval, ProjectedCell, Projection};
pub use rules::{GlobalSrParams, Rule, RuleModel, RuleParams, RulePrediction, VolumeMode};
pub use sdp::{BandProvenance, Decision, DecisionBand, SdpEvaluator, SdpResult};
pub use subset::Subset;

/// Library version, echoed in every artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
