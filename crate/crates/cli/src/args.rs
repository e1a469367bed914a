use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sufficient::data::GeneratorSpec;
use sufficient::{Task, VolumeMode};

#[derive(Debug, Parser)]
#[command(name = "sufficient", version, about = "Sufficient explanations and rules for random forests")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Master seed for every random choice of the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true, env = "SUFFICIENT_THREADS")]
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Omit the creation timestamp so reruns are byte-identical.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub no_timestamp: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with its ground-truth feature sets.
    Synth(SynthArgs),
    /// Fit a forest and write the model file.
    Train(TrainArgs),
    /// Sufficient explanations and importance for instances.
    Explain(ExplainArgs),
    /// Sufficient rules grown from instances.
    Rule(RuleArgs),
    /// Rule model built from the training set's explanations.
    GlobalSr(GlobalSrArgs),
    /// Prediction, discovery, rule and stability metrics on a test set.
    Eval(EvalArgs),
    /// Compare projected CDFs with Monte Carlo draws from the generator.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskArg {
    Reg,
    Clf,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Reg => Task::Regression,
            TaskArg::Clf => Task::Classification,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    LinearSwitch,
    MoonNoise,
    StepDemand,
    TabularClf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GeneratorArgs {
    #[arg(long, value_enum)]
    pub generator: GeneratorKind,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Number of features (linear_switch only).
    #[arg(long, default_value_t = 100)]
    pub p: usize,
    /// Generator seed; defaults to --seed.
    #[arg(long)]
    pub gen_seed: Option<u64>,
}

impl GeneratorArgs {
    pub fn spec(&self, seed: u64) -> GeneratorSpec {
        let seed = self.gen_seed.unwrap_or(seed);
        match self.generator {
            GeneratorKind::LinearSwitch => GeneratorSpec::linear_switch(self.n, self.p, seed),
            GeneratorKind::MoonNoise => GeneratorSpec::moon_noise(self.n, seed),
            GeneratorKind::StepDemand => GeneratorSpec::step_demand(self.n, seed),
            GeneratorKind::TabularClf => GeneratorSpec::tabular_clf(self.n, seed),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[command(flatten)]
    pub gen: GeneratorArgs,
    /// Output CSV (features plus a `y` column).
    #[arg(long)]
    pub csv: PathBuf,
    /// Output CSV of active feature sets per row.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

/// Training data: a CSV file or a generator.
#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    #[arg(long, conflicts_with = "generator", required_unless_present = "generator")]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    pub target: String,
    #[arg(long, value_enum, default_value = "reg")]
    pub task: TaskArg,
    #[arg(long, value_enum)]
    pub generator: Option<GeneratorKind>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub p: usize,
    #[arg(long)]
    pub gen_seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model file to write.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub trees: usize,
    /// Defaults to the size recommended for the sample count.
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    #[arg(long)]
    pub mtry: Option<usize>,
    #[arg(long)]
    pub bootstrap_size: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Model file written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Load even if the training data no longer matches the model's hash.
    #[arg(long)]
    pub allow_hash_mismatch: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DecisionArgs {
    #[arg(long, default_value_t = 0.9)]
    pub pi: f64,
    /// Candidate features kept by split-count preselection.
    #[arg(long, default_value_t = 10)]
    pub s: usize,
    /// Lower tail level of the adaptive band.
    #[arg(long, default_value_t = 0.05)]
    pub alpha1: f64,
    /// Upper tail level of the adaptive band.
    #[arg(long, default_value_t = 0.05)]
    pub alpha2: f64,
    /// Use the fixed band `|y - prediction|^2 <= t` instead of the adaptive one.
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub min_node_size: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InstanceArgs {
    /// CSV of query rows; columns are matched by feature name.
    #[arg(long)]
    pub instances: PathBuf,
    /// Only the first N rows.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub instances: InstanceArgs,
    #[command(flatten)]
    pub decision: DecisionArgs,
    /// Write the selected set of each instance as a feature-set CSV.
    #[arg(long)]
    pub selections: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RuleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub instances: InstanceArgs,
    #[command(flatten)]
    pub decision: DecisionArgs,
    #[arg(long, default_value = "probability")]
    pub volume_mode: VolumeMode,
    /// Grow on these features (names or 0-based indices, comma separated)
    /// instead of every minimal explanation.
    #[arg(long)]
    pub subset: Option<String>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalSrArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub decision: DecisionArgs,
    #[arg(long, default_value = "probability")]
    pub volume_mode: VolumeMode,
    /// Explain at most this many training rows, drawn with --seed.
    #[arg(long)]
    pub max_instances: Option<usize>,
    /// Rule model file to write.
    #[arg(long)]
    pub rules_out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Test CSV including the model's target column.
    #[arg(long)]
    pub test: PathBuf,
    /// Ground-truth feature sets per test row.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Selected feature sets per test row (from `explain` or elsewhere).
    #[arg(long)]
    pub selections: Option<PathBuf>,
    /// Rule model file written by `global-sr`.
    #[arg(long)]
    pub rule_model: Option<PathBuf>,
    /// Rows of the test set used for the stability measurement; 0 skips it.
    #[arg(long, default_value_t = 0)]
    pub stability_instances: usize,
    #[arg(long, default_value_t = 0.1)]
    pub stability_eps: f64,
    #[arg(long, default_value_t = 50)]
    pub stability_draws: usize,
    #[command(flatten)]
    pub decision: DecisionArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OracleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub instances: InstanceArgs,
    /// Conditioning features (names or 0-based indices, comma separated).
    #[arg(long)]
    pub subset: String,
    /// Generating law of the training data, for models fitted on a CSV
    /// written by `synth`. Models fitted from a generator use their own.
    #[arg(long, value_enum)]
    pub law: Option<GeneratorKind>,
    #[arg(long, default_value_t = 20_000)]
    pub n_mc: usize,
    #[arg(long, default_value_t = 512)]
    pub grid_points: usize,
    #[arg(long)]
    pub min_node_size: Option<usize>,
    /// Per-point curves as CSV for plotting.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}
