use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use sufficient::data::{load_csv, load_instances, read_feature_sets, write_csv, write_feature_sets, GeneratorSpec};
use sufficient::eval::{
    accuracy, cdf_validation, discovery_metrics, p_mse, r_squared, rule_metrics, stability, y_grid, ForestRuleExplainer, McOracle,
};
use sufficient::forest::ModelDocument;
use sufficient::{
    lxi, Dataset, Decision, DecisionBand, Error, ExplainParams, ExplanationSet, Forest, ForestParams, GlobalSrParams, HashPolicy,
    LxiMode, Prediction, Rule, RuleModel, RuleParams, ScoredSubset, SdpEvaluator, Subset, Task,
};

use crate::args::{
    DataArgs, DecisionArgs, EvalArgs, ExplainArgs, Format, GeneratorArgs, GlobalSrArgs, InstanceArgs, ModelArgs, OracleArgs,
    RuleArgs, SynthArgs, TrainArgs,
};
use crate::artifact::{io_error, read_json, write_json, CliError, CliResult, Context};

/// Where a model's training data comes from; stored in the model file so
/// later commands can rebuild the forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DataSource {
    Csv { path: PathBuf, target: String, task: Task },
    Generator { spec: GeneratorSpec },
}

impl DataSource {
    fn from_args(a: &DataArgs, seed: u64) -> Self {
        match (&a.data, a.generator) {
            (Some(path), _) => DataSource::Csv { path: path.clone(), target: a.target.clone(), task: a.task.into() },
            (None, Some(generator)) => {
                DataSource::Generator { spec: GeneratorArgs { generator, n: a.n, p: a.p, gen_seed: a.gen_seed }.spec(seed) }
            }
            (None, None) => unreachable!("clap requires --data or --generator"),
        }
    }

    fn load(&self) -> CliResult<Dataset> {
        Ok(match self {
            DataSource::Csv { path, target, task } => load_csv(path, target, *task)?,
            DataSource::Generator { spec } => spec.generate()?.data,
        })
    }

    fn target(&self) -> &str {
        match self {
            DataSource::Csv { target, .. } => target,
            DataSource::Generator { .. } => "y",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    source: DataSource,
    forest: ModelDocument,
}

#[derive(Debug, Clone, Serialize)]
struct FeatureScore {
    feature: String,
    value: f64,
}

#[derive(Debug, Clone, Serialize)]
struct NamedSet {
    features: Vec<String>,
    indices: Subset,
    sdp: f64,
}

fn named(s: &ScoredSubset, names: &[String]) -> NamedSet {
    NamedSet { features: s.features.iter().map(|f| names[f].clone()).collect(), indices: s.features.clone(), sdp: s.sdp }
}

fn scores(values: &[f64], names: &[String]) -> Vec<FeatureScore> {
    values
        .iter()
        .zip(names)
        .filter(|(v, _)| **v != 0.0)
        .map(|(&value, feature)| FeatureScore { feature: feature.clone(), value })
        .collect()
}

fn metric_name(task: Task) -> &'static str {
    match task {
        Task::Regression => "r2",
        Task::Classification => "accuracy",
    }
}

fn predictive_score(forest: &Forest, data: &Dataset) -> CliResult<f64> {
    let pred = data.rows().map(|x| forest.predict_scalar(x)).collect::<Result<Vec<f64>, Error>>()?;
    Ok(match forest.task() {
        Task::Regression => r_squared(&pred, data.targets()),
        Task::Classification => accuracy(&pred, data.targets()),
    })
}

fn load_model(a: &ModelArgs) -> CliResult<(Forest, ModelFile)> {
    let doc = read_json(&a.model)?;
    if doc.get("kind").and_then(|k| k.as_str()) != Some("model") {
        return Err(CliError::new("model_format", format!("{} is not a model file", a.model.display())));
    }
    let file: ModelFile = serde_json::from_value(doc["model"].clone())?;
    let data = file.source.load()?;
    let policy = if a.allow_hash_mismatch { HashPolicy::Warn } else { HashPolicy::Reject };
    let forest = Forest::from_document(file.forest.clone(), data, policy)?;
    Ok((forest, file))
}

fn load_rows(a: &InstanceArgs, forest: &Forest) -> CliResult<Vec<Vec<f64>>> {
    let mut rows = load_instances(&a.instances, forest.data().feature_names())?;
    if let Some(limit) = a.limit {
        rows.truncate(limit);
    }
    if rows.is_empty() {
        return Err(CliError::new("empty_collection", format!("{} has no rows", a.instances.display())));
    }
    Ok(rows)
}

/// Parse `a,b,3` into feature indices by name or 0-based index.
fn parse_subset(spec: &str, names: &[String]) -> CliResult<Subset> {
    let mut out = Vec::new();
    for tok in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let f = match names.iter().position(|n| n == tok) {
            Some(f) => f,
            None => tok
                .parse::<usize>()
                .ok()
                .filter(|&f| f < names.len())
                .ok_or_else(|| CliError::param(format!("unknown feature `{tok}`")))?,
        };
        out.push(f);
    }
    if out.is_empty() {
        return Err(CliError::param("--subset names no feature"));
    }
    Ok(Subset::new(out))
}

fn validate_decision(d: &DecisionArgs) -> CliResult<()> {
    explain_params(d).validate()?;
    for (name, a) in [("alpha1", d.alpha1), ("alpha2", d.alpha2)] {
        if !(0.0..1.0).contains(&a) {
            return Err(CliError::param(format!("--{name} must lie in [0, 1), got {a}")));
        }
    }
    if d.alpha1 + d.alpha2 >= 1.0 {
        return Err(CliError::param("--alpha1 + --alpha2 must be below 1"));
    }
    if let Some(t) = d.t {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::param(format!("--t must be positive, got {t}")));
        }
    }
    Ok(())
}

fn explain_params(d: &DecisionArgs) -> ExplainParams {
    ExplainParams { pi: d.pi, s: d.s, min_node_size: d.min_node_size }
}

fn decision_for(forest: &Forest, x: &[f64], d: &DecisionArgs) -> CliResult<Decision> {
    match (forest.task(), d.t) {
        (Task::Regression, Some(t)) => Ok(Decision::Band(DecisionBand::fixed(forest.predict_value(x)?, t)?)),
        _ => Ok(forest.decision_at(x, d.alpha1, d.alpha2)?),
    }
}

pub fn synth(ctx: &Context, a: &SynthArgs) -> CliResult<()> {
    let spec = a.gen.spec(ctx.seed);
    let syn = spec.generate()?;
    write_csv(&syn.data, &a.csv, "y")?;
    if let Some(path) = &a.truth {
        write_feature_sets(path, &syn.truth, syn.data.feature_names())?;
    }
    ctx.emit(serde_json::json!({
        "generator": spec,
        "task": syn.data.task(),
        "n_samples": syn.data.n_samples(),
        "n_features": syn.data.n_features(),
        "data_hash": syn.data.content_hash(),
        "csv": a.csv,
        "truth": a.truth,
    }))
}

pub fn train(ctx: &Context, a: &TrainArgs) -> CliResult<()> {
    let source = DataSource::from_args(&a.data, ctx.seed);
    let data = source.load()?;
    let params = ForestParams {
        n_trees: a.trees,
        min_samples_leaf: a.min_samples_leaf.unwrap_or_else(|| ForestParams::recommended_min_samples_leaf(data.n_samples())),
        mtry: a.mtry,
        bootstrap_size: a.bootstrap_size,
        seed: ctx.seed,
    };
    info!("fitting {} trees on {} samples", params.n_trees, data.n_samples());
    let forest = Forest::fit(data, &params)?;
    let names = forest.data().feature_names().to_vec();
    let freq: Vec<f64> = forest.split_frequency().iter().map(|&c| c as f64).collect();
    let report = serde_json::json!({
        "task": forest.task(),
        "n_samples": forest.n_samples(),
        "n_features": forest.n_features(),
        "params": forest.params(),
        "data_hash": forest.data().content_hash(),
        "train_metric": { metric_name(forest.task()): predictive_score(&forest, forest.data())? },
        "split_frequency": scores(&freq, &names),
        "model": a.model,
    });
    let file = ModelFile { source, forest: forest.to_document() };
    write_json(&a.model, &ctx.envelope("model", file)?)?;
    ctx.emit(report)
}

#[derive(Debug, Serialize)]
struct InstanceExplanation {
    instance: usize,
    prediction: Prediction,
    decision: Decision,
    preselected: Vec<String>,
    ase: Vec<NamedSet>,
    mse: Vec<NamedSet>,
    best_fallback: Option<NamedSet>,
    /// Highest-SDP minimal explanation, or the fallback when none exists.
    selected: Option<NamedSet>,
    lxi_ase: Vec<FeatureScore>,
    lxi_mse: Vec<FeatureScore>,
}

fn lxi_or_zero(e: &ExplanationSet, p: usize, mode: LxiMode) -> CliResult<Vec<f64>> {
    if e.ase.is_empty() {
        return Ok(vec![0.0; p]);
    }
    Ok(lxi(e, p, mode)?)
}

pub fn explain(ctx: &Context, a: &ExplainArgs) -> CliResult<()> {
    validate_decision(&a.decision)?;
    let (forest, _) = load_model(&a.model)?;
    let rows = load_rows(&a.instances, &forest)?;
    let names = forest.data().feature_names().to_vec();
    let p = forest.n_features();
    let params = explain_params(&a.decision);
    let mut out = Vec::with_capacity(rows.len());
    let mut selections = Vec::with_capacity(rows.len());
    let mut mean_ase = vec![0.0; p];
    let mut mean_mse = vec![0.0; p];
    let mut explained = 0usize;
    for (i, x) in rows.iter().enumerate() {
        info!("explaining instance {i}/{}", rows.len());
        let decision = decision_for(&forest, x, &a.decision)?;
        let e = forest.find_explanations(x, decision, &params)?;
        let l_ase = lxi_or_zero(&e, p, LxiMode::Ase)?;
        let l_mse = lxi_or_zero(&e, p, LxiMode::Mse)?;
        if !e.ase.is_empty() {
            explained += 1;
            for f in 0..p {
                mean_ase[f] += l_ase[f];
                mean_mse[f] += l_mse[f];
            }
        }
        selections.push(e.best().map(|s| s.features.indices().to_vec()).unwrap_or_default());
        out.push(InstanceExplanation {
            instance: i,
            prediction: forest.predict(x)?,
            decision,
            preselected: e.preselected.iter().map(|&f| names[f].clone()).collect(),
            ase: e.ase.iter().map(|s| named(s, &names)).collect(),
            mse: e.mse.iter().map(|s| named(s, &names)).collect(),
            best_fallback: e.best_fallback.as_ref().map(|s| named(s, &names)),
            selected: e.best().map(|s| named(s, &names)),
            lxi_ase: scores(&l_ase, &names),
            lxi_mse: scores(&l_mse, &names),
        });
    }
    if let Some(path) = &a.selections {
        write_feature_sets(path, &selections, &names)?;
    }
    let denom = explained.max(1) as f64;
    mean_ase.iter_mut().for_each(|v| *v /= denom);
    mean_mse.iter_mut().for_each(|v| *v /= denom);
    ctx.emit(serde_json::json!({
        "n_instances": rows.len(),
        "n_explained": explained,
        "mean_lxi_ase": scores(&mean_ase, &names),
        "mean_lxi_mse": scores(&mean_mse, &names),
        "instances": out,
    }))
}

#[derive(Debug, Serialize)]
struct RuleOutcome {
    subset: Vec<String>,
    rule: Option<Rule>,
    rendered: Option<String>,
    error: Option<serde_json::Value>,
}

pub fn rule(ctx: &Context, a: &RuleArgs) -> CliResult<()> {
    validate_decision(&a.decision)?;
    let (forest, _) = load_model(&a.model)?;
    let rows = load_rows(&a.instances, &forest)?;
    let names = forest.data().feature_names().to_vec();
    let fixed = a.subset.as_deref().map(|s| parse_subset(s, &names)).transpose()?;
    let params = RuleParams { pi: a.decision.pi, volume_mode: a.volume_mode, min_node_size: a.decision.min_node_size };
    let mns = params.min_node_size.unwrap_or_else(|| forest.default_min_node_size());
    let mut report = Vec::new();
    let mut lines = Vec::new();
    for (i, x) in rows.iter().enumerate() {
        let decision = decision_for(&forest, x, &a.decision)?;
        let subsets = match &fixed {
            Some(s) => vec![s.clone()],
            None => {
                forest.find_explanations(x, decision, &explain_params(&a.decision))?.mse.into_iter().map(|m| m.features).collect()
            }
        };
        let eval = SdpEvaluator::new(&forest, x, decision, mns)?;
        let mut outcomes = Vec::new();
        for s in subsets {
            let subset: Vec<String> = s.iter().map(|f| names[f].clone()).collect();
            match forest.grow_rule_with(&eval, &s, &params) {
                Ok(r) => {
                    lines.push(format!("[{i}] {r}"));
                    outcomes.push(RuleOutcome { subset, rendered: Some(r.render()), rule: Some(r), error: None });
                }
                Err(e @ (Error::NotSufficient(_) | Error::EmptyCell(_))) => {
                    lines.push(format!("[{i}] {{{}}}: {e}", subset.join(", ")));
                    outcomes.push(RuleOutcome {
                        subset,
                        rule: None,
                        rendered: None,
                        error: Some(serde_json::json!({ "code": e.code(), "message": e.to_string() })),
                    });
                }
                Err(e) => return Err(e.into()),
            }
        }
        if outcomes.is_empty() {
            lines.push(format!("[{i}] no sufficient explanation"));
        }
        report.push(serde_json::json!({ "instance": i, "decision": decision, "rules": outcomes }));
    }
    match a.format {
        Format::Json => ctx.emit(serde_json::json!({ "n_instances": rows.len(), "instances": report })),
        Format::Text => ctx.emit_text(&lines),
    }
}

pub fn global_sr(ctx: &Context, a: &GlobalSrArgs) -> CliResult<()> {
    validate_decision(&a.decision)?;
    if a.decision.t.is_some() {
        return Err(CliError::param("global-sr uses adaptive bands; --t is not supported"));
    }
    let (forest, _) = load_model(&a.model)?;
    let params = GlobalSrParams {
        explain: explain_params(&a.decision),
        volume_mode: a.volume_mode,
        alpha1: a.decision.alpha1,
        alpha2: a.decision.alpha2,
        max_instances: a.max_instances,
        seed: ctx.seed,
    };
    let train = forest.data().clone();
    let model = forest.build_global_sr(&train, &params)?;
    write_json(&a.rules_out, &ctx.envelope("rule_model", &model)?)?;
    let n = model.rules.len().max(1) as f64;
    let sizes: Vec<usize> = model.rules.iter().map(Rule::size).collect();
    ctx.emit(serde_json::json!({
        "n_rules": model.rules.len(),
        "train_coverage": model.coverage(&train),
        "mean_rule_coverage": model.rules.iter().map(|r| r.coverage).sum::<f64>() / n,
        "mean_precision": model.rules.iter().map(|r| r.precision).sum::<f64>() / n,
        "sparsity": sufficient::eval::Sparsity::of(&sizes),
        "build": model.report,
        "rules": model.rules.iter().map(Rule::render).collect::<Vec<_>>(),
        "rules_out": a.rules_out,
    }))
}

fn load_rule_model(path: &Path) -> CliResult<RuleModel> {
    let doc = read_json(path)?;
    if doc.get("kind").and_then(|k| k.as_str()) != Some("rule_model") {
        return Err(CliError::new("model_format", format!("{} is not a rule model file", path.display())));
    }
    Ok(serde_json::from_value(doc["rule_model"].clone())?)
}

pub fn eval(ctx: &Context, a: &EvalArgs) -> CliResult<()> {
    validate_decision(&a.decision)?;
    let (forest, file) = load_model(&a.model)?;
    let test = load_csv(&a.test, file.source.target(), forest.task())?;
    let names = forest.data().feature_names().to_vec();
    if test.feature_names() != names.as_slice() {
        return Err(CliError::new(
            "dimension_mismatch",
            "test columns differ from the training columns (names and order must match)",
        ));
    }
    let mut report = serde_json::Map::new();
    report.insert("n_test".into(), test.n_samples().into());
    report.insert("test_metric".into(), serde_json::json!({ metric_name(forest.task()): predictive_score(&forest, &test)? }));

    if let Some(sel_path) = &a.selections {
        let selections = read_feature_sets(sel_path, &names)?;
        for &(id, _) in &selections {
            if id >= test.n_samples() {
                return Err(CliError::param(format!(
                    "selection for instance {id} but the test set has {} rows",
                    test.n_samples()
                )));
            }
        }
        if let Some(truth_path) = &a.truth {
            let truth: BTreeMap<usize, Vec<usize>> = read_feature_sets(truth_path, &names)?.into_iter().collect();
            let (sel, tru): (Vec<Vec<usize>>, Vec<Vec<usize>>) =
                selections.iter().filter_map(|(id, s)| truth.get(id).map(|t| (s.clone(), t.clone()))).unzip();
            let d = discovery_metrics(&sel, &tru)?;
            report.insert(
                "discovery".into(),
                serde_json::json!({ "tpr": d.tpr, "fdr": d.fdr, "n_scored": d.n_scored, "n_skipped": d.n_skipped }),
            );
        }
        if forest.task() == Task::Regression {
            let probes: Vec<Vec<f64>> = selections.iter().map(|(id, _)| test.row(*id).to_vec()).collect();
            let subsets: Vec<Subset> = selections.iter().map(|(_, s)| Subset::new(s.clone())).collect();
            let mns = a.decision.min_node_size.unwrap_or_else(|| forest.default_min_node_size());
            report.insert("p_mse".into(), p_mse(&forest, &probes, &subsets, mns)?.into());
        }
    }

    if let Some(path) = &a.rule_model {
        let model = load_rule_model(path)?;
        report.insert("rules".into(), serde_json::to_value(rule_metrics(&forest, &model, &test)?)?);
    }

    if a.stability_instances > 0 {
        let mut explainer = ForestRuleExplainer::new(
            &forest,
            explain_params(&a.decision),
            RuleParams { pi: a.decision.pi, min_node_size: a.decision.min_node_size, ..RuleParams::default() },
        );
        explainer.alpha1 = a.decision.alpha1;
        explainer.alpha2 = a.decision.alpha2;
        let k = a.stability_instances.min(test.n_samples());
        let mut results = Vec::with_capacity(k);
        for i in 0..k {
            info!("stability instance {i}/{k}");
            results.push(stability(
                &explainer,
                test.row(i),
                a.stability_eps,
                a.stability_draws,
                ctx.seed.wrapping_add(i as u64),
            )?);
        }
        let counts: Vec<f64> = results.iter().map(|r| r.distinct as f64).collect();
        let mean = counts.iter().sum::<f64>() / k as f64;
        let std = (counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / k as f64).sqrt();
        let near = results.iter().map(|r| r.near_distinct as f64).sum::<f64>() / k as f64;
        report.insert(
            "stability".into(),
            serde_json::json!({
                "epsilon": a.stability_eps,
                "draws": a.stability_draws,
                "instances": k,
                "mean_distinct": mean,
                "std_distinct": std,
                "mean_near_distinct": near,
                "per_instance": results,
            }),
        );
    }
    ctx.emit(report)
}

pub fn oracle_check(ctx: &Context, a: &OracleArgs) -> CliResult<()> {
    let (forest, file) = load_model(&a.model)?;
    let spec = match (file.source, a.law) {
        (DataSource::Generator { spec }, _) => spec,
        (DataSource::Csv { .. }, Some(generator)) => {
            GeneratorArgs { generator, n: forest.n_samples(), p: forest.n_features(), gen_seed: Some(0) }.spec(0)
        }
        (DataSource::Csv { .. }, None) => {
            return Err(CliError::new(
                "unsupported_generator",
                "the model was fitted on a CSV; name its generating law with --law",
            ))
        }
    };
    if a.grid_points < 2 {
        return Err(CliError::param("--grid-points must be at least 2"));
    }
    let names = forest.data().feature_names().to_vec();
    let subset = parse_subset(&a.subset, &names)?;
    let rows = load_rows(&a.instances, &forest)?;
    let oracle = McOracle::new(spec, a.n_mc, ctx.seed)?;
    let grid = y_grid(forest.data().targets(), a.grid_points);
    let mns = a.min_node_size.unwrap_or_else(|| forest.default_min_node_size());
    let v = cdf_validation(&forest, &oracle, &rows, &subset, &grid, mns)?;
    if let Some(path) = &a.curves {
        let mut text = String::from("instance,y,projected_cdf,oracle_cdf\n");
        for (i, (e, r)) in v.estimated.iter().zip(&v.reference).enumerate() {
            for ((y, fe), fr) in grid.iter().zip(e).zip(r) {
                let _ = writeln!(text, "{i},{y},{fe},{fr}");
            }
        }
        std::fs::write(path, text).map_err(|e| io_error(path, e))?;
    }
    ctx.emit(serde_json::json!({
        "subset": subset.iter().map(|f| names[f].clone()).collect::<Vec<_>>(),
        "n_instances": rows.len(),
        "n_mc": a.n_mc,
        "mks": v.mks,
        "mad": v.mad,
        "mad_integral": v.mad_integral,
        "fraction_within_0.05": v.fraction_within(0.05),
        "per_instance": v.per_instance,
        "curves": a.curves,
    }))
}
