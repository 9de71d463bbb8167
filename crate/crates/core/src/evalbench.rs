//! Metrics and the evaluation harnesses: the strategy-comparison grid, the
//! component ablation, the gate on/off study, and per-sample timing.
//!
//! [`prepare`] materializes one experiment (data, features, knowledge,
//! scores, gate) from a run configuration; the harness functions are
//! deterministic given the experiment, so identical configs and seeds yield
//! byte-identical reports. Timing is kept out of the serialized report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cli::{DatasetConfig, RunConfig, StageError};
use crate::datastore::{self, Activity};
use crate::featurizer::{self, FeatureMatrix, SemanticFeatureSpec, Standardizer};
use crate::knowledge::{self, KnowledgePrior};
use crate::linalg::Mat;
use crate::llm_bridge::{self, LlmClient, LlmMode};
use crate::models::{fit_gate, gated_predict, Classifier, ClassifierKind, GateModel};
use crate::scorer::{self, GraphParams, ScoreTable};
use crate::selector::{self, ExemplarSet, Strategy};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Unweighted mean of per-class F1 over the six activities. Classes with no
/// true and no predicted samples contribute F1 = 0.
pub fn macro_f1(y_true: &[Activity], y_pred: &[Activity]) -> Result<f64, EvalError> {
    if y_true.is_empty() {
        return Err(EvalError::Empty("macro_f1 input"));
    }
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(format!(
            "{} true vs {} predicted",
            y_true.len(),
            y_pred.len()
        )));
    }
    let cm = confusion_matrix(y_true, y_pred)?;
    let mut total = 0.0;
    for c in 0..6 {
        let tp = cm[c][c] as f64;
        let fn_: f64 = (0..6).filter(|&j| j != c).map(|j| cm[c][j] as f64).sum();
        let fp: f64 = (0..6).filter(|&i| i != c).map(|i| cm[i][c] as f64).sum();
        let f1 = if tp > 0.0 { 2.0 * tp / (2.0 * tp + fp + fn_) } else { 0.0 };
        total += f1;
    }
    Ok(total / 6.0)
}

/// Row = true label, column = predicted label, in activity-index order.
pub fn confusion_matrix(
    y_true: &[Activity],
    y_pred: &[Activity],
) -> Result<[[usize; 6]; 6], EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(format!(
            "{} true vs {} predicted",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut cm = [[0usize; 6]; 6];
    for (t, p) in y_true.iter().zip(y_pred) {
        cm[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

pub fn write_confusion_csv(cm: &[[usize; 6]; 6], path: &Path) -> Result<(), EvalError> {
    let mut out = String::from("true_label");
    for l in Activity::ALL {
        out.push(',');
        out.push_str(l.name());
    }
    out.push('\n');
    for (i, l) in Activity::ALL.into_iter().enumerate() {
        out.push_str(l.name());
        for j in 0..6 {
            let _ = write!(out, ",{}", cm[i][j]);
        }
        out.push('\n');
    }
    std::fs::write(path, out)
        .map_err(|source| EvalError::Io { path: path.display().to_string(), source })
}

// ---------------------------------------------------------------------------
// Experiment preparation
// ---------------------------------------------------------------------------

/// Everything the harnesses need, materialized once per configuration.
pub struct Experiment {
    pub config: RunConfig,
    pub train: FeatureMatrix,
    pub val: FeatureMatrix,
    pub test: FeatureMatrix,
    pub spectral_k: usize,
    pub specs: Vec<SemanticFeatureSpec>,
    pub prior: KnowledgePrior,
    pub prior_warnings: Vec<String>,
    pub score_table: ScoreTable,
    pub budgets: BTreeMap<Activity, usize>,
    pub gate: GateModel,
    pub gate_train_accuracy: f64,
}

fn stage<E: std::fmt::Display>(name: &'static str) -> impl Fn(E) -> StageError {
    move |e| StageError { stage: name, message: e.to_string() }
}

/// Loads data, obtains the LLM artifacts, builds features, scores
/// candidates, and trains the gate.
pub fn prepare(config: &RunConfig) -> Result<Experiment, StageError> {
    config.validate()?;
    let split = config.resolved_split();
    split.validate().map_err(stage("datastore"))?;

    let (train_w, val_w, test_w) = match &config.dataset {
        DatasetConfig::Synthetic { windows_per_class } => {
            let windows = datastore::synthesize(config.seed, *windows_per_class);
            datastore::split_windows(windows, &split).map_err(stage("datastore"))?
        }
        DatasetConfig::Ucihar { root, acc_source } => {
            datastore::load_ucihar(root, &split, *acc_source).map_err(stage("datastore"))?
        }
    };
    if train_w.is_empty() || val_w.is_empty() || test_w.is_empty() {
        return Err(StageError {
            stage: "datastore",
            message: "one of the subsets is empty after splitting".into(),
        });
    }

    // Train-only standardized base statistics feed both prompts.
    let base = |ws: &[datastore::SensorWindow]| -> Mat {
        Mat::from_rows(&ws.iter().map(|w| featurizer::base_stats(w).to_vec()).collect::<Vec<_>>())
    };
    let base_names: Vec<String> =
        featurizer::BASE_STAT_NAMES.iter().map(|s| s.to_string()).collect();
    let standardizer = Standardizer::fit(&base(&train_w)).map_err(stage("featurizer"))?;
    let to_matrix = |ws: &[datastore::SensorWindow]| -> Result<FeatureMatrix, StageError> {
        FeatureMatrix::new(
            standardizer.apply(&base(ws)),
            base_names.clone(),
            ws.iter().map(|w| w.label).collect(),
            ws.iter().map(|w| w.subject_id).collect(),
        )
        .map_err(stage("featurizer"))
    };
    let z_train = to_matrix(&train_w)?;
    let z_val = to_matrix(&val_w)?;
    let z_test = to_matrix(&test_w)?;

    let client = build_llm_client(config).map_err(stage("llm_bridge"))?;

    // Fragments that must never appear in any prompt: the formatted
    // validation/test class-mean rows.
    let mut forbidden = llm_bridge::class_mean_fragments(&z_val, &base_names);
    forbidden.extend(llm_bridge::class_mean_fragments(&z_test, &base_names));

    let semantic_prompt =
        llm_bridge::build_semantic_prompt(&z_train.class_means(&base_names), &config.llm.model);
    llm_bridge::audit_no_leakage(&semantic_prompt, &forbidden).map_err(stage("llm_bridge"))?;
    let semantic_raw = client.complete(&semantic_prompt).map_err(stage("llm_bridge"))?;
    let specs = knowledge::parse_semantic_specs(&semantic_raw).map_err(stage("knowledge"))?;

    // Knowledge prompt: base + semantic vocabulary with train class means.
    let mut vocab = base_names.clone();
    vocab.extend(specs.iter().map(|s| s.name.clone()));
    let sem_block = |m: &FeatureMatrix| -> Mat {
        let mut out = Mat::zeros(m.n(), vocab.len());
        for i in 0..m.n() {
            let row = m.row(i);
            for (j, _) in base_names.iter().enumerate() {
                out.set(i, j, row[j]);
            }
            for (j, spec) in specs.iter().enumerate() {
                out.set(i, base_names.len() + j, featurizer::apply_semantic(spec, row));
            }
        }
        out
    };
    let vocab_train = FeatureMatrix::new(
        sem_block(&z_train),
        vocab.clone(),
        z_train.labels().to_vec(),
        z_train.subject_ids().to_vec(),
    )
    .map_err(stage("featurizer"))?;

    let knowledge_prompt = llm_bridge::build_knowledge_prompt(
        &Activity::ALL,
        &vocab,
        &vocab_train.class_means(&vocab),
        &config.llm.model,
    )
    .map_err(stage("llm_bridge"))?;
    let vocab_val = FeatureMatrix::new(
        sem_block(&z_val),
        vocab.clone(),
        z_val.labels().to_vec(),
        z_val.subject_ids().to_vec(),
    )
    .map_err(stage("featurizer"))?;
    let vocab_test = FeatureMatrix::new(
        sem_block(&z_test),
        vocab.clone(),
        z_test.labels().to_vec(),
        z_test.subject_ids().to_vec(),
    )
    .map_err(stage("featurizer"))?;
    let mut forbidden_vocab = llm_bridge::class_mean_fragments(&vocab_val, &vocab);
    forbidden_vocab.extend(llm_bridge::class_mean_fragments(&vocab_test, &vocab));
    llm_bridge::audit_no_leakage(&knowledge_prompt, &forbidden_vocab)
        .map_err(stage("llm_bridge"))?;
    let knowledge_raw = client.complete(&knowledge_prompt).map_err(stage("llm_bridge"))?;
    let (prior, prior_warnings) =
        knowledge::parse_and_validate(&knowledge_raw, &Activity::ALL, &vocab)
            .map_err(stage("knowledge"))?;
    for w in &prior_warnings {
        log::warn!("knowledge prior: {w}");
    }

    let space =
        featurizer::build_feature_space(&train_w, &val_w, &test_w, &specs, &config.features)
            .map_err(stage("featurizer"))?;

    let graph = GraphParams {
        k: config.k_graph,
        include_val: config.graph_include_val,
        ..GraphParams::default()
    };
    let score_table =
        scorer::score_candidates(&space.train, &space.val, &prior, config.coefficients, graph)
            .map_err(stage("scorer"))?;

    let budgets = prior.budgets(config.budgets.k_dynamic, config.budgets.k_static);

    let gate = fit_gate(space.train.values(), space.train.labels(), &config.hyperparams)
        .map_err(stage("models"))?;
    let gate_train_accuracy = gate.accuracy(space.train.values(), space.train.labels());

    Ok(Experiment {
        config: config.clone(),
        train: space.train,
        val: space.val,
        test: space.test,
        spectral_k: space.spectral_k,
        specs,
        prior,
        prior_warnings,
        score_table,
        budgets,
        gate,
        gate_train_accuracy,
    })
}

fn build_llm_client(config: &RunConfig) -> Result<LlmClient, llm_bridge::LlmError> {
    match config.llm.mode {
        LlmMode::Fixture => Ok(LlmClient::fixture()),
        mode => {
            let transport = llm_bridge::HttpTransport::from_env(
                config.llm.endpoint.clone(),
                &config.llm.api_key_env,
            )?;
            let cache = llm_bridge::ResponseCache::new(config.llm.cache_dir.clone())?;
            Ok(LlmClient::with_transport(mode, Box::new(transport), Some(cache)))
        }
    }
}

// ---------------------------------------------------------------------------
// Shared evaluation helpers
// ---------------------------------------------------------------------------

/// How the LLM-guided arm turns scores into exemplars.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    FacilityGreedy,
    /// Ablation arm: plain top-score selection.
    TopScore,
}

/// Exemplar selection for one strategy under the experiment's budgets.
pub fn select_for_strategy(
    exp: &Experiment,
    strategy: Strategy,
    table: &ScoreTable,
    mode: SelectionMode,
) -> Result<ExemplarSet, StageError> {
    match (strategy, mode) {
        (Strategy::LlmGuided, SelectionMode::TopScore) => {
            selector::select_exemplars_top_score(&exp.train, table, &exp.budgets)
                .map_err(stage("selector"))
        }
        _ => selector::select_exemplars(
            strategy,
            &exp.train,
            Some(table),
            &exp.budgets,
            exp.config.blend_alpha,
            exp.config.seed,
        )
        .map_err(stage("selector")),
    }
}

/// Trains one classifier on the selected exemplars.
pub fn train_on_exemplars(
    exp: &Experiment,
    exemplars: &ExemplarSet,
    kind: ClassifierKind,
) -> Result<Classifier, StageError> {
    let indices = exemplars.all_indices();
    let x = exp.train.values().select_rows(&indices);
    let y: Vec<Activity> = indices.iter().map(|&i| exp.train.label(i)).collect();
    Classifier::fit(kind, &x, &y, &exp.config.hyperparams).map_err(stage("models"))
}

/// Test-set predictions, gated or not per the experiment configuration.
pub fn predict_test(exp: &Experiment, model: &Classifier, gated: bool) -> Vec<Activity> {
    if gated {
        gated_predict(model, &exp.gate, exp.test.values())
    } else {
        model.predict(exp.test.values())
    }
}

/// Macro-F1 of one (strategy, classifier) cell plus its confusion matrix.
pub fn evaluate_cell(
    exp: &Experiment,
    exemplars: &ExemplarSet,
    kind: ClassifierKind,
    gated: bool,
) -> Result<(f64, [[usize; 6]; 6]), StageError> {
    let model = train_on_exemplars(exp, exemplars, kind)?;
    let preds = predict_test(exp, &model, gated);
    let f1 = macro_f1(exp.test.labels(), &preds).map_err(stage("evalbench"))?;
    let cm = confusion_matrix(exp.test.labels(), &preds).map_err(stage("evalbench"))?;
    Ok((f1, cm))
}

// ---------------------------------------------------------------------------
// Harnesses
// ---------------------------------------------------------------------------

/// Strategy-comparison grid: macro-F1 per classifier and strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `f1[classifier][strategy]`, percentages.
    pub f1: BTreeMap<String, BTreeMap<String, f64>>,
    /// Column means over the classifier set, percentages.
    pub strategy_means: BTreeMap<String, f64>,
    /// Confusion matrices of the LLM-guided column.
    pub confusion_llm_guided: BTreeMap<String, Vec<Vec<usize>>>,
    /// Selected exemplar counts per strategy.
    pub exemplars_selected: BTreeMap<String, usize>,
}

pub fn run_comparison(exp: &Experiment) -> Result<ComparisonReport, StageError> {
    let mut sets: BTreeMap<Strategy, ExemplarSet> = BTreeMap::new();
    for strategy in Strategy::ALL {
        sets.insert(
            strategy,
            select_for_strategy(exp, strategy, &exp.score_table, SelectionMode::FacilityGreedy)?,
        );
    }

    type Cell = (Strategy, ClassifierKind, f64, [[usize; 6]; 6]);
    let cells: Vec<(Strategy, ClassifierKind)> = Strategy::ALL
        .into_iter()
        .flat_map(|s| exp.config.classifiers.iter().map(move |&k| (s, k)))
        .collect();
    let results: Vec<Result<Cell, StageError>> = cells
        .par_iter()
        .map(|&(strategy, kind)| {
            let (f1, cm) = evaluate_cell(exp, &sets[&strategy], kind, exp.config.gate_enabled)?;
            Ok((strategy, kind, f1, cm))
        })
        .collect();

    let mut f1_grid: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut confusion: BTreeMap<String, Vec<Vec<usize>>> = BTreeMap::new();
    for result in results {
        let (strategy, kind, f1, cm) = result?;
        f1_grid
            .entry(kind.name().to_string())
            .or_default()
            .insert(strategy.name().to_string(), f1 * 100.0);
        if strategy == Strategy::LlmGuided {
            confusion.insert(
                kind.name().to_string(),
                cm.iter().map(|row| row.to_vec()).collect(),
            );
        }
    }

    let mut strategy_means = BTreeMap::new();
    for strategy in Strategy::ALL {
        let vals: Vec<f64> =
            f1_grid.values().filter_map(|m| m.get(strategy.name()).copied()).collect();
        if !vals.is_empty() {
            strategy_means.insert(
                strategy.name().to_string(),
                vals.iter().sum::<f64>() / vals.len() as f64,
            );
        }
    }

    let exemplars_selected = sets
        .iter()
        .map(|(s, set)| (s.name().to_string(), set.total_selected()))
        .collect();

    Ok(ComparisonReport { f1: f1_grid, strategy_means, confusion_llm_guided: confusion, exemplars_selected })
}

/// One ablation configuration and its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    /// Mean macro-F1 over the classifier set, percentage.
    pub mean_macro_f1: f64,
    /// Difference to the full system (negative = drop).
    pub change: f64,
}

/// Four component toggles, each evaluated against the full system.
pub fn run_ablation(exp: &Experiment) -> Result<Vec<AblationRow>, StageError> {
    let coeff = exp.config.coefficients;
    let variants: Vec<(&str, scorer::Coefficients, SelectionMode)> = vec![
        ("full", coeff, SelectionMode::FacilityGreedy),
        (
            "no_semantic_prior",
            scorer::Coefficients { beta: 0.0, ..coeff },
            SelectionMode::FacilityGreedy,
        ),
        ("no_pagerank", scorer::Coefficients { mu: 0.0, ..coeff }, SelectionMode::FacilityGreedy),
        ("no_hubness", scorer::Coefficients { tau: 0.0, ..coeff }, SelectionMode::FacilityGreedy),
        ("no_facility", coeff, SelectionMode::TopScore),
    ];

    let results: Vec<Result<(usize, f64), StageError>> = variants
        .par_iter()
        .enumerate()
        .map(|(pos, (name, coefficients, mode))| {
            // The full system reuses the experiment's score table exactly;
            // toggled variants rescore with their modified coefficients.
            let table = if *name == "full" || *coefficients == coeff {
                exp.score_table.clone()
            } else {
                let graph = GraphParams {
                    k: exp.config.k_graph,
                    include_val: exp.config.graph_include_val,
                    ..GraphParams::default()
                };
                scorer::score_candidates(&exp.train, &exp.val, &exp.prior, *coefficients, graph)
                    .map_err(stage("scorer"))?
            };
            let exemplars = select_for_strategy(exp, Strategy::LlmGuided, &table, *mode)?;
            let mut total = 0.0;
            for &kind in &exp.config.classifiers {
                let (f1, _) = evaluate_cell(exp, &exemplars, kind, exp.config.gate_enabled)?;
                total += f1 * 100.0;
            }
            Ok((pos, total / exp.config.classifiers.len() as f64))
        })
        .collect();

    let mut means = vec![0.0; variants.len()];
    for r in results {
        let (pos, mean) = r?;
        means[pos] = mean;
    }
    let full = means[0];
    Ok(variants
        .iter()
        .zip(&means)
        .map(|((name, _, _), &mean)| AblationRow {
            name: name.to_string(),
            mean_macro_f1: mean,
            change: mean - full,
        })
        .collect())
}

/// Gate on/off macro-F1 per classifier on the LLM-guided exemplars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateStudyRow {
    pub with_gate: f64,
    pub without_gate: f64,
}

pub fn gate_study(exp: &Experiment) -> Result<BTreeMap<String, GateStudyRow>, StageError> {
    let exemplars =
        select_for_strategy(exp, Strategy::LlmGuided, &exp.score_table, SelectionMode::FacilityGreedy)?;
    let mut out = BTreeMap::new();
    for &kind in &exp.config.classifiers {
        let model = train_on_exemplars(exp, &exemplars, kind)?;
        let gated = macro_f1(exp.test.labels(), &predict_test(exp, &model, true))
            .map_err(stage("evalbench"))?;
        let ungated = macro_f1(exp.test.labels(), &predict_test(exp, &model, false))
            .map_err(stage("evalbench"))?;
        out.insert(
            kind.name().to_string(),
            GateStudyRow { with_gate: gated * 100.0, without_gate: ungated * 100.0 },
        );
    }
    Ok(out)
}

/// Median wall-clock prediction time per sample, in milliseconds.
pub fn time_inference(model: &Classifier, x: &Mat, repeats: usize) -> Result<f64, EvalError> {
    if x.rows() == 0 {
        return Err(EvalError::Empty("timing input"));
    }
    if repeats == 0 {
        return Err(EvalError::Empty("timing repeats"));
    }
    let mut times: Vec<f64> = (0..repeats)
        .map(|_| {
            let start = Instant::now();
            let _ = model.predict(x);
            start.elapsed().as_secs_f64() * 1e3 / x.rows() as f64
        })
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(times[times.len() / 2])
}

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

/// The full evaluation report. Timing is excluded from serialization so
/// reports from identical configs compare byte-for-byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: RunConfig,
    pub comparison: ComparisonReport,
    pub ablation: Vec<AblationRow>,
    pub gate_study: BTreeMap<String, GateStudyRow>,
    pub gate_train_accuracy: f64,
    pub budgets: BTreeMap<Activity, usize>,
    pub spectral_components: usize,
    pub prior_warnings: Vec<String>,
    #[serde(skip)]
    pub timing_ms_per_sample: BTreeMap<String, f64>,
}

/// Runs every harness and assembles the report (timing separate; see
/// [`run_timing`]).
pub fn run_full(exp: &Experiment) -> Result<EvalReport, StageError> {
    Ok(EvalReport {
        config: exp.config.clone(),
        comparison: run_comparison(exp)?,
        ablation: run_ablation(exp)?,
        gate_study: gate_study(exp)?,
        gate_train_accuracy: exp.gate_train_accuracy,
        budgets: exp.budgets.clone(),
        spectral_components: exp.spectral_k,
        prior_warnings: exp.prior_warnings.clone(),
        timing_ms_per_sample: BTreeMap::new(),
    })
}

/// Per-classifier inference timing on the test set, for models trained on
/// the configured strategy's exemplars.
pub fn run_timing(exp: &Experiment) -> Result<BTreeMap<String, f64>, StageError> {
    let exemplars = select_for_strategy(
        exp,
        exp.config.strategy,
        &exp.score_table,
        SelectionMode::FacilityGreedy,
    )?;
    let mut out = BTreeMap::new();
    for &kind in &exp.config.classifiers {
        let model = train_on_exemplars(exp, &exemplars, kind)?;
        let ms = time_inference(&model, exp.test.values(), exp.config.timing_repeats)
            .map_err(stage("evalbench"))?;
        out.insert(kind.name().to_string(), ms);
    }
    Ok(out)
}

impl EvalReport {
    /// Human-readable aligned tables.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Strategy comparison (macro F1, %):");
        let strategies: Vec<&str> = Strategy::ALL.iter().map(|s| s.name()).collect();
        let _ = write!(out, "{:<14}", "classifier");
        for s in &strategies {
            let _ = write!(out, "{s:>14}");
        }
        out.push('\n');
        for (classifier, row) in &self.comparison.f1 {
            let _ = write!(out, "{classifier:<14}");
            for s in &strategies {
                match row.get(*s) {
                    Some(v) => {
                        let _ = write!(out, "{v:>14.2}");
                    }
                    None => {
                        let _ = write!(out, "{:>14}", "-");
                    }
                }
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<14}", "mean");
        for s in &strategies {
            match self.comparison.strategy_means.get(*s) {
                Some(v) => {
                    let _ = write!(out, "{v:>14.2}");
                }
                None => {
                    let _ = write!(out, "{:>14}", "-");
                }
            }
        }
        out.push('\n');

        let _ = writeln!(out, "\nAblation (mean macro F1, %):");
        for row in &self.ablation {
            let _ = writeln!(
                out,
                "{:<22}{:>10.2}  ({:+.2})",
                row.name, row.mean_macro_f1, row.change
            );
        }

        let _ = writeln!(out, "\nGate study (macro F1, %):");
        let _ = writeln!(out, "{:<14}{:>12}{:>14}", "classifier", "with gate", "without gate");
        for (classifier, row) in &self.gate_study {
            let _ = writeln!(
                out,
                "{:<14}{:>12.2}{:>14.2}",
                classifier, row.with_gate, row.without_gate
            );
        }
        let _ = writeln!(out, "\nGate training accuracy: {:.4}", self.gate_train_accuracy);

        if !self.timing_ms_per_sample.is_empty() {
            let _ = writeln!(out, "\nInference timing (ms/sample, median):");
            for (classifier, ms) in &self.timing_ms_per_sample {
                let _ = writeln!(out, "{classifier:<14}{ms:>12.4}");
            }
        }
        out
    }
}
