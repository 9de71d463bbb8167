//! Hybrid candidate scoring: validation margin, class-conditional PageRank,
//! hubness penalty, and the LLM semantic prior, combined per class.
//!
//! The four raw components live on very different scales (PageRank is a
//! probability near 1/n, hubness an integer count), so each is z-score
//! normalized within its class before the weighted combination. Constant
//! components normalize to zero.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datastore::Activity;
use crate::featurizer::FeatureMatrix;
use crate::knowledge::KnowledgePrior;
use crate::linalg::{dot, norm, normalized_rows, Mat};
use crate::simgraph::{build_mutual_knn, hubness, pagerank};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("validation matrix is empty")]
    EmptyValidation,
    #[error("no scores computed for class {0}")]
    MissingClass(Activity),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Combination coefficients for the hybrid score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub alpha: f64,
    pub mu: f64,
    pub tau: f64,
    pub beta: f64,
}

impl Default for Coefficients {
    fn default() -> Self {
        Self { alpha: 1.0, mu: 0.10, tau: 0.10, beta: 0.15 }
    }
}

/// Graph construction parameters for the centrality components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub k: usize,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Also include the class's validation rows as graph nodes. Scores are
    /// still reported for training candidates only.
    pub include_val: bool,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self { k: 10, damping: 0.85, tol: 1e-10, max_iter: 200, include_val: false }
    }
}

/// One candidate's raw components, normalized components, and final score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    /// Row index into the training feature matrix.
    pub index: usize,
    pub label: Activity,
    pub margin: f64,
    pub pagerank: f64,
    pub hubness: f64,
    pub semantic: f64,
    pub margin_z: f64,
    pub pagerank_z: f64,
    pub hubness_z: f64,
    pub semantic_z: f64,
    pub score: f64,
}

/// All candidate scores plus the coefficients that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub records: Vec<ScoreRecord>,
    pub coefficients: Coefficients,
}

impl ScoreTable {
    /// Scores for the given training-row indices, in their order.
    pub fn scores_for(&self, indices: &[usize]) -> Vec<f64> {
        let by_index: BTreeMap<usize, f64> =
            self.records.iter().map(|r| (r.index, r.score)).collect();
        indices.iter().map(|i| by_index[i]).collect()
    }

    /// Writes `index,label,M,P,H,T,S` rows.
    pub fn export_csv(&self, path: &Path) -> Result<(), ScoreError> {
        let mut file = fs::File::create(path)
            .map_err(|source| ScoreError::Io { path: path.display().to_string(), source })?;
        let mut out = String::from("index,label,M,P,H,T,S\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.index, r.label, r.margin, r.pagerank, r.hubness, r.semantic, r.score
            ));
        }
        file.write_all(out.as_bytes())
            .map_err(|source| ScoreError::Io { path: path.display().to_string(), source })
    }
}

/// A margin value plus a degeneracy flag (one validation side was empty).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin {
    pub value: f64,
    pub degenerate: bool,
}

/// Positive-vs-negative validation margin for one candidate.
///
/// Mean cosine similarity to same-class validation rows minus mean cosine
/// similarity to all other validation rows. With one side empty the other
/// side alone is returned (flagged); an empty validation set is an error.
pub fn margin(
    candidate_row: &[f64],
    candidate_label: Activity,
    val: &FeatureMatrix,
) -> Result<Margin, ScoreError> {
    if val.n() == 0 {
        return Err(ScoreError::EmptyValidation);
    }
    let stats = ValMarginStats::new(val);
    Ok(stats.margin(candidate_row, candidate_label))
}

/// Precomputed per-class means of the unit-normalized validation rows.
///
/// Mean cosine similarity to a row set equals the dot product with the mean
/// of its unit vectors, so one pass over the validation set serves every
/// candidate.
struct ValMarginStats {
    /// Sum of unit validation vectors per class, plus counts.
    class_sums: BTreeMap<Activity, (Vec<f64>, usize)>,
    total_sum: Vec<f64>,
    total_count: usize,
    d: usize,
}

impl ValMarginStats {
    fn new(val: &FeatureMatrix) -> Self {
        let unit = normalized_rows(val.values());
        let d = val.d();
        let mut class_sums: BTreeMap<Activity, (Vec<f64>, usize)> = BTreeMap::new();
        let mut total_sum = vec![0.0; d];
        for i in 0..val.n() {
            let row = unit.row(i);
            let entry = class_sums.entry(val.label(i)).or_insert_with(|| (vec![0.0; d], 0));
            for (s, v) in entry.0.iter_mut().zip(row) {
                *s += v;
            }
            entry.1 += 1;
            for (s, v) in total_sum.iter_mut().zip(row) {
                *s += v;
            }
        }
        Self { class_sums, total_sum, total_count: val.n(), d }
    }

    fn margin(&self, candidate_row: &[f64], label: Activity) -> Margin {
        let n = norm(candidate_row);
        if n == 0.0 {
            // Zero-norm candidates are similar to nothing on both sides.
            let degenerate = !self.class_sums.contains_key(&label)
                || self.class_sums.get(&label).map(|(_, c)| *c) == Some(self.total_count);
            return Margin { value: 0.0, degenerate };
        }
        let unit: Vec<f64> = candidate_row.iter().map(|v| v / n).collect();
        let (pos_sum, pos_count) = match self.class_sums.get(&label) {
            Some((s, c)) => (Some(s), *c),
            None => (None, 0),
        };
        let neg_count = self.total_count - pos_count;

        let pos_mean = pos_sum.map(|s| dot(&unit, s) / pos_count as f64);
        let neg_mean = if neg_count > 0 {
            let mut neg = vec![0.0; self.d];
            for (i, t) in neg.iter_mut().enumerate() {
                *t = self.total_sum[i] - pos_sum.map_or(0.0, |s| s[i]);
            }
            Some(dot(&unit, &neg) / neg_count as f64)
        } else {
            None
        };

        match (pos_mean, neg_mean) {
            (Some(p), Some(ng)) => Margin { value: p - ng, degenerate: false },
            (Some(p), None) => Margin { value: p, degenerate: true },
            (None, Some(ng)) => Margin { value: -ng, degenerate: true },
            (None, None) => unreachable!("validation set is nonempty"),
        }
    }
}

/// Semantic prior of Eq-style form: own-class alignment minus the strongest
/// confusability-weighted competitor alignment.
///
/// `T = w_y . x - max_{y' != y} c_{y,y'} (w_{y'} . x)`, with absent weights
/// and confusabilities contributing zero.
pub fn semantic_score(
    candidate_row: &[f64],
    candidate_label: Activity,
    prior: &KnowledgePrior,
    feature_columns: &[String],
) -> f64 {
    let own = prior.weight_vector(candidate_label, feature_columns);
    let own_score = dot(candidate_row, &own);
    let mut competitor = f64::NEG_INFINITY;
    for other in Activity::ALL {
        if other == candidate_label {
            continue;
        }
        let c = prior.confusability(candidate_label, other);
        let w = prior.weight_vector(other, feature_columns);
        let term = c * dot(candidate_row, &w);
        if term > competitor {
            competitor = term;
        }
    }
    own_score - competitor
}

/// Population z-scores; a (near-)constant slice normalizes to all zeros.
pub fn zscores(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std <= 1e-12 {
        return vec![0.0; n];
    }
    values.iter().map(|v| (v - mean) / std).collect()
}

/// Raw per-candidate components for one class, in candidate order.
pub struct RawComponents {
    pub indices: Vec<usize>,
    pub label: Activity,
    pub margins: Vec<f64>,
    pub pageranks: Vec<f64>,
    pub hubness: Vec<f64>,
    pub semantics: Vec<f64>,
}

/// Z-normalizes each component within the class and combines them.
pub fn combine(raw: &RawComponents, coefficients: Coefficients) -> Vec<ScoreRecord> {
    let m_z = zscores(&raw.margins);
    let p_z = zscores(&raw.pageranks);
    let h_z = zscores(&raw.hubness);
    let t_z = zscores(&raw.semantics);
    (0..raw.indices.len())
        .map(|i| {
            let score = coefficients.alpha * m_z[i] + coefficients.mu * p_z[i]
                - coefficients.tau * h_z[i]
                + coefficients.beta * t_z[i];
            ScoreRecord {
                index: raw.indices[i],
                label: raw.label,
                margin: raw.margins[i],
                pagerank: raw.pageranks[i],
                hubness: raw.hubness[i],
                semantic: raw.semantics[i],
                margin_z: m_z[i],
                pagerank_z: p_z[i],
                hubness_z: h_z[i],
                semantic_z: t_z[i],
                score,
            }
        })
        .collect()
}

/// Scores every training candidate: builds the per-class graphs, computes
/// margins and semantic priors, normalizes within class, and combines.
///
/// Records are returned sorted by training-row index, one per candidate.
pub fn score_candidates(
    train: &FeatureMatrix,
    val: &FeatureMatrix,
    prior: &KnowledgePrior,
    coefficients: Coefficients,
    graph: GraphParams,
) -> Result<ScoreTable, ScoreError> {
    if val.n() == 0 {
        return Err(ScoreError::EmptyValidation);
    }
    let val_stats = ValMarginStats::new(val);
    let columns = train.column_names().to_vec();

    let mut records: Vec<ScoreRecord> = Vec::with_capacity(train.n());
    for label in Activity::ALL {
        let indices = train.rows_with_label(label);
        if indices.is_empty() {
            continue;
        }
        let n_class = indices.len();

        // Graph nodes: training rows of the class first, then optionally
        // the class's validation rows; components are read off the training
        // prefix.
        let mut graph_rows = train.values().select_rows(&indices);
        if graph.include_val {
            let val_indices = val.rows_with_label(label);
            if !val_indices.is_empty() {
                let mut rows: Vec<Vec<f64>> =
                    indices.iter().map(|&i| train.row(i).to_vec()).collect();
                rows.extend(val_indices.iter().map(|&i| val.row(i).to_vec()));
                graph_rows = Mat::from_rows(&rows);
            }
        }
        let g = build_mutual_knn(&graph_rows, graph.k);
        let pr = pagerank(&g, graph.damping, graph.tol, graph.max_iter);
        if !pr.converged {
            log::warn!("pagerank did not converge for class {label}");
        }
        let hubs = hubness(&g);

        let mut raw = RawComponents {
            indices: indices.clone(),
            label,
            margins: Vec::with_capacity(n_class),
            pageranks: pr.scores[..n_class].to_vec(),
            hubness: hubs[..n_class].iter().map(|&h| h as f64).collect(),
            semantics: Vec::with_capacity(n_class),
        };
        for &i in &indices {
            let row = train.row(i);
            let m = val_stats.margin(row, label);
            if m.degenerate {
                log::warn!("degenerate margin for class {label}: one validation side empty");
            }
            raw.margins.push(m.value);
            raw.semantics.push(semantic_score(row, label, prior, &columns));
        }
        records.extend(combine(&raw, coefficients));
    }
    records.sort_by_key(|r| r.index);
    Ok(ScoreTable { records, coefficients })
}
