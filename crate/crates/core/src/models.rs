//! Desk-scale classifiers (cosine kNN, multinomial logistic regression,
//! Gaussian naive Bayes), the binary static/dynamic ML gate, and gated
//! inference.
//!
//! Logistic models train by full-batch gradient descent with a backtracking
//! (Armijo) line search on the weighted softmax cross-entropy plus an L2
//! penalty on the weights (not the bias). Zero initialization keeps fits
//! deterministic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datastore::Activity;
use crate::linalg::{dot, Mat};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("logistic regression needs at least two classes, got {0}")]
    SingleClass(usize),
    #[error("gate training needs both static and dynamic samples")]
    GateSideEmpty,
    #[error("model document error: {0}")]
    Document(String),
}

/// Shared hyperparameters for the three classifier kinds and the gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Neighbors for the cosine kNN vote.
    pub knn_k: usize,
    /// L2 penalty strength for logistic weights.
    pub l2: f64,
    /// Gradient-descent iteration cap.
    pub max_iter: usize,
    /// Gradient-norm convergence threshold.
    pub grad_tol: f64,
    /// Variance floor for Gaussian naive Bayes.
    pub var_floor: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { knn_k: 5, l2: 1e-3, max_iter: 800, grad_tol: 1e-6, var_floor: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    KnnCosine,
    Logistic,
    GaussianNb,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] =
        [ClassifierKind::KnnCosine, ClassifierKind::Logistic, ClassifierKind::GaussianNb];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::KnnCosine => "knn_cosine",
            ClassifierKind::Logistic => "logistic",
            ClassifierKind::GaussianNb => "gaussian_nb",
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "knn_cosine" | "knn" => Ok(ClassifierKind::KnnCosine),
            "logistic" => Ok(ClassifierKind::Logistic),
            "gaussian_nb" | "gnb" => Ok(ClassifierKind::GaussianNb),
            other => Err(format!("unknown classifier kind {other:?}")),
        }
    }
}

// ---------------------------------------------------------------------------
// Logistic core (shared by the multiclass models and the gate)
// ---------------------------------------------------------------------------

/// Weighted softmax cross-entropy plus L2 on the weights:
/// `sum_i w_i CE_i / sum_i w_i + (l2/2) ||W||^2`.
pub(crate) fn logistic_loss_grad(
    x: &Mat,
    y: &[usize],
    l_count: usize,
    sample_weights: &[f64],
    weights: &Mat,
    bias: &[f64],
    l2: f64,
) -> (f64, Mat, Vec<f64>) {
    let n = x.rows();
    let d = x.cols();
    let total_weight: f64 = sample_weights.iter().sum();
    let mut loss = 0.0;
    let mut grad_w = Mat::zeros(l_count, d);
    let mut grad_b = vec![0.0; l_count];

    for i in 0..n {
        let row = x.row(i);
        let mut logits = vec![0.0; l_count];
        for (l, logit) in logits.iter_mut().enumerate() {
            *logit = dot(weights.row(l), row) + bias[l];
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let w_i = sample_weights[i];
        loss += w_i * (z.ln() + max - logits[y[i]]);
        for l in 0..l_count {
            let p = exps[l] / z;
            let coeff = w_i * (p - if l == y[i] { 1.0 } else { 0.0 });
            if coeff != 0.0 {
                let g = grad_w.row_mut(l);
                for (gv, xv) in g.iter_mut().zip(row) {
                    *gv += coeff * xv;
                }
                grad_b[l] += coeff;
            }
        }
    }

    loss /= total_weight;
    for l in 0..l_count {
        let g = grad_w.row_mut(l);
        for (gv, wv) in g.iter_mut().zip(weights.row(l)) {
            *gv = *gv / total_weight + l2 * wv;
        }
        grad_b[l] /= total_weight;
    }
    let penalty: f64 = weights.data().iter().map(|w| w * w).sum();
    loss += 0.5 * l2 * penalty;
    (loss, grad_w, grad_b)
}

/// Multinomial logistic parameters over `l_count` label slots.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LogisticCore {
    pub weights: Mat,
    pub bias: Vec<f64>,
}

impl LogisticCore {
    /// Deterministic full-batch gradient descent from zero initialization
    /// with backtracking line search.
    fn fit(
        x: &Mat,
        y: &[usize],
        l_count: usize,
        sample_weights: &[f64],
        hp: &Hyperparams,
    ) -> Self {
        let d = x.cols();
        let mut weights = Mat::zeros(l_count, d);
        let mut bias = vec![0.0; l_count];
        let (mut loss, mut grad_w, mut grad_b) =
            logistic_loss_grad(x, y, l_count, sample_weights, &weights, &bias, hp.l2);
        let mut step = 1.0;

        for _ in 0..hp.max_iter {
            let grad_sq: f64 = grad_w.data().iter().map(|g| g * g).sum::<f64>()
                + grad_b.iter().map(|g| g * g).sum::<f64>();
            if grad_sq.sqrt() < hp.grad_tol {
                break;
            }
            // Armijo backtracking along the negative gradient.
            let mut accepted = false;
            while step > 1e-18 {
                let mut w_try = weights.clone();
                for l in 0..l_count {
                    let wr = w_try.row_mut(l);
                    for (w, g) in wr.iter_mut().zip(grad_w.row(l)) {
                        *w -= step * g;
                    }
                }
                let b_try: Vec<f64> =
                    bias.iter().zip(&grad_b).map(|(b, g)| b - step * g).collect();
                let (loss_try, gw_try, gb_try) =
                    logistic_loss_grad(x, y, l_count, sample_weights, &w_try, &b_try, hp.l2);
                if loss_try <= loss - 1e-4 * step * grad_sq {
                    weights = w_try;
                    bias = b_try;
                    loss = loss_try;
                    grad_w = gw_try;
                    grad_b = gb_try;
                    step = (step * 2.0).min(1e6);
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Self { weights, bias }
    }

    fn predict_proba(&self, x: &Mat) -> Mat {
        let n = x.rows();
        let l_count = self.bias.len();
        let mut out = Mat::zeros(n, l_count);
        for i in 0..n {
            let row = x.row(i);
            let mut logits = vec![0.0; l_count];
            for (l, logit) in logits.iter_mut().enumerate() {
                *logit = dot(self.weights.row(l), row) + self.bias[l];
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for (l, e) in exps.iter().enumerate() {
                out.set(i, l, e / z);
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Classifiers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    k: usize,
    rows: Mat,
    labels: Vec<Activity>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    core: LogisticCore,
    classes: Vec<Activity>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnbModel {
    classes: Vec<Activity>,
    means: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
    log_priors: Vec<f64>,
}

/// A fitted classifier of one of the three supported kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Knn(KnnModel),
    Logistic(LogisticModel),
    Gnb(GnbModel),
}

fn present_classes(y: &[Activity]) -> Vec<Activity> {
    Activity::ALL.into_iter().filter(|l| y.contains(l)).collect()
}

impl Classifier {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Classifier::Knn(_) => ClassifierKind::KnnCosine,
            Classifier::Logistic(_) => ClassifierKind::Logistic,
            Classifier::Gnb(_) => ClassifierKind::GaussianNb,
        }
    }

    pub fn fit(
        kind: ClassifierKind,
        x: &Mat,
        y: &[Activity],
        hp: &Hyperparams,
    ) -> Result<Classifier, ModelError> {
        if x.rows() == 0 || y.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        assert_eq!(x.rows(), y.len());
        match kind {
            ClassifierKind::KnnCosine => Ok(Classifier::Knn(KnnModel {
                k: hp.knn_k.max(1),
                rows: x.clone(),
                labels: y.to_vec(),
            })),
            ClassifierKind::Logistic => {
                let classes = present_classes(y);
                if classes.len() < 2 {
                    return Err(ModelError::SingleClass(classes.len()));
                }
                let y_idx: Vec<usize> = y
                    .iter()
                    .map(|l| classes.iter().position(|c| c == l).unwrap())
                    .collect();
                let weights = vec![1.0; x.rows()];
                let core = LogisticCore::fit(x, &y_idx, classes.len(), &weights, hp);
                Ok(Classifier::Logistic(LogisticModel { core, classes }))
            }
            ClassifierKind::GaussianNb => {
                let classes = present_classes(y);
                let n = x.rows() as f64;
                let d = x.cols();
                let mut means = Vec::with_capacity(classes.len());
                let mut vars = Vec::with_capacity(classes.len());
                let mut log_priors = Vec::with_capacity(classes.len());
                for &c in &classes {
                    let idx: Vec<usize> =
                        (0..x.rows()).filter(|&i| y[i] == c).collect();
                    let nc = idx.len() as f64;
                    let mut mean = vec![0.0; d];
                    for &i in &idx {
                        for (m, v) in mean.iter_mut().zip(x.row(i)) {
                            *m += v;
                        }
                    }
                    mean.iter_mut().for_each(|m| *m /= nc);
                    let mut var = vec![0.0; d];
                    for &i in &idx {
                        for (vv, (v, m)) in var.iter_mut().zip(x.row(i).iter().zip(&mean)) {
                            let diff = v - m;
                            *vv += diff * diff;
                        }
                    }
                    var.iter_mut().for_each(|v| *v = (*v / nc).max(hp.var_floor));
                    means.push(mean);
                    vars.push(var);
                    log_priors.push((nc / n).ln());
                }
                Ok(Classifier::Gnb(GnbModel { classes, means, vars, log_priors }))
            }
        }
    }

    /// Row-stochastic probabilities over all six labels; labels absent from
    /// training get probability 0.
    pub fn predict_proba(&self, x: &Mat) -> Mat {
        let n = x.rows();
        let mut out = Mat::zeros(n, 6);
        match self {
            Classifier::Knn(m) => {
                for i in 0..n {
                    let probs = m.vote(x.row(i));
                    out.row_mut(i).copy_from_slice(&probs);
                }
            }
            Classifier::Logistic(m) => {
                let local = m.core.predict_proba(x);
                for i in 0..n {
                    for (l, &c) in m.classes.iter().enumerate() {
                        out.set(i, c.index(), local.get(i, l));
                    }
                }
            }
            Classifier::Gnb(m) => {
                for i in 0..n {
                    let row = x.row(i);
                    let mut log_post = vec![0.0; m.classes.len()];
                    for (ci, lp) in log_post.iter_mut().enumerate() {
                        let mut acc = m.log_priors[ci];
                        for j in 0..row.len() {
                            let var = m.vars[ci][j];
                            let diff = row[j] - m.means[ci][j];
                            acc += -0.5 * ((std::f64::consts::TAU * var).ln() + diff * diff / var);
                        }
                        *lp = acc;
                    }
                    let max = log_post.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = log_post.iter().map(|v| (v - max).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    for (ci, &c) in m.classes.iter().enumerate() {
                        out.set(i, c.index(), exps[ci] / z);
                    }
                }
            }
        }
        out
    }

    /// Ungated argmax prediction; ties break toward the lowest label index.
    pub fn predict(&self, x: &Mat) -> Vec<Activity> {
        let probs = self.predict_proba(x);
        (0..x.rows()).map(|i| argmax_label(probs.row(i), None)).collect()
    }

    /// Serializes to a versioned JSON document with parameters as decimal
    /// strings (Rust float formatting round-trips exactly).
    pub fn to_json(&self) -> String {
        let doc = match self {
            Classifier::Knn(m) => serde_json::json!({
                "format_version": 1,
                "kind": "knn_cosine",
                "k": m.k,
                "row_labels": m.labels.iter().map(|l| l.name()).collect::<Vec<_>>(),
                "rows": mat_to_strings(&m.rows),
            }),
            Classifier::Logistic(m) => serde_json::json!({
                "format_version": 1,
                "kind": "logistic",
                "classes": m.classes.iter().map(|l| l.name()).collect::<Vec<_>>(),
                "weights": mat_to_strings(&m.core.weights),
                "bias": floats_to_strings(&m.core.bias),
            }),
            Classifier::Gnb(m) => serde_json::json!({
                "format_version": 1,
                "kind": "gaussian_nb",
                "classes": m.classes.iter().map(|l| l.name()).collect::<Vec<_>>(),
                "means": m.means.iter().map(|v| floats_to_strings(v)).collect::<Vec<_>>(),
                "vars": m.vars.iter().map(|v| floats_to_strings(v)).collect::<Vec<_>>(),
                "log_priors": floats_to_strings(&m.log_priors),
            }),
        };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Classifier, ModelError> {
        let doc: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| ModelError::Document(format!("bad json: {e}")))?;
        let version = doc["format_version"].as_u64().unwrap_or(0);
        if version != 1 {
            return Err(ModelError::Document(format!("unsupported format_version {version}")));
        }
        let kind = doc["kind"].as_str().unwrap_or_default();
        let labels_from =
            |value: &serde_json::Value, field: &str| -> Result<Vec<Activity>, ModelError> {
                value
                    .as_array()
                    .ok_or_else(|| ModelError::Document(format!("{field} missing")))?
                    .iter()
                    .map(|v| {
                        v.as_str()
                            .ok_or_else(|| ModelError::Document(format!("{field} not strings")))?
                            .parse::<Activity>()
                            .map_err(ModelError::Document)
                    })
                    .collect()
            };
        match kind {
            "knn_cosine" => {
                let k = doc["k"].as_u64().ok_or_else(|| ModelError::Document("k missing".into()))?;
                let labels = labels_from(&doc["row_labels"], "row_labels")?;
                let rows = strings_to_mat(&doc["rows"])?;
                Ok(Classifier::Knn(KnnModel { k: k as usize, rows, labels }))
            }
            "logistic" => {
                let classes = labels_from(&doc["classes"], "classes")?;
                let weights = strings_to_mat(&doc["weights"])?;
                let bias = strings_to_floats(&doc["bias"])?;
                Ok(Classifier::Logistic(LogisticModel {
                    core: LogisticCore { weights, bias },
                    classes,
                }))
            }
            "gaussian_nb" => {
                let classes = labels_from(&doc["classes"], "classes")?;
                let means = strings_to_vecs(&doc["means"])?;
                let vars = strings_to_vecs(&doc["vars"])?;
                let log_priors = strings_to_floats(&doc["log_priors"])?;
                Ok(Classifier::Gnb(GnbModel { classes, means, vars, log_priors }))
            }
            other => Err(ModelError::Document(format!("unknown kind {other:?}"))),
        }
    }
}

impl KnnModel {
    /// Cosine-similarity-weighted vote over the top-k neighbors, floored at
    /// zero and renormalized; if no neighbor has positive similarity the
    /// vote falls back to unweighted counts.
    fn vote(&self, row: &[f64]) -> [f64; 6] {
        let n = self.rows.rows();
        let k = self.k.min(n);
        let mut sims: Vec<(usize, f64)> = (0..n)
            .map(|j| (j, crate::linalg::cosine(row, self.rows.row(j))))
            .collect();
        sims.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        sims.truncate(k);

        let mut probs = [0.0; 6];
        let total: f64 = sims.iter().map(|&(_, s)| s.max(0.0)).sum();
        if total > 0.0 {
            for &(j, s) in &sims {
                probs[self.labels[j].index()] += s.max(0.0) / total;
            }
        } else {
            for &(j, _) in &sims {
                probs[self.labels[j].index()] += 1.0 / k as f64;
            }
        }
        probs
    }
}

fn mat_to_strings(m: &Mat) -> Vec<Vec<String>> {
    (0..m.rows()).map(|i| floats_to_strings(m.row(i))).collect()
}

fn floats_to_strings(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

fn strings_to_floats(value: &serde_json::Value) -> Result<Vec<f64>, ModelError> {
    value
        .as_array()
        .ok_or_else(|| ModelError::Document("expected array".into()))?
        .iter()
        .map(|v| {
            v.as_str()
                .ok_or_else(|| ModelError::Document("expected string-encoded float".into()))?
                .parse::<f64>()
                .map_err(|e| ModelError::Document(format!("bad float: {e}")))
        })
        .collect()
}

fn strings_to_vecs(value: &serde_json::Value) -> Result<Vec<Vec<f64>>, ModelError> {
    value
        .as_array()
        .ok_or_else(|| ModelError::Document("expected array of arrays".into()))?
        .iter()
        .map(strings_to_floats)
        .collect()
}

fn strings_to_mat(value: &serde_json::Value) -> Result<Mat, ModelError> {
    let rows = strings_to_vecs(value)?;
    if rows.is_empty() {
        return Ok(Mat::zeros(0, 0));
    }
    Ok(Mat::from_rows(&rows))
}

/// Argmax over the six labels; when `allowed` is given, only those labels
/// compete. Ties break toward the lowest label index.
fn argmax_label(probs: &[f64], allowed: Option<&[Activity]>) -> Activity {
    let candidates: Vec<Activity> = match allowed {
        Some(a) => a.to_vec(),
        None => Activity::ALL.to_vec(),
    };
    let mut best = candidates[0];
    let mut best_p = f64::NEG_INFINITY;
    for &c in &candidates {
        let p = probs[c.index()];
        if p > best_p {
            best = c;
            best_p = p;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// ML Gate
// ---------------------------------------------------------------------------

/// Labels routed to the static side of the gate.
pub const STATIC_LABELS: [Activity; 3] =
    [Activity::Sitting, Activity::Standing, Activity::Laying];
/// Labels routed to the dynamic side of the gate.
pub const DYNAMIC_LABELS: [Activity; 3] =
    [Activity::Walking, Activity::WalkingUpstairs, Activity::WalkingDownstairs];

/// Binary logistic gate restricting predictions to the static or dynamic
/// label set.
#[derive(Debug, Clone, PartialEq)]
pub struct GateModel {
    core: LogisticCore,
    pub threshold: f64,
}

/// Trains the gate on the full training matrix with class-balanced sample
/// weights (`n / (2 * n_side)` per sample).
pub fn fit_gate(x: &Mat, labels: &[Activity], hp: &Hyperparams) -> Result<GateModel, ModelError> {
    if x.rows() == 0 {
        return Err(ModelError::EmptyTrainingSet);
    }
    let y: Vec<usize> = labels.iter().map(|l| usize::from(l.is_dynamic())).collect();
    let n_dynamic = y.iter().filter(|&&v| v == 1).count();
    let n_static = y.len() - n_dynamic;
    if n_dynamic == 0 || n_static == 0 {
        return Err(ModelError::GateSideEmpty);
    }
    let n = y.len() as f64;
    let weights: Vec<f64> = y
        .iter()
        .map(|&v| if v == 1 { n / (2.0 * n_dynamic as f64) } else { n / (2.0 * n_static as f64) })
        .collect();
    let core = LogisticCore::fit(x, &y, 2, &weights, hp);
    Ok(GateModel { core, threshold: 0.5 })
}

impl GateModel {
    /// Probability that each row is a dynamic activity.
    pub fn p_dynamic(&self, x: &Mat) -> Vec<f64> {
        let probs = self.core.predict_proba(x);
        (0..x.rows()).map(|i| probs.get(i, 1)).collect()
    }

    /// The allowed label set for a row: dynamic iff `p_dyn >= threshold`.
    pub fn allowed(&self, p_dynamic: f64) -> &'static [Activity] {
        if p_dynamic >= self.threshold {
            &DYNAMIC_LABELS
        } else {
            &STATIC_LABELS
        }
    }

    /// Binary routing accuracy against the static/dynamic ground truth.
    pub fn accuracy(&self, x: &Mat, labels: &[Activity]) -> f64 {
        let p = self.p_dynamic(x);
        let correct = labels
            .iter()
            .zip(&p)
            .filter(|(l, &p)| l.is_dynamic() == (p >= self.threshold))
            .count();
        correct as f64 / labels.len() as f64
    }
}

/// Gated prediction: the gate picks the allowed label set, classifier
/// probabilities are masked to it and renormalized (uniform fallback when
/// the masked mass is zero), and the argmax is taken inside the set.
pub fn gated_predict(classifier: &Classifier, gate: &GateModel, x: &Mat) -> Vec<Activity> {
    let probs = classifier.predict_proba(x);
    let p_dyn = gate.p_dynamic(x);
    (0..x.rows())
        .map(|i| {
            let allowed = gate.allowed(p_dyn[i]);
            let masked_sum: f64 = allowed.iter().map(|l| probs.get(i, l.index())).sum();
            if masked_sum <= 0.0 {
                // Uniform over the allowed set; the argmax tie rule then
                // picks its first label.
                allowed[0]
            } else {
                argmax_label(probs.row(i), Some(allowed))
            }
        })
        .collect()
}

/// Masked-and-renormalized distribution for one probability row; exposed for
/// property checks on the renormalization behavior.
pub fn masked_distribution(probs: &[f64], allowed: &[Activity]) -> [f64; 6] {
    let mut out = [0.0; 6];
    let masked_sum: f64 = allowed.iter().map(|l| probs[l.index()]).sum();
    if masked_sum <= 0.0 {
        for l in allowed {
            out[l.index()] = 1.0 / allowed.len() as f64;
        }
    } else {
        for l in allowed {
            out[l.index()] = probs[l.index()] / masked_sum;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gauss(rng: &mut ChaCha8Rng) -> f64 {
        let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    fn two_blobs(n_per: usize, sep: f64, seed: u64) -> (Mat, Vec<Activity>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2 * n_per {
            let c = i % 2;
            let center = if c == 0 { -sep } else { sep };
            rows.push(vec![center + 0.3 * gauss(&mut rng), 0.3 * gauss(&mut rng)]);
            labels.push(if c == 0 { Activity::Sitting } else { Activity::Walking });
        }
        (Mat::from_rows(&rows), labels)
    }

    #[test]
    fn logistic_separable_blobs_reach_full_training_accuracy() {
        let (x, y) = two_blobs(20, 2.0, 1);
        let model = Classifier::fit(ClassifierKind::Logistic, &x, &y, &Default::default()).unwrap();
        let preds = model.predict(&x);
        let correct = preds.iter().zip(&y).filter(|(p, t)| p == t).count();
        assert_eq!(correct, y.len());
    }

    #[test]
    fn logistic_rejects_single_class() {
        let x = Mat::from_rows(&[vec![1.0], vec![2.0]]);
        let y = vec![Activity::Walking, Activity::Walking];
        assert!(matches!(
            Classifier::fit(ClassifierKind::Logistic, &x, &y, &Default::default()),
            Err(ModelError::SingleClass(1))
        ));
    }

    #[test]
    fn logistic_boundary_point_is_half_half() {
        // Symmetric two-class problem; the origin sits on the boundary.
        let x = Mat::from_rows(&[
            vec![-1.0, 0.5],
            vec![-1.0, -0.5],
            vec![1.0, 0.5],
            vec![1.0, -0.5],
        ]);
        let y =
            vec![Activity::Sitting, Activity::Sitting, Activity::Walking, Activity::Walking];
        let model = Classifier::fit(ClassifierKind::Logistic, &x, &y, &Default::default()).unwrap();
        let probs = model.predict_proba(&Mat::from_rows(&[vec![0.0, 0.0]]));
        assert!((probs.get(0, Activity::Walking.index()) - 0.5).abs() < 1e-6);
        assert!((probs.get(0, Activity::Sitting.index()) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn logistic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 12;
        let d = 4;
        let l_count = 3;
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| (0..d).map(|_| gauss(&mut rng)).collect()).collect();
        let x = Mat::from_rows(&rows);
        let y: Vec<usize> = (0..n).map(|i| i % l_count).collect();
        let sw: Vec<f64> = (0..n).map(|_| 0.5 + rng.gen::<f64>()).collect();

        for _ in 0..20 {
            let mut w = Mat::zeros(l_count, d);
            for l in 0..l_count {
                for j in 0..d {
                    w.set(l, j, gauss(&mut rng));
                }
            }
            let b: Vec<f64> = (0..l_count).map(|_| gauss(&mut rng)).collect();
            let (_, gw, gb) = logistic_loss_grad(&x, &y, l_count, &sw, &w, &b, 1e-3);

            let h = 1e-5;
            let loss_at = |w: &Mat, b: &[f64]| {
                logistic_loss_grad(&x, &y, l_count, &sw, w, b, 1e-3).0
            };
            for l in 0..l_count {
                for j in 0..d {
                    let mut wp = w.clone();
                    wp.set(l, j, w.get(l, j) + h);
                    let mut wm = w.clone();
                    wm.set(l, j, w.get(l, j) - h);
                    let fd = (loss_at(&wp, &b) - loss_at(&wm, &b)) / (2.0 * h);
                    let rel = (gw.get(l, j) - fd).abs() / fd.abs().max(1e-8);
                    assert!(rel < 1e-4, "grad[{l}][{j}]: {} vs {fd}", gw.get(l, j));
                }
                let mut bp = b.clone();
                bp[l] += h;
                let mut bm = b.clone();
                bm[l] -= h;
                let fd = (loss_at(&w, &bp) - loss_at(&w, &bm)) / (2.0 * h);
                let rel = (gb[l] - fd).abs() / fd.abs().max(1e-8);
                assert!(rel < 1e-4, "bias grad {l}");
            }
        }
    }

    #[test]
    fn knn_memorizes_training_points_with_k1() {
        let (x, y) = two_blobs(10, 1.0, 3);
        let hp = Hyperparams { knn_k: 1, ..Default::default() };
        let model = Classifier::fit(ClassifierKind::KnnCosine, &x, &y, &hp).unwrap();
        assert_eq!(model.predict(&x), y);
    }

    #[test]
    fn knn_unanimous_vote_gives_probability_one() {
        let x = Mat::from_rows(&[vec![1.0, 0.0], vec![0.9, 0.1], vec![0.95, 0.05]]);
        let y = vec![Activity::Walking; 3];
        let hp = Hyperparams { knn_k: 3, ..Default::default() };
        let model = Classifier::fit(ClassifierKind::KnnCosine, &x, &y, &hp).unwrap();
        let probs = model.predict_proba(&Mat::from_rows(&[vec![1.0, 0.02]]));
        assert!((probs.get(0, Activity::Walking.index()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn knn_all_negative_similarities_fall_back_to_counting() {
        let x = Mat::from_rows(&[vec![1.0, 0.0], vec![0.9, 0.1]]);
        let y = vec![Activity::Walking, Activity::Sitting];
        let hp = Hyperparams { knn_k: 2, ..Default::default() };
        let model = Classifier::fit(ClassifierKind::KnnCosine, &x, &y, &hp).unwrap();
        let probs = model.predict_proba(&Mat::from_rows(&[vec![-1.0, -0.05]]));
        assert!((probs.get(0, Activity::Walking.index()) - 0.5).abs() < 1e-12);
        assert!((probs.get(0, Activity::Sitting.index()) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gnb_decision_boundary_near_zero_for_symmetric_gaussians() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..200 {
            rows.push(vec![-2.0 + gauss(&mut rng)]);
            labels.push(Activity::Sitting);
            rows.push(vec![2.0 + gauss(&mut rng)]);
            labels.push(Activity::Walking);
        }
        let x = Mat::from_rows(&rows);
        let model =
            Classifier::fit(ClassifierKind::GaussianNb, &x, &labels, &Default::default()).unwrap();

        // Scan for the sign flip of the posterior difference.
        let mut boundary = f64::NAN;
        let mut prev: Option<(f64, f64)> = None;
        let mut t = -1.0;
        while t <= 1.0 {
            let p = model.predict_proba(&Mat::from_rows(&[vec![t]]));
            let diff =
                p.get(0, Activity::Walking.index()) - p.get(0, Activity::Sitting.index());
            if let Some((pt, pd)) = prev {
                if pd <= 0.0 && diff > 0.0 {
                    boundary = pt + (t - pt) * (-pd) / (diff - pd);
                    break;
                }
            }
            prev = Some((t, diff));
            t += 0.001;
        }
        assert!(boundary.abs() < 0.1, "boundary at {boundary}");

        // Closed-form posterior oracle at a few points, from the fitted
        // class statistics via Bayes' rule.
        if let Classifier::Gnb(g) = &model {
            for &pt in &[-1.0, -0.25, 0.0, 0.4, 1.5] {
                let density = |ci: usize| {
                    let var = g.vars[ci][0];
                    let diff: f64 = pt - g.means[ci][0];
                    (g.log_priors[ci] - 0.5 * ((std::f64::consts::TAU * var).ln() + diff * diff / var)).exp()
                };
                let d0 = density(0);
                let d1 = density(1);
                let p = model.predict_proba(&Mat::from_rows(&[vec![pt]]));
                // classes = [Walking, Sitting] in enum order; g.classes[0] is Walking.
                let want_first = d0 / (d0 + d1);
                assert!((p.get(0, g.classes[0].index()) - want_first).abs() < 1e-9);
            }
        } else {
            unreachable!();
        }
    }

    #[test]
    fn gnb_hand_set_one_dimensional_model() {
        // Two classes with known means/vars/priors; posterior from Bayes.
        let x = Mat::from_rows(&[vec![0.0], vec![2.0], vec![4.0], vec![6.0]]);
        let y = vec![Activity::Sitting, Activity::Sitting, Activity::Walking, Activity::Walking];
        let model = Classifier::fit(ClassifierKind::GaussianNb, &x, &y, &Default::default()).unwrap();
        // Fitted: Sitting mean 1 var 1, Walking mean 5 var 1, priors 1/2.
        let at = |v: f64| model.predict_proba(&Mat::from_rows(&[vec![v]]));
        let p = at(3.0); // equidistant: posterior 1/2 each
        assert!((p.get(0, Activity::Sitting.index()) - 0.5).abs() < 1e-9);
        let p = at(1.0);
        let n = |x: f64, m: f64| (-0.5 * (x - m) * (x - m)).exp();
        let want = n(1.0, 1.0) / (n(1.0, 1.0) + n(1.0, 5.0));
        assert!((p.get(0, Activity::Sitting.index()) - want).abs() < 1e-9);
    }

    #[test]
    fn predict_proba_rows_sum_to_one_for_all_kinds() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let rows: Vec<Vec<f64>> =
            (0..30).map(|_| (0..4).map(|_| gauss(&mut rng)).collect()).collect();
        let labels: Vec<Activity> =
            (0..30).map(|i| Activity::from_index(i % 6).unwrap()).collect();
        let x = Mat::from_rows(&rows);
        let queries: Vec<Vec<f64>> =
            (0..20).map(|_| (0..4).map(|_| gauss(&mut rng)).collect()).collect();
        let q = Mat::from_rows(&queries);

        for kind in ClassifierKind::ALL {
            let model = Classifier::fit(kind, &x, &labels, &Default::default()).unwrap();
            let probs = model.predict_proba(&q);
            for i in 0..q.rows() {
                let sum: f64 = probs.row(i).iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "{kind}: row {i} sums to {sum}");
                assert!(probs.row(i).iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn save_load_round_trip_preserves_predictions_exactly() {
        let (x, y) = two_blobs(10, 1.5, 9);
        for kind in ClassifierKind::ALL {
            let model = Classifier::fit(kind, &x, &y, &Default::default()).unwrap();
            let json = model.to_json();
            let back = Classifier::from_json(&json).unwrap();
            assert_eq!(model, back, "{kind}");
        }
    }

    fn gate_fixture() -> (Mat, Vec<Activity>) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let label = Activity::from_index(i % 6).unwrap();
            // Dynamic classes have a large second feature (an "std"-like
            // cue), static classes a small one.
            let cue = if label.is_dynamic() { 2.0 } else { 0.1 };
            rows.push(vec![gauss(&mut rng) * 0.2, cue + gauss(&mut rng) * 0.1]);
            labels.push(label);
        }
        (Mat::from_rows(&rows), labels)
    }

    #[test]
    fn gate_reaches_high_accuracy_on_separable_cue() {
        let (x, y) = gate_fixture();
        let gate = fit_gate(&x, &y, &Default::default()).unwrap();
        assert!(gate.accuracy(&x, &y) >= 0.99);
    }

    #[test]
    fn gate_threshold_routes_exact_half_to_dynamic() {
        let (x, y) = gate_fixture();
        let gate = fit_gate(&x, &y, &Default::default()).unwrap();
        assert_eq!(gate.allowed(0.5), &DYNAMIC_LABELS);
        assert_eq!(gate.allowed(0.49999), &STATIC_LABELS);
    }

    #[test]
    fn gate_rejects_one_sided_input() {
        let x = Mat::from_rows(&[vec![1.0], vec![2.0]]);
        let y = vec![Activity::Walking, Activity::Walking];
        assert!(matches!(fit_gate(&x, &y, &Default::default()), Err(ModelError::GateSideEmpty)));
    }

    #[test]
    fn balanced_weights_are_invariant_to_duplicating_a_side() {
        // The balanced-weight gradient at fixed parameters is unchanged when
        // every static sample is tripled.
        let (x, y) = gate_fixture();
        let y_bin: Vec<usize> = y.iter().map(|l| usize::from(l.is_dynamic())).collect();
        let n_dyn = y_bin.iter().filter(|&&v| v == 1).count();
        let n_stat = y_bin.len() - n_dyn;
        let n = y_bin.len() as f64;
        let weights: Vec<f64> = y_bin
            .iter()
            .map(|&v| if v == 1 { n / (2.0 * n_dyn as f64) } else { n / (2.0 * n_stat as f64) })
            .collect();

        let mut w = Mat::zeros(2, x.cols());
        w.set(0, 0, 0.3);
        w.set(1, 1, -0.7);
        let b = vec![0.1, -0.2];
        let (loss_a, gw_a, gb_a) = logistic_loss_grad(&x, &y_bin, 2, &weights, &w, &b, 1e-3);

        // Duplicate static rows three times.
        let mut rows2: Vec<Vec<f64>> = Vec::new();
        let mut y2: Vec<usize> = Vec::new();
        for i in 0..x.rows() {
            let copies = if y_bin[i] == 0 { 3 } else { 1 };
            for _ in 0..copies {
                rows2.push(x.row(i).to_vec());
                y2.push(y_bin[i]);
            }
        }
        let x2 = Mat::from_rows(&rows2);
        let n_dyn2 = y2.iter().filter(|&&v| v == 1).count();
        let n_stat2 = y2.len() - n_dyn2;
        let n2 = y2.len() as f64;
        let weights2: Vec<f64> = y2
            .iter()
            .map(|&v| if v == 1 { n2 / (2.0 * n_dyn2 as f64) } else { n2 / (2.0 * n_stat2 as f64) })
            .collect();
        let (loss_b, gw_b, gb_b) = logistic_loss_grad(&x2, &y2, 2, &weights2, &w, &b, 1e-3);

        assert!((loss_a - loss_b).abs() < 1e-12);
        for l in 0..2 {
            for j in 0..x.cols() {
                assert!((gw_a.get(l, j) - gw_b.get(l, j)).abs() < 1e-12);
            }
            assert!((gb_a[l] - gb_b[l]).abs() < 1e-12);
        }
    }

    #[test]
    fn gated_predict_zero_mass_falls_back_to_first_allowed() {
        let (x, y) = gate_fixture();
        let gate = fit_gate(&x, &y, &Default::default()).unwrap();
        // A kNN trained only on static labels puts zero mass on dynamics.
        let static_idx: Vec<usize> =
            (0..x.rows()).filter(|&i| !y[i].is_dynamic()).collect();
        let xs = x.select_rows(&static_idx);
        let ys: Vec<Activity> = static_idx.iter().map(|&i| y[i]).collect();
        let model = Classifier::fit(ClassifierKind::KnnCosine, &xs, &ys, &Default::default())
            .unwrap();

        // Query that the gate routes to DYNAMIC (large cue).
        let q = Mat::from_rows(&[vec![0.0, 2.0]]);
        assert!(gate.p_dynamic(&q)[0] >= 0.5);
        let pred = gated_predict(&model, &gate, &q);
        assert_eq!(pred[0], Activity::Walking); // first dynamic label
    }

    #[test]
    fn gated_predict_agrees_with_ungated_when_gate_allows_argmax() {
        let (x, y) = gate_fixture();
        let gate = fit_gate(&x, &y, &Default::default()).unwrap();
        let model = Classifier::fit(ClassifierKind::Logistic, &x, &y, &Default::default()).unwrap();
        let ungated = model.predict(&x);
        let gated = gated_predict(&model, &gate, &x);
        for i in 0..x.rows() {
            let p = gate.p_dynamic(&Mat::from_rows(&[x.row(i).to_vec()]))[0];
            let allowed = gate.allowed(p);
            if allowed.contains(&ungated[i]) {
                assert_eq!(gated[i], ungated[i], "row {i}");
            }
        }
    }

    #[test]
    fn masked_renormalization_preserves_ratios() {
        let probs = [0.05, 0.1, 0.15, 0.4, 0.2, 0.1];
        let d = masked_distribution(&probs, &STATIC_LABELS);
        let (a, b) = (Activity::Sitting.index(), Activity::Standing.index());
        let lhs = d[a] / d[b];
        let rhs = probs[a] / probs[b];
        assert!((lhs - rhs).abs() < 1e-12);
        let sum: f64 = d.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        // Labels outside the allowed set carry no mass.
        assert_eq!(d[Activity::Walking.index()], 0.0);
    }

    #[test]
    fn gated_predict_never_leaves_the_allowed_set() {
        let (x, y) = gate_fixture();
        let gate = fit_gate(&x, &y, &Default::default()).unwrap();
        let model = Classifier::fit(ClassifierKind::GaussianNb, &x, &y, &Default::default())
            .unwrap();
        let preds = gated_predict(&model, &gate, &x);
        let p_dyn = gate.p_dynamic(&x);
        for (pred, p) in preds.iter().zip(&p_dyn) {
            assert_eq!(pred.is_dynamic(), *p >= 0.5);
        }
    }
}
