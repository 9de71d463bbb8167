//! Feature construction: time-domain statistics, PCA, spectral PCA, and
//! LLM-designed semantic axes, all standardized with train-only statistics.
//!
//! The unified feature space is assembled block-wise in a fixed column
//! order: `[12 base stats | semantic axes | PCA components | spectral PCA]`.
//! Every transform is fit on the training subset and then applied unchanged
//! to validation and test.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datastore::{Activity, SensorWindow, NUM_CHANNELS, WINDOW_LEN};
use crate::linalg::{symmetric_eigen, Mat};

/// The 12 base statistics in output order: per channel, mean then std.
pub const BASE_STAT_NAMES: [&str; 12] = [
    "acc_x_mean",
    "acc_x_std",
    "acc_y_mean",
    "acc_y_std",
    "acc_z_mean",
    "acc_z_std",
    "gyr_x_mean",
    "gyr_x_std",
    "gyr_y_mean",
    "gyr_y_std",
    "gyr_z_mean",
    "gyr_z_std",
];

/// Spectral bins per channel for a real FFT of a 128-sample window.
pub const SPECTRAL_BINS: usize = WINDOW_LEN / 2 + 1;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("empty matrix: {0}")]
    Empty(&'static str),
    #[error("invalid component count k={k} for matrix with {n} rows and {d} columns")]
    BadComponentCount { k: usize, n: usize, d: usize },
    #[error("total variance is zero; cannot fit PCA by variance ratio")]
    ZeroVariance,
    #[error("duplicate column name: {0}")]
    DuplicateColumn(String),
    #[error("column count {names} does not match matrix width {width}")]
    ColumnMismatch { names: usize, width: usize },
    #[error("non-finite value in column {0}")]
    NonFinite(String),
    #[error("semantic feature {feature:?} references unknown base statistic {stat:?}")]
    UnknownBaseStat { feature: String, stat: String },
    #[error("invalid semantic spec: {0}")]
    BadSemanticSpec(String),
    #[error("csv error on {path}: {message}")]
    Csv { path: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

// ---------------------------------------------------------------------------
// FeatureMatrix
// ---------------------------------------------------------------------------

/// A named feature matrix with per-row labels and subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Mat,
    column_names: Vec<String>,
    labels: Vec<Activity>,
    subject_ids: Vec<u8>,
}

impl FeatureMatrix {
    pub fn new(
        values: Mat,
        column_names: Vec<String>,
        labels: Vec<Activity>,
        subject_ids: Vec<u8>,
    ) -> Result<Self, FeatureError> {
        if column_names.len() != values.cols() {
            return Err(FeatureError::ColumnMismatch {
                names: column_names.len(),
                width: values.cols(),
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &column_names {
            if !seen.insert(name) {
                return Err(FeatureError::DuplicateColumn(name.clone()));
            }
        }
        assert_eq!(labels.len(), values.rows());
        assert_eq!(subject_ids.len(), values.rows());
        Ok(Self { values, column_names, labels, subject_ids })
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn d(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn label(&self, i: usize) -> Activity {
        self.labels[i]
    }

    pub fn labels(&self) -> &[Activity] {
        &self.labels
    }

    pub fn subject_ids(&self) -> &[u8] {
        &self.subject_ids
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    /// Row indices carrying the given label, ascending.
    pub fn rows_with_label(&self, label: Activity) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] == label).collect()
    }

    /// Verifies there are no NaN/Inf entries; names the first bad column.
    pub fn check_finite(&self) -> Result<(), FeatureError> {
        for i in 0..self.n() {
            for (j, v) in self.row(i).iter().enumerate() {
                if !v.is_finite() {
                    return Err(FeatureError::NonFinite(self.column_names[j].clone()));
                }
            }
        }
        Ok(())
    }

    /// Mean of each requested column per class, keyed by activity.
    pub fn class_means(&self, columns: &[String]) -> BTreeMap<Activity, Vec<f64>> {
        let idx: Vec<usize> = columns
            .iter()
            .map(|c| self.column_index(c).unwrap_or_else(|| panic!("unknown column {c}")))
            .collect();
        let mut out = BTreeMap::new();
        for label in Activity::ALL {
            let rows = self.rows_with_label(label);
            if rows.is_empty() {
                continue;
            }
            let mut means = vec![0.0; idx.len()];
            for &r in &rows {
                let row = self.row(r);
                for (m, &j) in means.iter_mut().zip(&idx) {
                    *m += row[j];
                }
            }
            for m in &mut means {
                *m /= rows.len() as f64;
            }
            out.insert(label, means);
        }
        out
    }

    /// Writes `subject,label,<columns...>` CSV. Values use Rust's shortest
    /// round-trip float formatting, so import is lossless.
    pub fn export_csv(&self, path: &Path) -> Result<(), FeatureError> {
        let mut file = fs::File::create(path)
            .map_err(|source| FeatureError::Io { path: path.display().to_string(), source })?;
        let mut header = String::from("subject,label");
        for c in &self.column_names {
            header.push(',');
            header.push_str(c);
        }
        header.push('\n');
        file.write_all(header.as_bytes())
            .map_err(|source| FeatureError::Io { path: path.display().to_string(), source })?;
        for i in 0..self.n() {
            let mut line = format!("{},{}", self.subject_ids[i], self.labels[i]);
            for v in self.row(i) {
                line.push(',');
                line.push_str(&v.to_string());
            }
            line.push('\n');
            file.write_all(line.as_bytes())
                .map_err(|source| FeatureError::Io { path: path.display().to_string(), source })?;
        }
        Ok(())
    }

    pub fn import_csv(path: &Path) -> Result<Self, FeatureError> {
        let text = fs::read_to_string(path)
            .map_err(|source| FeatureError::Io { path: path.display().to_string(), source })?;
        let csv_err =
            |message: String| FeatureError::Csv { path: path.display().to_string(), message };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| csv_err("empty file".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[0] != "subject" || cols[1] != "label" {
            return Err(csv_err("header must start with subject,label".into()));
        }
        let column_names: Vec<String> = cols[2..].iter().map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut subjects = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != cols.len() {
                return Err(csv_err(format!("line {}: field count mismatch", lineno + 2)));
            }
            let subject: u8 = parts[0]
                .parse()
                .map_err(|_| csv_err(format!("line {}: bad subject", lineno + 2)))?;
            let label: Activity = parts[1]
                .parse()
                .map_err(|e| csv_err(format!("line {}: {e}", lineno + 2)))?;
            let mut row = Vec::with_capacity(column_names.len());
            for p in &parts[2..] {
                row.push(
                    p.parse::<f64>()
                        .map_err(|_| csv_err(format!("line {}: bad float {p:?}", lineno + 2)))?,
                );
            }
            rows.push(row);
            labels.push(label);
            subjects.push(subject);
        }
        FeatureMatrix::new(Mat::from_rows(&rows), column_names, labels, subjects)
    }
}

// ---------------------------------------------------------------------------
// Base statistics
// ---------------------------------------------------------------------------

/// Mean and population standard deviation of each channel, in the fixed
/// order of [`BASE_STAT_NAMES`].
pub fn base_stats(window: &SensorWindow) -> [f64; 12] {
    let mut out = [0.0; 12];
    let n = WINDOW_LEN as f64;
    for ch in 0..NUM_CHANNELS {
        let mut sum = 0.0;
        for t in 0..WINDOW_LEN {
            sum += window.sample(t, ch);
        }
        let mean = sum / n;
        let mut var = 0.0;
        for t in 0..WINDOW_LEN {
            let d = window.sample(t, ch) - mean;
            var += d * d;
        }
        out[2 * ch] = mean;
        out[2 * ch + 1] = (var / n).sqrt();
    }
    out
}

// ---------------------------------------------------------------------------
// Standardizer
// ---------------------------------------------------------------------------

/// Per-column z-score statistics fit on the training subset only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Columns whose variance was zero; their std is replaced by 1.
    pub degenerate: Vec<bool>,
}

impl Standardizer {
    pub fn fit(train: &Mat) -> Result<Self, FeatureError> {
        if train.rows() == 0 {
            return Err(FeatureError::Empty("standardizer input"));
        }
        let n = train.rows() as f64;
        let means = train.column_means();
        let mut stds = vec![0.0; train.cols()];
        for row in train.iter_rows() {
            for (s, (v, m)) in stds.iter_mut().zip(row.iter().zip(&means)) {
                let d = v - m;
                *s += d * d;
            }
        }
        let mut degenerate = vec![false; train.cols()];
        for (j, s) in stds.iter_mut().enumerate() {
            *s = (*s / n).sqrt();
            if *s <= 1e-12 {
                *s = 1.0;
                degenerate[j] = true;
            }
        }
        Ok(Self { means, stds, degenerate })
    }

    pub fn apply(&self, m: &Mat) -> Mat {
        assert_eq!(m.cols(), self.means.len());
        let mut out = m.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.means[j]) / self.stds[j];
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

/// Principal components fit by eigendecomposition of the covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// `d_in x k` loadings; column `k` is one orthonormal component.
    pub components: Mat,
    pub explained_variance_ratio: Vec<f64>,
    /// Column means used for centering.
    pub means: Vec<f64>,
}

impl PcaModel {
    pub fn fit(train: &Mat, k: usize) -> Result<Self, FeatureError> {
        Self::fit_impl(train, Retain::Count(k))
    }

    /// Retains the minimal number of components whose cumulative explained
    /// variance reaches `ratio`.
    pub fn fit_by_variance(train: &Mat, ratio: f64) -> Result<Self, FeatureError> {
        Self::fit_impl(train, Retain::VarianceRatio(ratio))
    }

    fn fit_impl(train: &Mat, retain: Retain) -> Result<Self, FeatureError> {
        let n = train.rows();
        let d = train.cols();
        if n == 0 || d == 0 {
            return Err(FeatureError::Empty("pca input"));
        }
        if let Retain::Count(k) = retain {
            if k == 0 || k > d || k >= n {
                return Err(FeatureError::BadComponentCount { k, n, d });
            }
        }

        let means = train.column_means();
        // Population covariance of the centered data.
        let mut cov = Mat::zeros(d, d);
        for row in train.iter_rows() {
            let centered: Vec<f64> = row.iter().zip(&means).map(|(v, m)| v - m).collect();
            for a in 0..d {
                let ca = centered[a];
                if ca == 0.0 {
                    continue;
                }
                let dst = cov.row_mut(a);
                for (b, &cb) in centered.iter().enumerate() {
                    dst[b] += ca * cb;
                }
            }
        }
        let inv_n = 1.0 / n as f64;
        for a in 0..d {
            for b in 0..d {
                cov.set(a, b, cov.get(a, b) * inv_n);
            }
        }

        let eig = symmetric_eigen(&cov);
        let eigvals: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        let total: f64 = eigvals.iter().sum();

        let k = match retain {
            Retain::Count(k) => k,
            Retain::VarianceRatio(ratio) => {
                if total <= 0.0 {
                    return Err(FeatureError::ZeroVariance);
                }
                let mut cum = 0.0;
                let mut k = eigvals.len();
                for (i, l) in eigvals.iter().enumerate() {
                    cum += l / total;
                    if cum >= ratio - 1e-12 {
                        k = i + 1;
                        break;
                    }
                }
                k.min(n.saturating_sub(1)).max(1)
            }
        };

        let mut components = Mat::zeros(d, k);
        for c in 0..k {
            for r in 0..d {
                components.set(r, c, eig.vectors.get(r, c));
            }
        }
        // Deterministic sign: the first loading of significant magnitude is
        // forced nonnegative so repeated fits are comparable.
        for c in 0..k {
            let lead = (0..d).find(|&r| components.get(r, c).abs() > 1e-12);
            if let Some(r) = lead {
                if components.get(r, c) < 0.0 {
                    for rr in 0..d {
                        components.set(rr, c, -components.get(rr, c));
                    }
                }
            }
        }

        let explained_variance_ratio: Vec<f64> = if total > 0.0 {
            eigvals.iter().take(k).map(|l| l / total).collect()
        } else {
            vec![0.0; k]
        };

        Ok(Self { components, explained_variance_ratio, means })
    }

    pub fn k(&self) -> usize {
        self.components.cols()
    }

    /// Projects rows onto the retained components: `(x - mean) V`.
    pub fn transform(&self, m: &Mat) -> Mat {
        assert_eq!(m.cols(), self.means.len());
        let d = m.cols();
        let k = self.k();
        let mut out = Mat::zeros(m.rows(), k);
        for i in 0..m.rows() {
            let row = m.row(i);
            for t in 0..k {
                let mut acc = 0.0;
                for j in 0..d {
                    acc += (row[j] - self.means[j]) * self.components.get(j, t);
                }
                out.set(i, t, acc);
            }
        }
        out
    }

    /// The projector `P = V Vᵀ` onto the retained subspace.
    pub fn projector(&self) -> Mat {
        let d = self.means.len();
        let k = self.k();
        let mut p = Mat::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                let mut acc = 0.0;
                for t in 0..k {
                    acc += self.components.get(a, t) * self.components.get(b, t);
                }
                p.set(a, b, acc);
            }
        }
        p
    }
}

enum Retain {
    Count(usize),
    VarianceRatio(f64),
}

// ---------------------------------------------------------------------------
// Spectral features
// ---------------------------------------------------------------------------

/// Radix-2 complex FFT, in place. `re`/`im` length must be a power of two.
fn fft_inplace(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());
    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -std::f64::consts::TAU / len as f64;
        let (w_im, w_re) = ang.sin_cos();
        let mut i = 0;
        while i < n {
            let mut cur_re = 1.0;
            let mut cur_im = 0.0;
            for k in 0..len / 2 {
                let a = i + k;
                let b = i + k + len / 2;
                let t_re = re[b] * cur_re - im[b] * cur_im;
                let t_im = re[b] * cur_im + im[b] * cur_re;
                re[b] = re[a] - t_re;
                im[b] = im[a] - t_im;
                re[a] += t_re;
                im[a] += t_im;
                let next_re = cur_re * w_re - cur_im * w_im;
                cur_im = cur_re * w_im + cur_im * w_re;
                cur_re = next_re;
            }
            i += len;
        }
        len <<= 1;
    }
}

/// Real-FFT magnitudes of one channel: bins `0..=len/2`.
pub fn rfft_magnitudes(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    let mut re = signal.to_vec();
    let mut im = vec![0.0; n];
    fft_inplace(&mut re, &mut im);
    (0..=n / 2).map(|k| (re[k] * re[k] + im[k] * im[k]).sqrt()).collect()
}

/// Log-amplitude spectra of the six channels, concatenated in channel order.
///
/// Per channel the real FFT yields [`SPECTRAL_BINS`] bins; the log amplitude
/// is `ln(1 + |X_k|)` so silent bins map to exactly zero.
pub fn spectral_features(window: &SensorWindow) -> Vec<f64> {
    let mut out = Vec::with_capacity(NUM_CHANNELS * SPECTRAL_BINS);
    for ch in 0..NUM_CHANNELS {
        let channel = window.channel(ch);
        for mag in rfft_magnitudes(&channel) {
            out.push((1.0 + mag).ln());
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Semantic features
// ---------------------------------------------------------------------------

/// One LLM-designed semantic axis: a named linear combination of the 12
/// standardized base statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticFeatureSpec {
    pub name: String,
    pub weights: BTreeMap<String, f64>,
}

impl SemanticFeatureSpec {
    /// Validates weight keys against the base vocabulary and clamps
    /// coefficients into `[-2, 2]`.
    pub fn validate(&mut self) -> Result<(), FeatureError> {
        if self.name.is_empty() {
            return Err(FeatureError::BadSemanticSpec("empty feature name".into()));
        }
        for (stat, w) in self.weights.iter_mut() {
            if !BASE_STAT_NAMES.contains(&stat.as_str()) {
                return Err(FeatureError::UnknownBaseStat {
                    feature: self.name.clone(),
                    stat: stat.clone(),
                });
            }
            if *w > 2.0 {
                log::warn!("semantic feature {}: weight {w} on {stat} clamped to 2", self.name);
                *w = 2.0;
            } else if *w < -2.0 {
                log::warn!("semantic feature {}: weight {w} on {stat} clamped to -2", self.name);
                *w = -2.0;
            }
        }
        Ok(())
    }
}

/// Evaluates a semantic axis on one standardized base-statistic row.
///
/// Weights are applied in [`BASE_STAT_NAMES`] order; statistics absent from
/// the spec contribute zero.
pub fn apply_semantic(spec: &SemanticFeatureSpec, base_row: &[f64]) -> f64 {
    debug_assert_eq!(base_row.len(), 12);
    let mut acc = 0.0;
    for (j, name) in BASE_STAT_NAMES.iter().enumerate() {
        if let Some(w) = spec.weights.get(*name) {
            acc += w * base_row[j];
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// Unified feature space
// ---------------------------------------------------------------------------

/// Block toggles and sizes for [`build_feature_space`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub pca_components: usize,
    pub spectral_variance_ratio: f64,
    pub include_semantic: bool,
    pub include_pca: bool,
    pub include_spectral: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            pca_components: 6,
            spectral_variance_ratio: 0.95,
            include_semantic: true,
            include_pca: true,
            include_spectral: true,
        }
    }
}

/// The three unified matrices plus fit diagnostics.
pub struct FeatureSpace {
    pub train: FeatureMatrix,
    pub val: FeatureMatrix,
    pub test: FeatureMatrix,
    /// Components retained by the spectral PCA (0 when disabled).
    pub spectral_k: usize,
    /// Base columns whose training variance was zero.
    pub degenerate_base_columns: Vec<String>,
}

/// Composes the unified feature space for the three subsets.
///
/// All statistics (standardizers, PCA bases) are fit on `train` only.
pub fn build_feature_space(
    train: &[SensorWindow],
    val: &[SensorWindow],
    test: &[SensorWindow],
    semantic_specs: &[SemanticFeatureSpec],
    cfg: &FeatureConfig,
) -> Result<FeatureSpace, FeatureError> {
    if train.is_empty() {
        return Err(FeatureError::Empty("training windows"));
    }

    let base = |ws: &[SensorWindow]| -> Mat {
        Mat::from_rows(&ws.iter().map(|w| base_stats(w).to_vec()).collect::<Vec<_>>())
    };
    let base_train = base(train);
    let base_val = base(val);
    let base_test = base(test);

    let standardizer = Standardizer::fit(&base_train)?;
    let z_train = standardizer.apply(&base_train);
    let z_val = standardizer.apply(&base_val);
    let z_test = standardizer.apply(&base_test);

    let mut names: Vec<String> = BASE_STAT_NAMES.iter().map(|s| s.to_string()).collect();
    let mut blocks_train: Vec<Mat> = vec![z_train.clone()];
    let mut blocks_val: Vec<Mat> = vec![z_val.clone()];
    let mut blocks_test: Vec<Mat> = vec![z_test.clone()];

    if cfg.include_semantic {
        let mut specs = semantic_specs.to_vec();
        for s in &mut specs {
            s.validate()?;
        }
        let semantic = |z: &Mat| -> Mat {
            let mut out = Mat::zeros(z.rows(), specs.len());
            for i in 0..z.rows() {
                for (j, spec) in specs.iter().enumerate() {
                    out.set(i, j, apply_semantic(spec, z.row(i)));
                }
            }
            out
        };
        blocks_train.push(semantic(&z_train));
        blocks_val.push(semantic(&z_val));
        blocks_test.push(semantic(&z_test));
        names.extend(specs.iter().map(|s| s.name.clone()));
    }

    if cfg.include_pca {
        let pca = PcaModel::fit(&z_train, cfg.pca_components)?;
        blocks_train.push(pca.transform(&z_train));
        blocks_val.push(pca.transform(&z_val));
        blocks_test.push(pca.transform(&z_test));
        names.extend((1..=pca.k()).map(|i| format!("pc{i}")));
    }

    let mut spectral_k = 0;
    if cfg.include_spectral {
        let spectral = |ws: &[SensorWindow]| -> Mat {
            Mat::from_rows(&ws.iter().map(spectral_features).collect::<Vec<_>>())
        };
        let spec_train = spectral(train);
        let spec_std = Standardizer::fit(&spec_train)?;
        let zs_train = spec_std.apply(&spec_train);
        let spec_pca = PcaModel::fit_by_variance(&zs_train, cfg.spectral_variance_ratio)?;
        spectral_k = spec_pca.k();
        blocks_train.push(spec_pca.transform(&zs_train));
        blocks_val.push(spec_pca.transform(&spec_std.apply(&spectral(val))));
        blocks_test.push(spec_pca.transform(&spec_std.apply(&spectral(test))));
        names.extend((1..=spectral_k).map(|i| format!("spectral_pc{i}")));
    }

    let concat = |blocks: &[Mat], ws: &[SensorWindow]| -> Result<FeatureMatrix, FeatureError> {
        let n = ws.len();
        let d: usize = blocks.iter().map(Mat::cols).sum();
        let mut m = Mat::zeros(n, d);
        for i in 0..n {
            let dst = m.row_mut(i);
            let mut off = 0;
            for b in blocks {
                dst[off..off + b.cols()].copy_from_slice(b.row(i));
                off += b.cols();
            }
        }
        let fm = FeatureMatrix::new(
            m,
            names.clone(),
            ws.iter().map(|w| w.label).collect(),
            ws.iter().map(|w| w.subject_id).collect(),
        )?;
        fm.check_finite()?;
        Ok(fm)
    };

    let degenerate_base_columns = standardizer
        .degenerate
        .iter()
        .enumerate()
        .filter(|(_, &d)| d)
        .map(|(j, _)| BASE_STAT_NAMES[j].to_string())
        .collect();

    Ok(FeatureSpace {
        train: concat(&blocks_train, train)?,
        val: concat(&blocks_val, val)?,
        test: concat(&blocks_test, test)?,
        spectral_k,
        degenerate_base_columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::{split_windows, synthesize, DataSplit};

    fn window_from_channels(ch: [[f64; WINDOW_LEN]; NUM_CHANNELS]) -> SensorWindow {
        let mut samples = vec![0.0; WINDOW_LEN * NUM_CHANNELS];
        for t in 0..WINDOW_LEN {
            for c in 0..NUM_CHANNELS {
                samples[t * NUM_CHANNELS + c] = ch[c][t];
            }
        }
        SensorWindow::new(samples, Activity::Walking, 1)
    }

    fn zero_window() -> SensorWindow {
        SensorWindow::new(vec![0.0; WINDOW_LEN * NUM_CHANNELS], Activity::Walking, 1)
    }

    #[test]
    fn base_stats_zero_window() {
        assert_eq!(base_stats(&zero_window()), [0.0; 12]);
    }

    #[test]
    fn base_stats_constant_channel() {
        let mut ch = [[0.0; WINDOW_LEN]; NUM_CHANNELS];
        ch[0] = [1.0; WINDOW_LEN];
        let stats = base_stats(&window_from_channels(ch));
        assert_eq!(stats[0], 1.0);
        assert_eq!(stats[1], 0.0);
        assert!(stats[2..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn base_stats_alternating_channel() {
        // acc_x = +1, -1, +1, ... has mean 0 and population std 1.
        let mut ch = [[0.0; WINDOW_LEN]; NUM_CHANNELS];
        for t in 0..WINDOW_LEN {
            ch[0][t] = if t % 2 == 0 { 1.0 } else { -1.0 };
        }
        let stats = base_stats(&window_from_channels(ch));
        assert!(stats[0].abs() < 1e-15);
        assert!((stats[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn standardizer_hand_example() {
        let m = Mat::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        let s = Standardizer::fit(&m).unwrap();
        let z = s.apply(&m);
        let expect = 1.224744871391589;
        assert!((z.get(0, 0) + expect).abs() < 1e-12);
        assert!(z.get(1, 0).abs() < 1e-12);
        assert!((z.get(2, 0) - expect).abs() < 1e-12);
    }

    #[test]
    fn standardizer_flags_constant_column() {
        let m = Mat::from_rows(&[vec![5.0], vec![5.0], vec![5.0]]);
        let s = Standardizer::fit(&m).unwrap();
        assert!(s.degenerate[0]);
        let z = s.apply(&m);
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn standardizer_train_columns_have_zero_mean_unit_std() {
        let windows = synthesize(11, 8);
        let m =
            Mat::from_rows(&windows.iter().map(|w| base_stats(w).to_vec()).collect::<Vec<_>>());
        let s = Standardizer::fit(&m).unwrap();
        let z = s.apply(&m);
        for j in 0..z.cols() {
            let col: Vec<f64> = (0..z.rows()).map(|i| z.get(i, j)).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-9, "column {j} mean {mean}");
            if !s.degenerate[j] {
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
                assert!((var.sqrt() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn standardizer_rejects_empty() {
        assert!(Standardizer::fit(&Mat::zeros(0, 3)).is_err());
    }

    #[test]
    fn pca_rank_one_line() {
        let m = Mat::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]);
        let pca = PcaModel::fit(&m, 1).unwrap();
        let c = [pca.components.get(0, 0), pca.components.get(1, 0)];
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert!((c[0] - inv_sqrt2).abs() < 1e-10);
        assert!((c[1] - inv_sqrt2).abs() < 1e-10);
        assert!((pca.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pca_variance_ratio_detects_rank_two() {
        // Rank-2 data embedded in 5 dimensions.
        let mut rows = Vec::new();
        for i in 0..40 {
            let a = (i as f64 * 0.37).sin();
            let b = (i as f64 * 0.91).cos();
            rows.push(vec![a, 2.0 * b, a + b, -a, 0.5 * b]);
        }
        let pca = PcaModel::fit_by_variance(&Mat::from_rows(&rows), 0.95).unwrap();
        assert_eq!(pca.k(), 2);
    }

    #[test]
    fn pca_isotropic_ratios_near_uniform() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut gauss = || {
            let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        };
        let rows: Vec<Vec<f64>> = (0..1000).map(|_| vec![gauss(), gauss(), gauss()]).collect();
        let m = Mat::from_rows(&rows);
        let pca = PcaModel::fit(&m, 3).unwrap();
        for r in &pca.explained_variance_ratio {
            assert!((r - 1.0 / 3.0).abs() < 0.05, "ratio {r}");
        }

        // Independent oracle: closed-form eigenvalues of the 3x3 sample
        // covariance, compared against the Jacobi-based ratios.
        let means = m.column_means();
        let mut c = [[0.0f64; 3]; 3];
        for row in m.iter_rows() {
            for a in 0..3 {
                for b in 0..3 {
                    c[a][b] += (row[a] - means[a]) * (row[b] - means[b]);
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                c[a][b] /= m.rows() as f64;
            }
        }
        let eig = analytic_sym3_eigenvalues(&c);
        let total: f64 = eig.iter().sum();
        for (i, l) in eig.iter().enumerate() {
            assert!(
                (pca.explained_variance_ratio[i] - l / total).abs() < 1e-9,
                "component {i}"
            );
        }
    }

    /// Closed-form eigenvalues of a symmetric 3x3 matrix (descending).
    fn analytic_sym3_eigenvalues(a: &[[f64; 3]; 3]) -> [f64; 3] {
        let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
        let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let mut b = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i][j] = (a[i][j] - if i == j { q } else { 0.0 }) / p;
            }
        }
        let det_b = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
            - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
            + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
        let r = (det_b / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let e2 = 3.0 * q - e1 - e3;
        [e1, e2, e3]
    }

    #[test]
    fn pca_rejects_bad_k() {
        let m = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        assert!(PcaModel::fit(&m, 3).is_err()); // k > d
        let tall = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(PcaModel::fit(&tall, 2).is_err()); // k >= n
    }

    #[test]
    fn pca_projector_is_idempotent() {
        let windows = synthesize(3, 6);
        let m =
            Mat::from_rows(&windows.iter().map(|w| base_stats(w).to_vec()).collect::<Vec<_>>());
        let z = Standardizer::fit(&m).unwrap().apply(&m);
        let pca = PcaModel::fit(&z, 4).unwrap();
        let p = pca.projector();
        let pp = p.matmul(&p);
        for i in 0..p.rows() {
            for j in 0..p.cols() {
                assert!((pp.get(i, j) - p.get(i, j)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn spectral_constant_channel_is_dc_only() {
        let c = 0.75;
        let mut ch = [[0.0; WINDOW_LEN]; NUM_CHANNELS];
        ch[0] = [c; WINDOW_LEN];
        let f = spectral_features(&window_from_channels(ch));
        let expect_dc = (1.0 + 128.0 * c).ln();
        assert!((f[0] - expect_dc).abs() < 1e-9);
        for k in 1..SPECTRAL_BINS {
            assert!(f[k].abs() < 1e-9, "bin {k} = {}", f[k]);
        }
    }

    #[test]
    fn spectral_pure_cosine_hits_single_bin() {
        let mut ch = [[0.0; WINDOW_LEN]; NUM_CHANNELS];
        for t in 0..WINDOW_LEN {
            ch[0][t] = (std::f64::consts::TAU * 8.0 * t as f64 / WINDOW_LEN as f64).cos();
        }
        let w = window_from_channels(ch);
        let mags = rfft_magnitudes(&w.channel(0));
        assert!((mags[8] - 64.0).abs() < 1e-9);
        for (k, m) in mags.iter().enumerate() {
            if k != 8 {
                assert!(*m < 1e-9, "bin {k} = {m}");
            }
        }

        // Independent direct DFT summation oracle across all bins.
        let sig = w.channel(0);
        for k in 0..SPECTRAL_BINS {
            let mut re = 0.0;
            let mut im = 0.0;
            for (t, &x) in sig.iter().enumerate() {
                let ang = -std::f64::consts::TAU * k as f64 * t as f64 / WINDOW_LEN as f64;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            let mag = (re * re + im * im).sqrt();
            assert!((mags[k] - mag).abs() < 1e-8, "bin {k}");
        }
    }

    #[test]
    fn spectral_zero_window_is_zero() {
        let f = spectral_features(&zero_window());
        assert_eq!(f.len(), NUM_CHANNELS * SPECTRAL_BINS);
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parseval_holds_on_random_windows() {
        let windows = synthesize(9, 2);
        for w in &windows {
            for ch in 0..NUM_CHANNELS {
                let sig = w.channel(ch);
                let energy: f64 = sig.iter().map(|v| v * v).sum();
                let mags = rfft_magnitudes(&sig);
                let spectral = (mags[0].powi(2)
                    + 2.0 * mags[1..64].iter().map(|m| m * m).sum::<f64>()
                    + mags[64].powi(2))
                    / WINDOW_LEN as f64;
                let rel = (energy - spectral).abs() / energy.max(1e-12);
                assert!(rel < 1e-6, "channel {ch}: rel {rel}");
            }
        }
    }

    #[test]
    fn semantic_verticality_reference_example() {
        let mut spec = SemanticFeatureSpec {
            name: "verticality".into(),
            weights: [("acc_z_mean".to_string(), 0.8), ("acc_z_std".to_string(), 0.6)]
                .into_iter()
                .collect(),
        };
        spec.validate().unwrap();
        let mut row = [0.0; 12];
        row[4] = 0.45; // acc_z_mean
        row[5] = 0.30; // acc_z_std
        assert_eq!(apply_semantic(&spec, &row), 0.54);
    }

    #[test]
    fn semantic_empty_weights_and_linearity() {
        let spec = SemanticFeatureSpec { name: "nil".into(), weights: BTreeMap::new() };
        assert_eq!(apply_semantic(&spec, &[1.0; 12]), 0.0);

        let spec = SemanticFeatureSpec {
            name: "activity_level".into(),
            weights: [
                ("acc_x_std".to_string(), 1.0),
                ("acc_y_std".to_string(), 1.0),
                ("acc_z_std".to_string(), 1.0),
            ]
            .into_iter()
            .collect(),
        };
        let mut row = [0.0; 12];
        row[1] = 1.0;
        row[3] = 2.0;
        row[5] = 3.0;
        assert_eq!(apply_semantic(&spec, &row), 6.0);

        // Exact linearity: f(a·u + b·v) = a·f(u) + b·f(v).
        let u: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let v: Vec<f64> = (0..12).map(|i| (i as f64 * 1.3).cos()).collect();
        let (a, b) = (0.5, -1.25);
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let lhs = apply_semantic(&spec, &mix);
        let rhs = a * apply_semantic(&spec, &u) + b * apply_semantic(&spec, &v);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn semantic_rejects_unknown_stat() {
        let mut spec = SemanticFeatureSpec {
            name: "bogus".into(),
            weights: [("acc_w_mean".to_string(), 1.0)].into_iter().collect(),
        };
        assert!(matches!(spec.validate(), Err(FeatureError::UnknownBaseStat { .. })));
    }

    fn fixture_specs() -> Vec<SemanticFeatureSpec> {
        crate::knowledge::fixture_semantic_specs().unwrap()
    }

    #[test]
    fn feature_space_shapes_and_consistency() {
        let windows = synthesize(42, 12);
        let (train, val, test) = split_windows(windows, &DataSplit::synthetic_default()).unwrap();
        let specs = fixture_specs();
        let fs =
            build_feature_space(&train, &val, &test, &specs, &FeatureConfig::default()).unwrap();
        assert_eq!(fs.train.d(), 12 + 6 + 6 + fs.spectral_k);
        assert!(fs.spectral_k >= 1);
        assert_eq!(fs.train.column_names(), fs.val.column_names());
        assert_eq!(fs.val.column_names(), fs.test.column_names());

        // Dropping the semantic block removes exactly six columns.
        let cfg = FeatureConfig { include_semantic: false, ..FeatureConfig::default() };
        let fs2 = build_feature_space(&train, &val, &test, &specs, &cfg).unwrap();
        assert_eq!(fs.train.d() - fs2.train.d(), 6);
    }

    #[test]
    fn feature_space_is_invariant_to_train_row_order() {
        let windows = synthesize(8, 10);
        let (train, val, test) = split_windows(windows, &DataSplit::synthetic_default()).unwrap();
        let specs = fixture_specs();
        let cfg = FeatureConfig::default();
        let fs1 = build_feature_space(&train, &val, &test, &specs, &cfg).unwrap();

        let mut permuted = train.clone();
        permuted.reverse();
        let fs2 = build_feature_space(&permuted, &val, &test, &specs, &cfg).unwrap();

        // Fitted transforms ignore row order, so val/test features match.
        for i in 0..fs1.val.n() {
            for (a, b) in fs1.val.row(i).iter().zip(fs2.val.row(i)) {
                assert!((a - b).abs() < 1e-8);
            }
        }

        // Same standardizer, and the same PCA subspace: compare the
        // projector matrices P = V Vᵀ directly.
        let stats = |ws: &[SensorWindow]| {
            Mat::from_rows(&ws.iter().map(|w| base_stats(w).to_vec()).collect::<Vec<_>>())
        };
        let s1 = Standardizer::fit(&stats(&train)).unwrap();
        let s2 = Standardizer::fit(&stats(&permuted)).unwrap();
        for (a, b) in s1.means.iter().zip(&s2.means) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in s1.stds.iter().zip(&s2.stds) {
            assert!((a - b).abs() < 1e-12);
        }
        let p1 = PcaModel::fit(&s1.apply(&stats(&train)), 6).unwrap().projector();
        let p2 = PcaModel::fit(&s2.apply(&stats(&permuted)), 6).unwrap().projector();
        for i in 0..p1.rows() {
            for j in 0..p1.cols() {
                assert!((p1.get(i, j) - p2.get(i, j)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let windows = synthesize(4, 4);
        let (train, val, test) = split_windows(windows, &DataSplit::synthetic_default()).unwrap();
        let fs =
            build_feature_space(&train, &val, &test, &fixture_specs(), &FeatureConfig::default())
                .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        fs.train.export_csv(&path).unwrap();
        let back = FeatureMatrix::import_csv(&path).unwrap();
        assert_eq!(back, fs.train);
    }
}
