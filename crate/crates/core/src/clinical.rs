//! Knowledge extraction from clinical data: tumor-to-liver volume ratio
//! (TLVR), ordinary-least-squares fitting on standardized risk factors, and
//! cross-validated top-n feature selection.
//!
//! The fitted model turns a patient's risk-factor vector into a predicted
//! TLVR in `[0, 1]`, which downstream training consumes as a weak label.
//! Missing values are mean-imputed with training-split statistics; imputation
//! and standardization are always computed per training fold, never on held
//! out rows.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::volio::{ClinicalRecord, Mask, TissueClass, CLINICAL_FEATURES};

#[derive(Debug, Error)]
pub enum ClinicalError {
    #[error("masks are not aligned (dims/spacing/orientation differ)")]
    ShapeMismatch,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("{records} records but {labels} labels")]
    LabelMismatch { records: usize, labels: usize },
}

/// TLVR pair for one patient: ground truth from masks and the model
/// prediction used as the weak label.
#[derive(Debug, Clone, PartialEq)]
pub struct TlvrLabel {
    pub patient_id: String,
    pub r_true: f64,
    pub r_hat: f64,
}

/// Tumor-to-liver volume ratio:
/// `|tumor voxels| / (|liver voxels| + |tumor voxels|)`, 0 when both masks
/// are empty. Counts the `Tumor` class of `tumor` and the `Liver` class of
/// `liver`; the two counts are independent.
pub fn compute_tlvr(liver: &Mask, tumor: &Mask) -> Result<f64, ClinicalError> {
    if !liver.aligned_with(tumor) {
        return Err(ClinicalError::ShapeMismatch);
    }
    let t = tumor.count_class(TissueClass::Tumor) as f64;
    let l = liver.count_class(TissueClass::Liver) as f64;
    if t + l == 0.0 {
        return Ok(0.0);
    }
    Ok(t / (l + t))
}

/// Named design matrix; rows are samples, columns the named features.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub feature_names: Vec<String>,
    /// Row-major values; `values[row][col]`. Missing cells hold any value
    /// and set the corresponding flag.
    pub values: Vec<Vec<f64>>,
    pub missing: Vec<Vec<bool>>,
}

impl FeatureTable {
    pub fn new(feature_names: Vec<String>, values: Vec<Vec<f64>>, missing: Vec<Vec<bool>>) -> Self {
        assert_eq!(values.len(), missing.len());
        for (v, m) in values.iter().zip(&missing) {
            assert_eq!(v.len(), feature_names.len());
            assert_eq!(m.len(), feature_names.len());
        }
        FeatureTable {
            feature_names,
            values,
            missing,
        }
    }

    /// Table over the fixed clinical schema.
    pub fn from_records(records: &[ClinicalRecord]) -> Self {
        FeatureTable {
            feature_names: CLINICAL_FEATURES.iter().map(|s| s.to_string()).collect(),
            values: records.iter().map(|r| r.values.to_vec()).collect(),
            missing: records.iter().map(|r| r.missing.to_vec()).collect(),
        }
    }

    pub fn num_rows(&self) -> usize {
        self.values.len()
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    fn subset(&self, cols: &[usize]) -> FeatureTable {
        FeatureTable {
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            values: self
                .values
                .iter()
                .map(|row| cols.iter().map(|&c| row[c]).collect())
                .collect(),
            missing: self
                .missing
                .iter()
                .map(|row| cols.iter().map(|&c| row[c]).collect())
                .collect(),
        }
    }

    fn rows(&self, idx: &[usize]) -> FeatureTable {
        FeatureTable {
            feature_names: self.feature_names.clone(),
            values: idx.iter().map(|&i| self.values[i].clone()).collect(),
            missing: idx.iter().map(|&i| self.missing[i].clone()).collect(),
        }
    }
}

/// Linear TLVR model on standardized features.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LinearModel {
    pub feature_names: Vec<String>,
    /// Coefficients in standardized units, aligned with `feature_names`.
    pub coefficients: Vec<f64>,
    /// Mean of the training labels.
    pub intercept: f64,
    /// Imputation value and standardization mean per feature (training split).
    pub means: Vec<f64>,
    /// Standardization scale per feature; 1.0 for degenerate features.
    pub stds: Vec<f64>,
    /// Features that were constant after imputation and got coefficient 0.
    pub dropped: Vec<String>,
}

impl LinearModel {
    /// Prediction from a raw feature row (same order as `feature_names`),
    /// clamped to `[0, 1]`.
    pub fn predict_row(&self, values: &[f64], missing: &[bool]) -> f64 {
        let mut acc = self.intercept;
        for j in 0..self.feature_names.len() {
            let x = if missing[j] { self.means[j] } else { values[j] };
            acc += self.coefficients[j] * (x - self.means[j]) / self.stds[j];
        }
        acc.clamp(0.0, 1.0)
    }

    /// Coefficients mapped back to original feature units.
    pub fn original_coefficients(&self) -> Vec<(String, f64)> {
        self.feature_names
            .iter()
            .zip(self.coefficients.iter().zip(&self.stds))
            .map(|(name, (c, s))| (name.clone(), c / s))
            .collect()
    }

    /// CSV table of standardized coefficients (feature, coefficient).
    pub fn coefficients_csv(&self) -> String {
        let mut out = String::from("feature,coefficient\n");
        for (name, c) in self.feature_names.iter().zip(&self.coefficients) {
            out.push_str(&format!("{name},{c:.9}\n"));
        }
        out
    }
}

/// Ordinary least squares with an intercept on standardized features.
///
/// Solved by normal equations with ridge jitter 1e-8 on the Gram diagonal.
/// Constant features are dropped (coefficient 0) rather than failing.
pub fn fit_linear_table(table: &FeatureTable, labels: &[f64]) -> Result<LinearModel, ClinicalError> {
    let n = table.num_rows();
    if n != labels.len() {
        return Err(ClinicalError::LabelMismatch {
            records: n,
            labels: labels.len(),
        });
    }
    if n < 2 {
        return Err(ClinicalError::TooFewSamples { needed: 2, got: n });
    }
    let k = table.num_features();

    let mut means = vec![0.0; k];
    let mut stds = vec![1.0; k];
    let mut active = vec![true; k];
    let mut dropped = Vec::new();
    // Imputed, standardized columns.
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let observed: Vec<f64> = (0..n)
            .filter(|&i| !table.missing[i][j])
            .map(|i| table.values[i][j])
            .collect();
        let impute = if observed.is_empty() {
            0.0
        } else {
            observed.iter().sum::<f64>() / observed.len() as f64
        };
        let col: Vec<f64> = (0..n)
            .map(|i| {
                if table.missing[i][j] {
                    impute
                } else {
                    table.values[i][j]
                }
            })
            .collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        means[j] = mean;
        if std < 1e-12 {
            active[j] = false;
            dropped.push(table.feature_names[j].clone());
            columns.push(vec![0.0; n]);
        } else {
            stds[j] = std;
            columns.push(col.iter().map(|v| (v - mean) / std).collect());
        }
    }

    let y_mean = labels.iter().sum::<f64>() / n as f64;
    let resid: Vec<f64> = labels.iter().map(|y| y - y_mean).collect();

    let act: Vec<usize> = (0..k).filter(|&j| active[j]).collect();
    let m = act.len();
    let mut coefficients = vec![0.0; k];
    if m > 0 {
        let mut gram = vec![vec![0.0; m]; m];
        let mut rhs = vec![0.0; m];
        for (a, &ja) in act.iter().enumerate() {
            for (b, &jb) in act.iter().enumerate().take(a + 1) {
                let dot: f64 = columns[ja].iter().zip(&columns[jb]).map(|(x, y)| x * y).sum();
                gram[a][b] = dot;
                gram[b][a] = dot;
            }
            gram[a][a] += 1e-8;
            rhs[a] = columns[ja].iter().zip(&resid).map(|(x, r)| x * r).sum();
        }
        let beta = solve_spd(gram, rhs).expect("ridge-jittered Gram is positive definite");
        for (a, &j) in act.iter().enumerate() {
            coefficients[j] = beta[a];
        }
    }

    Ok(LinearModel {
        feature_names: table.feature_names.clone(),
        coefficients,
        intercept: y_mean,
        means,
        stds,
        dropped,
    })
}

/// [`fit_linear_table`] over the fixed clinical record schema.
pub fn fit_linear(records: &[ClinicalRecord], labels: &[f64]) -> Result<LinearModel, ClinicalError> {
    fit_linear_table(&FeatureTable::from_records(records), labels)
}

/// Clinical TLVR prediction for one record, clamped to `[0, 1]`.
pub fn predict_tlvr(model: &LinearModel, record: &ClinicalRecord) -> f64 {
    let mut values = Vec::with_capacity(model.feature_names.len());
    let mut missing = Vec::with_capacity(model.feature_names.len());
    for name in &model.feature_names {
        match CLINICAL_FEATURES.iter().position(|f| f == name) {
            Some(slot) => {
                values.push(record.values[slot]);
                missing.push(record.missing[slot]);
            }
            None => {
                values.push(0.0);
                missing.push(true);
            }
        }
    }
    model.predict_row(&values, &missing)
}

/// Pearson correlation; 0 when either side has (near-)zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va < 1e-24 || vb < 1e-24 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// Deterministic shuffled round-robin fold assignment.
pub fn fold_assignments(n: usize, k_folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut folds = vec![0usize; n];
    for (pos, &row) in order.iter().enumerate() {
        folds[row] = pos % k_folds;
    }
    folds
}

/// Out-of-fold predictions for a feature subset. Each fold's model is fit
/// (imputation, standardization, coefficients) on that fold's training rows
/// only.
pub fn cross_validated_predictions(
    table: &FeatureTable,
    labels: &[f64],
    subset: &[usize],
    k_folds: usize,
    seed: u64,
) -> Result<Vec<f64>, ClinicalError> {
    let n = table.num_rows();
    let folds = fold_assignments(n, k_folds, seed);
    let sub = table.subset(subset);
    let mut preds = vec![0.0; n];
    for fold in 0..k_folds {
        let train_idx: Vec<usize> = (0..n).filter(|&i| folds[i] != fold).collect();
        let test_idx: Vec<usize> = (0..n).filter(|&i| folds[i] == fold).collect();
        if test_idx.is_empty() {
            continue;
        }
        let train_labels: Vec<f64> = train_idx.iter().map(|&i| labels[i]).collect();
        let model = fit_linear_table(&sub.rows(&train_idx), &train_labels)?;
        for &i in &test_idx {
            preds[i] = model.predict_row(&sub.values[i], &sub.missing[i]);
        }
    }
    Ok(preds)
}

/// Outcome of cross-validated top-n selection.
#[derive(Debug, Clone)]
pub struct SelectionReport {
    /// (n, out-of-fold Pearson) for every candidate n, ascending.
    pub curve: Vec<(usize, f64)>,
    pub chosen_n: usize,
    /// All feature names ranked by |standardized coefficient|, descending.
    pub ranking: Vec<String>,
    /// Set when even the best candidate barely correlates (|r| < 0.3).
    pub non_informative: bool,
}

impl SelectionReport {
    /// CSV of the per-n cross-validation curve.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("n,cv_pearson\n");
        for (n, p) in &self.curve {
            out.push_str(&format!("{n},{p:.9}\n"));
        }
        out
    }
}

/// Scores closer than this count as a tie, resolved toward smaller n.
const SELECTION_TIE_EPS: f64 = 1e-9;

/// Ranks features by |standardized coefficient| of a full fit, then picks
/// the top-n maximizing k-fold out-of-fold Pearson and refits on all rows.
/// Candidates within 1e-9 of the best count as ties and the smallest n wins.
pub fn select_features_table(
    table: &FeatureTable,
    labels: &[f64],
    k_folds: usize,
    n_grid: &[usize],
    seed: u64,
) -> Result<(LinearModel, SelectionReport), ClinicalError> {
    let n = table.num_rows();
    if n < k_folds {
        return Err(ClinicalError::TooFewSamples {
            needed: k_folds,
            got: n,
        });
    }
    let full = fit_linear_table(table, labels)?;
    let mut order: Vec<usize> = (0..table.num_features()).collect();
    order.sort_by(|&a, &b| {
        full.coefficients[b]
            .abs()
            .partial_cmp(&full.coefficients[a].abs())
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut curve = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for &cand in n_grid {
        let cand = cand.min(order.len()).max(1);
        let subset = &order[..cand];
        let preds = cross_validated_predictions(table, labels, subset, k_folds, seed)?;
        let r = pearson(labels, &preds);
        curve.push((cand, r));
        if best.map_or(true, |(_, br)| r > br + SELECTION_TIE_EPS) {
            best = Some((cand, r));
        }
    }
    let (chosen_n, best_r) = best.expect("n_grid must be nonempty");
    let model = fit_linear_table(&table.subset(&order[..chosen_n]), labels)?;
    let report = SelectionReport {
        curve,
        chosen_n,
        ranking: order
            .iter()
            .map(|&j| table.feature_names[j].clone())
            .collect(),
        non_informative: best_r.abs() < 0.3,
    };
    Ok((model, report))
}

/// [`select_features_table`] over the fixed clinical record schema.
pub fn select_features(
    records: &[ClinicalRecord],
    labels: &[f64],
    k_folds: usize,
    n_grid: &[usize],
    seed: u64,
) -> Result<(LinearModel, SelectionReport), ClinicalError> {
    select_features_table(&FeatureTable::from_records(records), labels, k_folds, n_grid, seed)
}

/// Cholesky solve for a symmetric positive-definite system.
fn solve_spd(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                a[i][i] = s.sqrt();
            } else {
                a[i][j] = s / a[j][j];
            }
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i][k] * b[k];
        }
        b[i] = s / a[i][i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k][i] * b[k];
        }
        b[i] = s / a[i][i];
    }
    Some(b)
}
