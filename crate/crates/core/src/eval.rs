//! Classification and regression metrics, the four-way model comparison and
//! the first-principal-component projection used for plotting.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Subset};
use crate::hurdle::{
    regressor_population, train_classifier, train_regressor, AmountRegressor, CombinationMode, GrantClassifier,
    HurdleConfig, HurdleError, PredictionBreakdown, RegressorKind, GRANT_THRESHOLD,
};
use crate::linalg::{symmetric_eigen, Matrix};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("{left} values against {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("AUC is undefined when every label is in one class")]
    AucUndefined,
    #[error("{0} observations; at least 2 are required")]
    TooFewObservations(usize),
    #[error("PCA needs at least 2 columns and 3 rows, got {cols} x {rows}")]
    PcaShape { rows: usize, cols: usize },
    #[error("every column has zero variance")]
    NoVariance,
    #[error("non-finite value in the input")]
    NonFinite,
}

fn same_len(a: usize, b: usize) -> Result<(), EvalError> {
    if a == b {
        Ok(())
    } else {
        Err(EvalError::LengthMismatch { left: a, right: b })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub n: usize,
    pub accuracy: f64,
    /// `None` when the labels hold a single class.
    pub auc: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Confusion counts at `threshold` (scores at or above it are positive) and
/// the rank AUC.
pub fn classification_report(labels: &[bool], scores: &[f64], threshold: f64) -> Result<ClassificationReport, EvalError> {
    same_len(labels.len(), scores.len())?;
    if labels.is_empty() {
        return Err(EvalError::TooFewObservations(0));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&y, &s) in labels.iter().zip(scores) {
        match (y, s >= threshold) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
            (true, false) => fn_ += 1,
        }
    }
    let auc = match auc(labels, scores) {
        Ok(a) => Some(a),
        Err(EvalError::AucUndefined) => None,
        Err(e) => return Err(e),
    };
    Ok(ClassificationReport {
        n: labels.len(),
        accuracy: (tp + tn) as f64 / labels.len() as f64,
        auc,
        tp,
        fp,
        tn,
        fn_,
    })
}

/// Area under the ROC curve as the Mann–Whitney statistic: the probability
/// that a random positive outscores a random negative, ties counting one
/// half. Equals the trapezoidal ROC area over all distinct thresholds.
pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64, EvalError> {
    same_len(labels.len(), scores.len())?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::AucUndefined);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum keeps midranks integral.
    let mut rank_sum_x2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank_x2 = (i + 1 + j + 1) as u128;
        let positives = order[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        rank_sum_x2 += midrank_x2 * positives;
        i = j + 1;
    }
    let (n_pos, n_neg) = (n_pos as u128, n_neg as u128);
    let u_x2 = rank_sum_x2 - n_pos * (n_pos + 1);
    Ok(u_x2 as f64 / (2 * n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub n: usize,
    pub mean_ae: f64,
    pub median_ae: f64,
    /// Population standard deviation of the absolute errors.
    pub sd_ae: f64,
    pub r_squared: f64,
    pub mean_predicted: f64,
    pub mean_actual: f64,
}

/// Statistics of `|actual − predicted|`, with `R² = 1 − SS_res / SS_tot`
/// (zero when the actual values are constant). Sums run over sorted values so
/// the report does not depend on case order.
pub fn regression_report(actual: &[f64], predicted: &[f64]) -> Result<RegressionReport, EvalError> {
    same_len(actual.len(), predicted.len())?;
    let n = actual.len();
    if n < 2 {
        return Err(EvalError::TooFewObservations(n));
    }
    if actual.iter().chain(predicted).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let sorted_sum = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v.iter().sum::<f64>()
    };
    let nf = n as f64;
    let mut errors: Vec<f64> = actual.iter().zip(predicted).map(|(a, p)| (a - p).abs()).collect();
    errors.sort_by(f64::total_cmp);
    let mean_ae = errors.iter().sum::<f64>() / nf;
    let median_ae = if n % 2 == 1 {
        errors[n / 2]
    } else {
        0.5 * (errors[n / 2 - 1] + errors[n / 2])
    };
    let sd_ae = (sorted_sum(errors.iter().map(|e| (e - mean_ae).powi(2)).collect()) / nf).sqrt();
    let mean_actual = sorted_sum(actual.to_vec()) / nf;
    let mean_predicted = sorted_sum(predicted.to_vec()) / nf;
    let ss_res = sorted_sum(errors.iter().map(|e| e * e).collect());
    let ss_tot = sorted_sum(actual.iter().map(|a| (a - mean_actual).powi(2)).collect());
    let r_squared = if ss_tot == 0.0 { 0.0 } else { 1.0 - ss_res / ss_tot };
    Ok(RegressionReport {
        n,
        mean_ae,
        median_ae,
        sd_ae,
        r_squared,
        mean_predicted,
        mean_actual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Ols,
    Quantile,
    RfOls,
    RfQuantile,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Ols, Variant::Quantile, Variant::RfOls, Variant::RfQuantile];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Ols => "OLS Reg.",
            Variant::Quantile => "Quantile Reg.",
            Variant::RfOls => "RF×OLS Reg.",
            Variant::RfQuantile => "RF×Quantile Reg.",
        }
    }

    fn kind(self) -> RegressorKind {
        match self {
            Variant::Ols | Variant::RfOls => RegressorKind::Ols,
            Variant::Quantile | Variant::RfQuantile => RegressorKind::Quantile,
        }
    }

    fn is_hurdle(self) -> bool {
        matches!(self, Variant::RfOls | Variant::RfQuantile)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub variant: Variant,
    /// `None` when the variant could not be fitted or evaluated.
    pub report: Option<RegressionReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub subset: Subset,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn row(&self, variant: Variant) -> Option<&RegressionReport> {
        self.rows.iter().find(|r| r.variant == variant)?.report.as_ref()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n_train: usize,
    pub n_test: usize,
    pub combination_mode: CombinationMode,
    pub classification: ClassificationReport,
    /// Every test case, then the agreed and contested subsamples.
    pub tables: Vec<ComparisonTable>,
}

impl ComparisonReport {
    pub fn table(&self, subset: Subset) -> Option<&ComparisonTable> {
        self.tables.iter().find(|t| t.subset == subset)
    }
}

/// Fits the classifier and both regressions on `train` and scores the four
/// variants on `test`. `train` and `test` must be disjoint and already exclude
/// monthly-payment cases.
pub fn compare_models(train: &Dataset, test: &Dataset, config: &HurdleConfig) -> Result<ComparisonReport, HurdleError> {
    let classifier = train_classifier(train, config)?;
    compare_with_classifier(&classifier, train, test, config)
}

/// As [`compare_models`] with an already fitted classifier.
///
/// The plain rows apply the regression trained on granted cases to every
/// test case, zero outcomes included; the hurdle rows combine it with the
/// classifier. A regression that fails to fit leaves its two rows empty.
pub fn compare_with_classifier(
    classifier: &GrantClassifier,
    train: &Dataset,
    test: &Dataset,
    config: &HurdleConfig,
) -> Result<ComparisonReport, HurdleError> {
    let probabilities: Vec<f64> = test
        .records
        .iter()
        .map(|r| classifier.probability(&r.values))
        .collect::<Result<_, _>>()?;
    let labels = test.grant_labels();
    let classification = classification_report(&labels, &probabilities, GRANT_THRESHOLD)?;

    let regressors: Vec<(RegressorKind, Result<AmountRegressor, String>)> = [RegressorKind::Ols, RegressorKind::Quantile]
        .into_iter()
        .map(|kind| {
            let mut c = config.clone();
            c.regressor.kind = kind;
            (kind, train_regressor(train, &c).map(|f| f.regressor).map_err(|e| e.to_string()))
        })
        .collect();

    let mut predictions: Vec<(Variant, Result<Vec<f64>, String>)> = Vec::new();
    for variant in Variant::ALL {
        let (_, fit) = regressors.iter().find(|(k, _)| *k == variant.kind()).expect("both kinds fitted");
        let preds = match fit {
            Err(e) => Err(e.clone()),
            Ok(reg) => test
                .records
                .iter()
                .zip(&probabilities)
                .map(|(r, &p)| {
                    let raw = reg.raw(&r.values).map_err(|e| e.to_string())?;
                    let b = PredictionBreakdown::combine(p, raw, config.combination_mode);
                    Ok(if variant.is_hurdle() { b.amount_adjusted } else { b.amount_raw })
                })
                .collect(),
        };
        predictions.push((variant, preds));
    }

    let actual = test.amounts();
    let tables = [Subset::All, Subset::Agreed, Subset::Contested]
        .into_iter()
        .map(|subset| {
            let keep: Vec<usize> = (0..test.len()).filter(|&i| subset.admits(&test.records[i])).collect();
            let a: Vec<f64> = keep.iter().map(|&i| actual[i]).collect();
            let rows = predictions
                .iter()
                .map(|(variant, preds)| {
                    let result = preds
                        .as_ref()
                        .map_err(Clone::clone)
                        .and_then(|p| {
                            let p: Vec<f64> = keep.iter().map(|&i| p[i]).collect();
                            regression_report(&a, &p).map_err(|e| e.to_string())
                        });
                    match result {
                        Ok(report) => ComparisonRow {
                            variant: *variant,
                            report: Some(report),
                            error: None,
                        },
                        Err(e) => ComparisonRow {
                            variant: *variant,
                            report: None,
                            error: Some(e),
                        },
                    }
                })
                .collect();
            ComparisonTable { subset, rows }
        })
        .collect();

    Ok(ComparisonReport {
        n_train: train.len(),
        n_test: test.len(),
        combination_mode: config.combination_mode,
        classification,
        tables,
    })
}

/// Aligned text, amounts in thousands of euros with two decimals.
pub fn render_comparison(report: &ComparisonReport) -> String {
    let mut out = String::new();
    let c = &report.classification;
    let _ = writeln!(out, "Grant classifier on {} test cases", c.n);
    let _ = writeln!(out, "  accuracy  {:.4}", c.accuracy);
    match c.auc {
        Some(a) => {
            let _ = writeln!(out, "  AUC       {a:.4}");
        }
        None => {
            let _ = writeln!(out, "  AUC       undefined (single class)");
        }
    }
    let _ = writeln!(out, "  confusion tp={} fp={} tn={} fn={}", c.tp, c.fp, c.tn, c.fn_);
    let _ = writeln!(
        out,
        "\nTrained on {} cases, combination mode {}",
        report.n_train, report.combination_mode
    );
    for table in &report.tables {
        let _ = writeln!(out, "\nAbsolute errors (thousands of euros), subset: {}", table.subset);
        let _ = writeln!(
            out,
            "{:<18}{:>10}{:>10}{:>10}{:>8}{:>7}",
            "Model", "Mean", "Median", "σ", "R²", "n"
        );
        for row in &table.rows {
            match &row.report {
                Some(r) => {
                    let _ = writeln!(
                        out,
                        "{:<18}{:>10.2}{:>10.2}{:>10.2}{:>8.2}{:>7}",
                        row.variant.label(),
                        r.mean_ae / 1000.0,
                        r.median_ae / 1000.0,
                        r.sd_ae / 1000.0,
                        r.r_squared,
                        r.n
                    );
                }
                None => {
                    let _ = writeln!(
                        out,
                        "{:<18}  missing: {}",
                        row.variant.label(),
                        row.error.as_deref().unwrap_or("unknown error")
                    );
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaPoint {
    pub pc1: f64,
    pub predicted: f64,
    pub actual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    /// Columns that entered the analysis.
    pub columns: Vec<String>,
    /// Zero-variance columns left out.
    pub dropped: Vec<String>,
    /// First eigenvector of the correlation matrix, unit norm, largest
    /// magnitude entry positive.
    pub loadings: Vec<f64>,
    pub explained_variance_ratio: f64,
    /// Every component's share, descending.
    pub explained_variance_ratios: Vec<f64>,
    pub points: Vec<PcaPoint>,
}

/// Projects standardized rows onto the first principal component.
pub fn pca_projection(
    matrix: &Matrix,
    column_names: &[String],
    predictions: &[f64],
    actuals: &[f64],
) -> Result<PcaProjection, EvalError> {
    let (n, p) = (matrix.nrows(), matrix.ncols());
    if p < 2 || n < 3 {
        return Err(EvalError::PcaShape { rows: n, cols: p });
    }
    same_len(n, predictions.len())?;
    same_len(n, actuals.len())?;
    same_len(p, column_names.len())?;
    if matrix.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let nf = n as f64;
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut stats = Vec::new();
    for j in 0..p {
        let col = matrix.column(j);
        let mean = col.iter().sum::<f64>() / nf;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf).sqrt();
        if sd > 0.0 {
            kept.push(j);
            stats.push((mean, sd));
        } else {
            tracing::warn!(column = %column_names[j], "pca: dropping zero-variance column");
            dropped.push(column_names[j].clone());
        }
    }
    if kept.is_empty() {
        return Err(EvalError::NoVariance);
    }
    let k = kept.len();
    let mut z = Matrix::zeros(n, k);
    for i in 0..n {
        for (c, &j) in kept.iter().enumerate() {
            let (mean, sd) = stats[c];
            z.set(i, c, (matrix.get(i, j) - mean) / sd);
        }
    }
    let mut corr = Matrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let s: f64 = (0..n).map(|i| z.get(i, a) * z.get(i, b)).sum::<f64>() / nf;
            corr.set(a, b, s);
            corr.set(b, a, s);
        }
    }
    let (values, vectors) = symmetric_eigen(&corr);
    let values: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = values.iter().sum();
    let mut loadings = vectors.column(0);
    let lead = loadings
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .expect("at least one column");
    if loadings[lead] < 0.0 {
        loadings.iter_mut().for_each(|v| *v = -*v);
    }
    let points = (0..n)
        .map(|i| PcaPoint {
            pc1: z.row(i).iter().zip(&loadings).map(|(a, b)| a * b).sum(),
            predicted: predictions[i],
            actual: actuals[i],
        })
        .collect();
    Ok(PcaProjection {
        columns: kept.iter().map(|&j| column_names[j].clone()).collect(),
        dropped,
        loadings,
        explained_variance_ratio: values[0] / total,
        explained_variance_ratios: values.iter().map(|v| v / total).collect(),
        points,
    })
}

/// `pc1,predicted,actual` with a header row.
pub fn pca_csv(projection: &PcaProjection) -> String {
    let mut out = String::from("pc1,predicted,actual\n");
    for p in &projection.points {
        let _ = writeln!(out, "{},{},{}", p.pc1, p.predicted, p.actual);
    }
    out
}

/// The amount-regression view of `dataset`: PCA over the regressor's selected
/// columns on granted cases with positive amounts.
pub fn regression_pca(regressor: &AmountRegressor, dataset: &Dataset) -> Result<PcaProjection, HurdleError> {
    let population = regressor_population(dataset);
    let rows: Vec<Vec<f64>> = population.records.iter().map(|r| regressor.row(&r.values)).collect();
    let names: Vec<String> = regressor
        .columns
        .iter()
        .map(|&j| regressor.encoder.column_names()[j].clone())
        .collect();
    let matrix = if rows.is_empty() {
        Matrix::zeros(0, names.len())
    } else {
        Matrix::from_rows(&rows)
    };
    let predicted = population
        .records
        .iter()
        .map(|r| regressor.raw(&r.values))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(pca_projection(&matrix, &names, &predicted, &population.amounts())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[true, false, true, false], &[0.9, 0.8, 0.7, 0.1]).unwrap(), 0.75);
        assert_eq!(auc(&[false, false, true, true], &[0.1, 0.2, 0.3, 0.4]).unwrap(), 1.0);
        assert_eq!(auc(&[false, true, true, false], &[0.5; 4]).unwrap(), 0.5);
        assert_eq!(auc(&[true, true], &[0.1, 0.2]), Err(EvalError::AucUndefined));
    }

    #[test]
    fn classification_counts() {
        let r = classification_report(&[true, false, true, false], &[0.9, 0.8, 0.4, 0.1], 0.5).unwrap();
        assert_eq!((r.tp, r.fp, r.tn, r.fn_), (1, 1, 1, 1));
        assert_eq!(r.accuracy, 0.5);
        let single = classification_report(&[true, true], &[0.9, 0.2], 0.5).unwrap();
        assert_eq!(single.accuracy, 0.5);
        assert_eq!(single.auc, None);
    }

    #[test]
    fn regression_examples() {
        let r = regression_report(&[10.0, 20.0, 30.0], &[9.0, 23.0, 28.0]).unwrap();
        assert_eq!(r.mean_ae, 2.0);
        assert_eq!(r.median_ae, 2.0);
        let exact = regression_report(&[1.0, 5.0, 2.0], &[1.0, 5.0, 2.0]).unwrap();
        assert_eq!((exact.mean_ae, exact.median_ae, exact.sd_ae, exact.r_squared), (0.0, 0.0, 0.0, 1.0));
        let flat = regression_report(&[1.0, 2.0, 3.0, 6.0], &[3.0; 4]).unwrap();
        assert_eq!(flat.r_squared, 0.0);
        assert_eq!(flat.median_ae, 1.5);
        assert_eq!(regression_report(&[1.0], &[1.0]), Err(EvalError::TooFewObservations(1)));
    }

    #[test]
    fn pca_on_perfectly_correlated_columns() {
        let rows: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, 2.0 * i as f64 + 1.0, 4.0]).collect();
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let p = pca_projection(&Matrix::from_rows(&rows), &names, &[0.0; 10], &[0.0; 10]).unwrap();
        assert_eq!(p.dropped, ["c"]);
        assert!((p.explained_variance_ratio - 1.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p.loadings[0] - h).abs() < 1e-12 && (p.loadings[1] - h).abs() < 1e-12);
        assert!((p.explained_variance_ratios.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pca_rejects_degenerate_input() {
        let names: Vec<String> = vec!["a".into(), "b".into()];
        let flat = Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]);
        assert_eq!(pca_projection(&flat, &names, &[0.0; 3], &[0.0; 3]), Err(EvalError::NoVariance));
        let narrow = Matrix::from_rows(&[[1.0], [2.0], [3.0]]);
        assert!(matches!(
            pca_projection(&narrow, &names[..1], &[0.0; 3], &[0.0; 3]),
            Err(EvalError::PcaShape { .. })
        ));
    }
}
