//! Ordinary least squares for the allowance amount, with the usual fit
//! diagnostics and forward stepwise selection by partial F-test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::linalg::{dot, Matrix, Qr, QrOutcome};

pub const INTERCEPT_NAME: &str = "(intercept)";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinregError {
    #[error("{rows} rows in the design but {targets} targets")]
    DimensionMismatch { rows: usize, targets: usize },
    #[error("{n} observations are too few for {p} regressors plus an intercept")]
    TooFewObservations { n: usize, p: usize },
    #[error("design is rank deficient: `{column}` is a linear combination of {combination:?}")]
    RankDeficient { column: String, combination: Vec<String> },
    #[error("non-finite value in the design or target")]
    NonFinite,
    #[error("no candidate columns")]
    EmptyCandidates,
    #[error("candidate column {0} is out of range")]
    CandidateOutOfRange(usize),
    #[error("row has {got} columns, model expects {expected}")]
    ColumnMismatch { expected: usize, got: usize },
}

/// `intercept + Σ coefficient × regressor`, amounts in euros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub column_names: Vec<String>,
}

impl LinearModel {
    pub fn new(intercept: f64, coefficients: Vec<f64>, column_names: Vec<String>) -> Result<Self, LinregError> {
        if coefficients.len() != column_names.len() {
            return Err(LinregError::ColumnMismatch {
                expected: column_names.len(),
                got: coefficients.len(),
            });
        }
        Ok(Self {
            intercept,
            coefficients,
            column_names,
        })
    }

    /// May be negative; clipping belongs to the caller.
    pub fn predict(&self, row: &[f64]) -> Result<f64, LinregError> {
        linear_predict(self.intercept, &self.coefficients, row)
    }

    /// `(name, estimate)` pairs, intercept first.
    pub fn coefficient_table(&self) -> Vec<(String, f64)> {
        coefficient_table(self.intercept, &self.coefficients, &self.column_names)
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.coefficients.len(), "one name per coefficient");
        self.column_names = names;
        self
    }
}

pub(crate) fn linear_predict(intercept: f64, coefficients: &[f64], row: &[f64]) -> Result<f64, LinregError> {
    if row.len() != coefficients.len() {
        return Err(LinregError::ColumnMismatch {
            expected: coefficients.len(),
            got: row.len(),
        });
    }
    Ok(intercept + dot(coefficients, row))
}

pub(crate) fn coefficient_table(intercept: f64, coefficients: &[f64], names: &[String]) -> Vec<(String, f64)> {
    std::iter::once((INTERCEPT_NAME.to_string(), intercept))
        .chain(names.iter().cloned().zip(coefficients.iter().copied()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n: usize,
    pub p: usize,
    pub r_squared: f64,
    pub adjusted_r_squared: f64,
    pub residual_sd: f64,
    pub ss_residual: f64,
    pub ss_total: f64,
    /// Intercept first, then one per regressor.
    pub standard_errors: Vec<f64>,
    /// `None` where the standard error is zero.
    pub t_statistics: Vec<Option<f64>>,
    pub p_values: Vec<Option<f64>>,
}

pub(crate) fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("x{i}")).collect()
}

pub(crate) fn check_design(x: &Matrix, y: &[f64]) -> Result<(), LinregError> {
    if x.nrows() != y.len() {
        return Err(LinregError::DimensionMismatch {
            rows: x.nrows(),
            targets: y.len(),
        });
    }
    if x.nrows() <= x.ncols() + 1 {
        return Err(LinregError::TooFewObservations {
            n: x.nrows(),
            p: x.ncols(),
        });
    }
    if !x.as_slice().iter().chain(y).all(|v| v.is_finite()) {
        return Err(LinregError::NonFinite);
    }
    Ok(())
}

/// QR of `[1, X]`, translating rank deficiency into named columns.
pub(crate) fn factor_with_intercept(x: &Matrix, names: &[String]) -> Result<(Matrix, Qr), LinregError> {
    let design = x.with_intercept();
    let name = |j: usize| {
        if j == 0 {
            INTERCEPT_NAME.to_string()
        } else {
            names[j - 1].clone()
        }
    };
    match Qr::factor(&design) {
        QrOutcome::Full(qr) => Ok((design, qr)),
        QrOutcome::Dependent { column, combination } => Err(LinregError::RankDeficient {
            column: name(column),
            combination: combination.into_iter().map(name).collect(),
        }),
    }
}

/// Coefficient of determination; zero when the target has no variance.
pub(crate) fn r_squared(ss_res: f64, ss_tot: f64) -> f64 {
    if ss_tot == 0.0 {
        0.0
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Least squares with intercept, solved by Householder QR.
///
/// Requires `n > p + 1` and a full-rank design; a dependent column is
/// reported by name rather than dropped. A constant target yields zero slopes
/// and `R² = 0`.
pub fn fit_ols(x: &Matrix, y: &[f64]) -> Result<(LinearModel, FitDiagnostics), LinregError> {
    fit_ols_named(x, y, default_names(x.ncols()))
}

pub fn fit_ols_named(x: &Matrix, y: &[f64], names: Vec<String>) -> Result<(LinearModel, FitDiagnostics), LinregError> {
    check_design(x, y)?;
    assert_eq!(names.len(), x.ncols(), "one name per column");
    let (design, qr) = factor_with_intercept(x, &names)?;
    let n = y.len();
    let p = x.ncols();
    let mean = y.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();

    let beta = if ss_tot == 0.0 {
        let mut b = vec![0.0; p + 1];
        b[0] = y[0];
        b
    } else {
        qr.solve(y)
    };
    let ss_res: f64 = design
        .rows()
        .zip(y)
        .map(|(row, yi)| (yi - dot(row, &beta)).powi(2))
        .sum();
    let df = (n - p - 1) as f64;
    let r2 = r_squared(ss_res, ss_tot).clamp(0.0, 1.0);
    let adjusted = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / df;
    let sigma = (ss_res / df).sqrt();
    let standard_errors: Vec<f64> = qr
        .inverse_gram_diagonal()
        .into_iter()
        .map(|d| sigma * d.sqrt())
        .collect();
    let t_dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let t_statistics: Vec<Option<f64>> = beta
        .iter()
        .zip(&standard_errors)
        .map(|(b, se)| (*se > 0.0).then(|| b / se))
        .collect();
    let p_values = t_statistics
        .iter()
        .map(|t| t.map(|t| (2.0 * t_dist.sf(t.abs())).min(1.0)))
        .collect();

    let model = LinearModel {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        column_names: names,
    };
    let diagnostics = FitDiagnostics {
        n,
        p,
        r_squared: r2,
        adjusted_r_squared: adjusted,
        residual_sd: sigma,
        ss_residual: ss_res,
        ss_total: ss_tot,
        standard_errors,
        t_statistics,
        p_values,
    };
    Ok((model, diagnostics))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepwiseOptions {
    /// A candidate enters only if its partial-F p-value is below this.
    pub entry_p: f64,
    pub max_steps: Option<usize>,
}

impl Default for StepwiseOptions {
    fn default() -> Self {
        Self {
            entry_p: 0.05,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseStep {
    pub column: usize,
    pub name: String,
    pub f_statistic: f64,
    pub p_value: f64,
    pub r_squared: f64,
    pub adjusted_r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCandidate {
    pub step: usize,
    pub column: usize,
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseTrace {
    pub steps: Vec<StepwiseStep>,
    /// Candidates passed over because they were collinear with the
    /// selected set at that step.
    pub skipped: Vec<SkippedCandidate>,
    /// Selected columns, ascending.
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepwiseFit {
    pub trace: StepwiseTrace,
    /// Refit on the selected columns (ascending), named after them.
    pub model: LinearModel,
    pub diagnostics: FitDiagnostics,
}

struct Candidate {
    column: usize,
    ss_res: f64,
    f: f64,
    p_value: f64,
    r2: f64,
    adj_r2: f64,
}

fn ss_residual(x: &Matrix, y: &[f64], names: &[String]) -> Result<f64, LinregError> {
    let (design, qr) = factor_with_intercept(x, names)?;
    let beta = qr.solve(y);
    Ok(design.rows().zip(y).map(|(row, yi)| (yi - dot(row, &beta)).powi(2)).sum())
}

/// Forward selection. At each step every remaining candidate is tried; the
/// one with the smallest partial-F p-value enters if that p-value is below
/// `entry_p`. Ties go to the larger adjusted R², then the lower column.
pub fn stepwise_forward(
    x: &Matrix,
    y: &[f64],
    names: &[String],
    candidates: &[usize],
    options: &StepwiseOptions,
) -> Result<StepwiseFit, LinregError> {
    if candidates.is_empty() {
        return Err(LinregError::EmptyCandidates);
    }
    if let Some(&c) = candidates.iter().find(|&&c| c >= x.ncols()) {
        return Err(LinregError::CandidateOutOfRange(c));
    }
    check_design(&Matrix::zeros(x.nrows(), 0), y)?;
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();

    let mut remaining: Vec<usize> = candidates.to_vec();
    remaining.sort_unstable();
    remaining.dedup();
    let mut selected: Vec<usize> = Vec::new();
    let mut current_ss = ss_tot;
    let mut steps = Vec::new();
    let mut skipped = Vec::new();
    let max_steps = options.max_steps.unwrap_or(usize::MAX);

    while !remaining.is_empty() && steps.len() < max_steps {
        let k = selected.len() + 1;
        if n <= k + 1 {
            break;
        }
        let df = (n - k - 1) as f64;
        let f_dist = FisherSnedecor::new(1.0, df).expect("positive degrees of freedom");
        let mut best: Option<Candidate> = None;
        let mut collinear = Vec::new();
        for &c in &remaining {
            let mut cols = selected.clone();
            cols.push(c);
            let sub = x.select_columns(&cols);
            let sub_names: Vec<String> = cols.iter().map(|&j| names[j].clone()).collect();
            let ss = match ss_residual(&sub, y, &sub_names) {
                Ok(ss) => ss,
                Err(LinregError::RankDeficient { .. }) => {
                    collinear.push(c);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let gain = (current_ss - ss).max(0.0);
            let (f, p_value) = if ss <= 0.0 {
                (f64::INFINITY, 0.0)
            } else {
                let f = gain / (ss / df);
                (f, f_dist.sf(f))
            };
            let r2 = r_squared(ss, ss_tot).clamp(0.0, 1.0);
            let adj_r2 = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / df;
            let cand = Candidate {
                column: c,
                ss_res: ss,
                f,
                p_value,
                r2,
                adj_r2,
            };
            let better = match &best {
                None => true,
                Some(b) => cand.p_value < b.p_value || (cand.p_value == b.p_value && cand.adj_r2 > b.adj_r2),
            };
            if better {
                best = Some(cand);
            }
        }
        for c in collinear {
            skipped.push(SkippedCandidate {
                step: steps.len() + 1,
                column: c,
                name: names[c].clone(),
                reason: "collinear with the selected columns".into(),
            });
            tracing::warn!(column = %names[c], "stepwise: skipping collinear candidate");
            remaining.retain(|&r| r != c);
        }
        let Some(best) = best else { break };
        if best.p_value >= options.entry_p {
            break;
        }
        steps.push(StepwiseStep {
            column: best.column,
            name: names[best.column].clone(),
            f_statistic: best.f,
            p_value: best.p_value,
            r_squared: best.r2,
            adjusted_r_squared: best.adj_r2,
        });
        current_ss = best.ss_res;
        selected.push(best.column);
        remaining.retain(|&r| r != best.column);
    }

    selected.sort_unstable();
    let final_x = x.select_columns(&selected);
    let final_names: Vec<String> = selected.iter().map(|&j| names[j].clone()).collect();
    let (model, diagnostics) = fit_ols_named(&final_x, y, final_names)?;
    Ok(StepwiseFit {
        trace: StepwiseTrace {
            steps,
            skipped,
            selected,
        },
        model,
        diagnostics,
    })
}
