//! Linear quantile regression (median by default) for the allowance amount.
//!
//! The fit runs iteratively reweighted least squares on a smoothed check
//! loss to reach a neighbourhood of the optimum, then finishes with exact
//! basis exchanges: the optimum of the piecewise-linear loss is attained at
//! a coefficient vector interpolating `p + 1` observations, and moving
//! between such vertices along descending edges terminates at an exact
//! minimiser.

use serde::{Deserialize, Serialize};

use crate::linalg::{dot, invert_square, solve_square, Matrix, Qr, QrOutcome};
use crate::linreg::{check_design, coefficient_table, default_names, factor_with_intercept, linear_predict, LinregError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuantregError {
    #[error("tau must lie strictly inside (0, 1), got {0}")]
    InvalidTau(f64),
    #[error(transparent)]
    Design(#[from] LinregError),
    #[error("no optimum after {iterations} basis exchanges: mean loss {achieved_loss}, still-available reduction {gap}")]
    NotConverged {
        iterations: usize,
        achieved_loss: f64,
        gap: f64,
    },
}

/// Check loss: `τ·r` for `r ≥ 0`, `(τ − 1)·r` otherwise.
pub fn pinball_loss(residual: f64, tau: f64) -> f64 {
    if residual >= 0.0 {
        tau * residual
    } else {
        (tau - 1.0) * residual
    }
}

pub fn mean_pinball_loss(residuals: impl IntoIterator<Item = f64>, tau: f64) -> f64 {
    let (sum, n) = residuals
        .into_iter()
        .fold((0.0, 0usize), |(s, n), r| (s + pinball_loss(r, tau), n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileModel {
    pub tau: f64,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub column_names: Vec<String>,
    /// Mean check loss on the training data.
    pub achieved_loss: f64,
}

impl QuantileModel {
    pub fn predict(&self, row: &[f64]) -> Result<f64, LinregError> {
        linear_predict(self.intercept, &self.coefficients, row)
    }

    pub fn coefficient_table(&self) -> Vec<(String, f64)> {
        coefficient_table(self.intercept, &self.coefficients, &self.column_names)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantregOptions {
    pub irls_iterations: usize,
    /// Cap on basis exchanges; `None` scales with the data size.
    pub max_exchanges: Option<usize>,
}

impl Default for QuantregOptions {
    fn default() -> Self {
        Self {
            irls_iterations: 40,
            max_exchanges: None,
        }
    }
}

pub fn fit_quantile(x: &Matrix, y: &[f64], tau: f64) -> Result<QuantileModel, QuantregError> {
    fit_quantile_named(x, y, tau, default_names(x.ncols()), &QuantregOptions::default())
}

/// Minimises the mean check loss with an intercept.
///
/// Requires `n > p + 1` and a full-rank design. With no regressors and `nτ`
/// an integer the optimum is an interval; its midpoint is returned.
pub fn fit_quantile_named(
    x: &Matrix,
    y: &[f64],
    tau: f64,
    names: Vec<String>,
    options: &QuantregOptions,
) -> Result<QuantileModel, QuantregError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(QuantregError::InvalidTau(tau));
    }
    check_design(x, y)?;
    assert_eq!(names.len(), x.ncols(), "one name per column");
    if x.ncols() == 0 {
        let intercept = sample_quantile(y, tau);
        return Ok(QuantileModel {
            tau,
            intercept,
            coefficients: Vec::new(),
            column_names: names,
            achieved_loss: mean_pinball_loss(y.iter().map(|v| v - intercept), tau),
        });
    }
    factor_with_intercept(x, &names)?;

    let standard = Standardized::new(x);
    let z = &standard.design;
    let start = irls(z, y, tau, options.irls_iterations);
    let cap = options.max_exchanges.unwrap_or(1000 + 50 * y.len());
    let beta = polish(z, y, tau, &start, cap)?;
    let (intercept, coefficients) = standard.unscale(&beta);
    let achieved_loss = mean_pinball_loss(
        x.rows().zip(y).map(|(row, yi)| yi - intercept - dot(&coefficients, row)),
        tau,
    );
    Ok(QuantileModel {
        tau,
        intercept,
        coefficients,
        column_names: names,
        achieved_loss,
    })
}

/// Minimiser of `Σ ρ_τ(y_i − c)`, midpoint of the flat interval when `nτ`
/// is an integer.
pub fn sample_quantile(y: &[f64], tau: f64) -> f64 {
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let target = n as f64 * tau;
    let m = target.round();
    if (target - m).abs() <= 1e-9 * target.max(1.0) && m >= 1.0 && (m as usize) < n {
        let m = m as usize;
        0.5 * (sorted[m - 1] + sorted[m])
    } else {
        let k = (target.ceil() as usize).clamp(1, n);
        sorted[k - 1]
    }
}

/// `[1, (x − mean) / sd]`; the check loss is invariant under this
/// reparametrisation and the exchanges are better conditioned on it.
struct Standardized {
    design: Matrix,
    means: Vec<f64>,
    scales: Vec<f64>,
}

impl Standardized {
    fn new(x: &Matrix) -> Self {
        let n = x.nrows() as f64;
        let p = x.ncols();
        let means: Vec<f64> = (0..p).map(|j| x.column(j).iter().sum::<f64>() / n).collect();
        let scales: Vec<f64> = (0..p)
            .map(|j| {
                let var = x.column(j).iter().map(|v| (v - means[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let mut design = Matrix::zeros(x.nrows(), p + 1);
        for i in 0..x.nrows() {
            design.set(i, 0, 1.0);
            for j in 0..p {
                design.set(i, j + 1, (x.get(i, j) - means[j]) / scales[j]);
            }
        }
        Self { design, means, scales }
    }

    fn unscale(&self, beta: &[f64]) -> (f64, Vec<f64>) {
        let coefficients: Vec<f64> = beta[1..].iter().zip(&self.scales).map(|(b, s)| b / s).collect();
        let intercept = beta[0] - dot(&coefficients, &self.means);
        (intercept, coefficients)
    }
}

fn residuals(z: &Matrix, y: &[f64], beta: &[f64]) -> Vec<f64> {
    z.rows().zip(y).map(|(row, yi)| yi - dot(row, beta)).collect()
}

fn total_loss(r: &[f64], tau: f64) -> f64 {
    r.iter().map(|&v| pinball_loss(v, tau)).sum()
}

/// Weighted least squares on `ρ_τ(r) ≈ w r²` with `w = τ or 1 − τ over
/// max(|r|, ε)`, shrinking ε geometrically.
fn irls(z: &Matrix, y: &[f64], tau: f64, iterations: usize) -> Vec<f64> {
    let QrOutcome::Full(qr) = Qr::factor(z) else {
        unreachable!("rank checked by the caller")
    };
    let mut beta = qr.solve(y);
    let mut r = residuals(z, y, &beta);
    let y_scale = y.iter().fold(0.0_f64, |s, v| s.max(v.abs())).max(1.0);
    let mut eps = r.iter().map(|v| v.abs()).sum::<f64>() / r.len() as f64;
    let floor = 1e-9 * y_scale;
    let mut best_loss = total_loss(&r, tau);
    let mut weighted = z.clone();
    let mut wy = vec![0.0; y.len()];
    for _ in 0..iterations {
        eps = (eps * 0.5).max(floor);
        for i in 0..y.len() {
            let side = if r[i] >= 0.0 { tau } else { 1.0 - tau };
            let w = (side / r[i].abs().max(eps)).sqrt();
            for j in 0..z.ncols() {
                weighted.set(i, j, w * z.get(i, j));
            }
            wy[i] = w * y[i];
        }
        let QrOutcome::Full(qr) = Qr::factor(&weighted) else {
            break;
        };
        let candidate = qr.solve(&wy);
        let cr = residuals(z, y, &candidate);
        let loss = total_loss(&cr, tau);
        if !loss.is_finite() {
            break;
        }
        let improved = loss < best_loss;
        beta = candidate;
        r = cr;
        if improved {
            best_loss = loss;
        } else if eps <= floor {
            break;
        }
    }
    beta
}

/// Picks `k` observations, smallest `|r|` first, whose rows are linearly
/// independent.
fn initial_basis(z: &Matrix, r: &[f64]) -> Vec<usize> {
    let k = z.ncols();
    let mut order: Vec<usize> = (0..r.len()).collect();
    order.sort_by(|&a, &b| r[a].abs().total_cmp(&r[b].abs()).then(a.cmp(&b)));
    let mut basis = Vec::with_capacity(k);
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(k);
    for i in order {
        let row = z.row(i);
        let mut v = row.to_vec();
        for q in &ortho {
            let c = dot(q, &v);
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-8 * dot(row, row).sqrt() {
            v.iter_mut().for_each(|a| *a /= norm);
            ortho.push(v);
            basis.push(i);
            if basis.len() == k {
                break;
            }
        }
    }
    basis
}

fn basis_matrix(z: &Matrix, basis: &[usize]) -> Vec<f64> {
    basis.iter().flat_map(|&i| z.row(i).iter().copied()).collect()
}

/// Exact basis-exchange descent from the vertex nearest to `start`.
///
/// At a vertex with basis `B` (`Z_B β = y_B`), edge `(j, s)` moves along
/// `d = s · Z_B⁻¹ e_j`, releasing basic observation `j` while keeping the
/// others interpolated. The steepest descending edge is followed to the
/// breakpoint where the slope of the loss turns nonnegative; the observation
/// crossing zero there replaces `j`.
fn polish(z: &Matrix, y: &[f64], tau: f64, start: &[f64], cap: usize) -> Result<Vec<f64>, QuantregError> {
    let n = y.len();
    let k = z.ncols();
    let y_scale = y.iter().fold(0.0_f64, |s, v| s.max(v.abs())).max(1.0);
    let zero_tol = 1e-11 * y_scale;
    let mut basis = initial_basis(z, &residuals(z, y, start));
    assert_eq!(basis.len(), k, "full-rank design has a full basis");
    let mut in_basis = vec![false; n];
    basis.iter().for_each(|&i| in_basis[i] = true);

    let mut c = vec![0.0; n];
    let mut breaks: Vec<(f64, usize)> = Vec::new();
    for iteration in 0.. {
        let zb = basis_matrix(z, &basis);
        let yb: Vec<f64> = basis.iter().map(|&i| y[i]).collect();
        let beta = solve_square(&zb, &yb).expect("basis stays nonsingular");
        let inv = invert_square(&zb, k).expect("basis stays nonsingular");
        let mut r = residuals(z, y, &beta);
        basis.iter().for_each(|&i| r[i] = 0.0);

        // Steepest descending edge, ties to the lower (position, sign).
        let mut best: Option<(f64, usize, f64)> = None;
        for j in 0..k {
            let d: Vec<f64> = (0..k).map(|row| inv[row * k + j]).collect();
            let mut linear = 0.0;
            let mut kink_plus = 0.0;
            let mut kink_minus = 0.0;
            let mut scale = 0.0;
            for i in 0..n {
                let ci = dot(z.row(i), &d);
                scale += ci.abs();
                if in_basis[i] || r[i].abs() <= zero_tol {
                    // Residual moves by −s·cᵢ from zero.
                    kink_plus += pinball_loss(-ci, tau);
                    kink_minus += pinball_loss(ci, tau);
                } else {
                    let side = if r[i] > 0.0 { tau } else { tau - 1.0 };
                    linear -= side * ci;
                }
            }
            for (s, slope) in [(1.0, linear + kink_plus), (-1.0, -linear + kink_minus)] {
                let norm = dot(&d, &d).sqrt();
                let rate = slope / norm;
                if slope < -1e-12 * scale && best.is_none_or(|(b, _, _)| rate < b) {
                    best = Some((rate, j, s));
                }
            }
        }
        let Some((_, j, s)) = best else {
            return Ok(beta);
        };
        if iteration >= cap {
            let current = total_loss(&r, tau);
            let next = line_search(z, &r, &inv, j, s, tau, zero_tol, &in_basis, &mut c, &mut breaks)
                .map(|(t, _)| {
                    let d: Vec<f64> = (0..k).map(|row| s * inv[row * k + j]).collect();
                    let moved: Vec<f64> = beta.iter().zip(&d).map(|(b, di)| b + t * di).collect();
                    total_loss(&residuals(z, y, &moved), tau)
                })
                .unwrap_or(current);
            return Err(QuantregError::NotConverged {
                iterations: iteration,
                achieved_loss: current / n as f64,
                gap: (current - next).max(0.0) / n as f64,
            });
        }
        let Some((_, entering)) = line_search(z, &r, &inv, j, s, tau, zero_tol, &in_basis, &mut c, &mut breaks)
        else {
            return Ok(beta);
        };
        in_basis[basis[j]] = false;
        in_basis[entering] = true;
        basis[j] = entering;
    }
    unreachable!()
}

/// Walks the breakpoints of the loss along edge `(j, s)`; returns the step
/// length and the observation that becomes interpolated there.
#[allow(clippy::too_many_arguments)]
fn line_search(
    z: &Matrix,
    r: &[f64],
    inv: &[f64],
    j: usize,
    s: f64,
    tau: f64,
    zero_tol: f64,
    in_basis: &[bool],
    c: &mut [f64],
    breaks: &mut Vec<(f64, usize)>,
) -> Option<(f64, usize)> {
    let k = z.ncols();
    let d: Vec<f64> = (0..k).map(|row| s * inv[row * k + j]).collect();
    let mut slope = 0.0;
    breaks.clear();
    for i in 0..r.len() {
        c[i] = dot(z.row(i), &d);
        if in_basis[i] || r[i].abs() <= zero_tol {
            slope += pinball_loss(-c[i], tau);
        } else {
            let side = if r[i] > 0.0 { tau } else { tau - 1.0 };
            slope -= side * c[i];
            let t = r[i] / c[i];
            if t > 0.0 && c[i] != 0.0 {
                breaks.push((t, i));
            }
        }
    }
    breaks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for &(t, i) in breaks.iter() {
        slope += c[i].abs();
        if slope >= 0.0 {
            return Some((t, i));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_loss_values() {
        assert_eq!(pinball_loss(4.0, 0.5), 2.0);
        assert_eq!(pinball_loss(-4.0, 0.5), 2.0);
        assert!((pinball_loss(10.0, 0.9) - 9.0).abs() < 1e-12);
        assert!((pinball_loss(-10.0, 0.9) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn intercept_only_medians() {
        let x3 = Matrix::zeros(3, 0);
        assert_eq!(fit_quantile(&x3, &[1.0, 2.0, 100.0], 0.5).unwrap().intercept, 2.0);
        let x4 = Matrix::zeros(4, 0);
        assert_eq!(fit_quantile(&x4, &[1.0, 2.0, 3.0, 100.0], 0.5).unwrap().intercept, 2.5);
        assert_eq!(sample_quantile(&[5.0, 1.0, 3.0, 2.0, 4.0], 0.2), 1.5);
        assert_eq!(sample_quantile(&[5.0, 1.0, 3.0, 2.0, 4.0], 0.3), 2.0);
    }

    #[test]
    fn rejects_bad_tau_and_rank() {
        let x = Matrix::from_vec(4, 1, vec![1.0; 4]);
        assert!(matches!(fit_quantile(&x, &[1.0, 2.0, 3.0, 4.0], 1.0), Err(QuantregError::InvalidTau(_))));
        assert!(matches!(
            fit_quantile(&x, &[1.0, 2.0, 3.0, 4.0], 0.5),
            Err(QuantregError::Design(LinregError::RankDeficient { .. }))
        ));
    }

    #[test]
    fn recovers_noiseless_line() {
        let rows: Vec<[f64; 2]> = (0..30).map(|i| [i as f64, ((i * 7) % 11) as f64 * 100.0]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 3000.0 + 0.35 * r[0] - 7.86 * r[1]).collect();
        let m = fit_quantile(&Matrix::from_rows(&rows), &y, 0.5).unwrap();
        assert!((m.intercept - 3000.0).abs() <= 1e-5 * 3000.0);
        assert!((m.coefficients[0] - 0.35).abs() <= 1e-5 * 0.35);
        assert!((m.coefficients[1] + 7.86).abs() <= 1e-5 * 7.86);
        assert!(m.achieved_loss < 1e-8);
    }

    #[test]
    fn exchange_cap_reports_loss() {
        let rows: Vec<[f64; 1]> = (0..40).map(|i| [((i * 13) % 17) as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| ((i * 29) % 23) as f64).collect();
        let options = QuantregOptions {
            irls_iterations: 0,
            max_exchanges: Some(0),
        };
        match fit_quantile_named(&Matrix::from_rows(&rows), &y, 0.5, default_names(1), &options) {
            Err(QuantregError::NotConverged { achieved_loss, gap, .. }) => {
                assert!(achieved_loss > 0.0);
                assert!(gap >= 0.0);
            }
            other => panic!("expected the cap to trip, got {other:?}"),
        }
    }
}
