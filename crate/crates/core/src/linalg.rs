//! Dense row-major matrix and the handful of factorizations the estimators
//! share: Householder QR for least squares, partial-pivot LU for the small
//! square systems of the median-regression solver, and cyclic Jacobi for
//! symmetric eigenproblems.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major storage.
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix storage size mismatch");
        Self { rows, cols, data }
    }

    /// Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select_columns(&self, columns: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * columns.len());
        for i in 0..self.rows {
            let row = self.row(i);
            data.extend(columns.iter().map(|&c| row[c]));
        }
        Matrix::from_vec(self.rows, columns.len(), data)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix::from_vec(rows.len(), self.cols, data)
    }

    /// Prepends a column of ones.
    pub fn with_intercept(&self) -> Matrix {
        let cols = self.cols + 1;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.push(1.0);
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_vec(self.rows, cols, data)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Relative tolerance on `|R_jj| / ||a_j||` below which a column counts as
/// lying in the span of the columns before it.
pub(crate) const RANK_TOL: f64 = 1e-10;

/// Householder QR of an `n x k` matrix, `n >= k`, stored column-major.
pub(crate) struct Qr {
    n: usize,
    k: usize,
    /// Column-major; strict upper triangle holds R, columns below the
    /// diagonal hold Householder vectors.
    a: Vec<f64>,
    beta: Vec<f64>,
    rdiag: Vec<f64>,
}

pub(crate) enum QrOutcome {
    Full(Qr),
    /// Column `column` is (numerically) a linear combination of the
    /// `combination` columns, all with lower index.
    Dependent {
        column: usize,
        combination: Vec<usize>,
    },
}

impl Qr {
    pub(crate) fn factor(matrix: &Matrix) -> QrOutcome {
        let n = matrix.nrows();
        let k = matrix.ncols();
        let mut a = vec![0.0; n * k];
        for i in 0..n {
            for j in 0..k {
                a[j * n + i] = matrix.get(i, j);
            }
        }
        let mut beta = vec![0.0; k];
        let mut rdiag = vec![0.0; k];
        for j in 0..k {
            let col_norm = a[j * n..(j + 1) * n]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            if j >= n {
                return QrOutcome::Dependent {
                    column: j,
                    combination: (0..j).collect(),
                };
            }
            let norm = a[j * n + j..(j + 1) * n]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            if norm <= RANK_TOL * col_norm || col_norm == 0.0 {
                // Coefficients of column j on columns 0..j are R[0..j,0..j]^{-1} R[0..j, j].
                let mut coef = vec![0.0; j];
                for i in (0..j).rev() {
                    let mut s = a[j * n + i];
                    for c in i + 1..j {
                        s -= a[c * n + i] * coef[c];
                    }
                    coef[i] = s / rdiag[i];
                }
                let scale = coef.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
                let combination = coef
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.abs() > 1e-8 * scale.max(f64::MIN_POSITIVE))
                    .map(|(i, _)| i)
                    .collect();
                return QrOutcome::Dependent {
                    column: j,
                    combination,
                };
            }
            let head = a[j * n + j];
            let alpha = if head > 0.0 { -norm } else { norm };
            a[j * n + j] -= alpha;
            let vnorm2: f64 = a[j * n + j..(j + 1) * n].iter().map(|v| v * v).sum();
            let b = 2.0 / vnorm2;
            beta[j] = b;
            rdiag[j] = alpha;
            for c in j + 1..k {
                let mut s = 0.0;
                for i in j..n {
                    s += a[j * n + i] * a[c * n + i];
                }
                let f = b * s;
                for i in j..n {
                    a[c * n + i] -= f * a[j * n + i];
                }
            }
        }
        QrOutcome::Full(Qr {
            n,
            k,
            a,
            beta,
            rdiag,
        })
    }

    /// Least-squares solution of `A x = y`.
    pub(crate) fn solve(&self, y: &[f64]) -> Vec<f64> {
        let (n, k) = (self.n, self.k);
        let mut qty = y.to_vec();
        for j in 0..k {
            let v = &self.a[j * n..(j + 1) * n];
            let s: f64 = (j..n).map(|i| v[i] * qty[i]).sum();
            let f = self.beta[j] * s;
            for i in j..n {
                qty[i] -= f * v[i];
            }
        }
        let mut x = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = qty[i];
            for c in i + 1..k {
                s -= self.a[c * self.n + i] * x[c];
            }
            x[i] = s / self.rdiag[i];
        }
        x
    }

    /// Diagonal of `(A'A)^{-1} = R^{-1} R^{-T}`.
    pub(crate) fn inverse_gram_diagonal(&self) -> Vec<f64> {
        let k = self.k;
        let r = |i: usize, c: usize| {
            if i == c {
                self.rdiag[i]
            } else {
                self.a[c * self.n + i]
            }
        };
        // Columns of R^{-1}, upper triangular.
        let mut rinv = vec![0.0; k * k];
        for c in 0..k {
            rinv[c * k + c] = 1.0 / r(c, c);
            for i in (0..c).rev() {
                let mut s = 0.0;
                for m in i + 1..=c {
                    s += r(i, m) * rinv[m * k + c];
                }
                rinv[i * k + c] = -s / r(i, i);
            }
        }
        (0..k)
            .map(|i| (i..k).map(|c| rinv[i * k + c].powi(2)).sum())
            .collect()
    }
}

/// Solves the square system `a x = b` (`a` row-major `k x k`) by LU with
/// partial pivoting. Returns `None` when a pivot vanishes.
pub(crate) fn solve_square(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let k = b.len();
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&p, &q| m[p * k + col].abs().total_cmp(&m[q * k + col].abs()))?;
        if m[pivot * k + col].abs() <= 1e-13 * scale {
            return None;
        }
        if pivot != col {
            for c in 0..k {
                m.swap(pivot * k + c, col * k + c);
            }
            x.swap(pivot, col);
        }
        let d = m[col * k + col];
        for r in col + 1..k {
            let f = m[r * k + col] / d;
            if f != 0.0 {
                for c in col..k {
                    m[r * k + c] -= f * m[col * k + c];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for r in (0..k).rev() {
        let mut s = x[r];
        for c in r + 1..k {
            s -= m[r * k + c] * x[c];
        }
        x[r] = s / m[r * k + r];
    }
    Some(x)
}

/// Inverse of a square row-major matrix, column by column.
pub(crate) fn invert_square(a: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; k * k];
    let mut e = vec![0.0; k];
    for c in 0..k {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[c] = 1.0;
        let col = solve_square(a, &e)?;
        for r in 0..k {
            inv[r * k + c] = col[r];
        }
    }
    Some(inv)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as the columns of the returned matrix.
pub(crate) fn symmetric_eigen(sym: &Matrix) -> (Vec<f64>, Matrix) {
    let k = sym.nrows();
    let mut a = sym.clone();
    let mut v = Matrix::zeros(k, k);
    for i in 0..k {
        v.set(i, i, 1.0);
    }
    let frob: f64 = a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..k)
            .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * frob.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..k {
            for q in p + 1..k {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..k {
                    let arp = a.get(r, p);
                    let arq = a.get(r, q);
                    a.set(r, p, c * arp - s * arq);
                    a.set(r, q, s * arp + c * arq);
                }
                for r in 0..k {
                    let apr = a.get(p, r);
                    let aqr = a.get(q, r);
                    a.set(p, r, c * apr - s * aqr);
                    a.set(q, r, s * apr + c * aqr);
                }
                for r in 0..k {
                    let vrp = v.get(r, p);
                    let vrq = v.get(r, q);
                    v.set(r, p, c * vrp - s * vrq);
                    v.set(r, q, s * vrp + c * vrq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| a.get(j, j).total_cmp(&a.get(i, i)).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let vectors = v.select_columns(&order);
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_solves_exact_system() {
        let a = Matrix::from_rows(&[[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]]);
        let QrOutcome::Full(qr) = Qr::factor(&a) else {
            panic!("full rank expected")
        };
        let x = qr.solve(&[1.0, 3.0, 5.0]);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn qr_names_dependent_columns() {
        let a = Matrix::from_rows(&[
            [1.0, 2.0, 0.5, 4.5],
            [1.0, 3.0, 1.0, 6.0],
            [1.0, -1.0, 2.0, 3.0],
            [1.0, 0.0, 4.0, 6.0],
        ]);
        // column 3 = 2 * column 0 + column 1 + column 2
        match Qr::factor(&a) {
            QrOutcome::Dependent {
                column,
                combination,
            } => {
                assert_eq!(column, 3);
                assert_eq!(combination, vec![0, 1, 2]);
            }
            QrOutcome::Full(_) => panic!("rank deficiency missed"),
        }
    }

    #[test]
    fn lu_and_inverse() {
        let a = [4.0, 1.0, 2.0, 3.0];
        let x = solve_square(&a, &[1.0, 2.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-12);
        let inv = invert_square(&a, 2).unwrap();
        assert!((inv[0] - 0.3).abs() < 1e-12 && (inv[1] + 0.1).abs() < 1e-12);
        assert!(solve_square(&[1.0, 2.0, 2.0, 4.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]);
        let (vals, vecs) = symmetric_eigen(&a);
        assert!((vals[0] - 3.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((vecs.get(0, 0).abs() - h).abs() < 1e-12);
        assert!((vecs.get(1, 0).abs() - h).abs() < 1e-12);
    }
}
