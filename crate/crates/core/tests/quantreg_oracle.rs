use alimony_core::linalg::Matrix;
use alimony_core::linreg::fit_ols;
use alimony_core::quantreg::{fit_quantile, pinball_loss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn loss(x: &Matrix, y: &[f64], intercept: f64, coef: &[f64], tau: f64) -> f64 {
    (0..y.len())
        .map(|i| {
            let pred = intercept + coef.iter().zip(x.row(i)).map(|(b, v)| b * v).sum::<f64>();
            pinball_loss(y[i] - pred, tau)
        })
        .sum()
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn interpolate(rows: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let k = rhs.len();
    let mut a: Vec<Vec<f64>> = rows.iter().zip(rhs).map(|(r, b)| r.iter().copied().chain([*b]).collect()).collect();
    for c in 0..k {
        let p = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-9 {
            return None;
        }
        a.swap(p, c);
        for r in 0..k {
            if r != c {
                let f = a[r][c] / a[c][c];
                for col in c..=k {
                    a[r][col] -= f * a[c][col];
                }
            }
        }
    }
    Some((0..k).map(|i| a[i][k] / a[i][i]).collect())
}

fn subsets(n: usize, k: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if current.len() == k {
        out.push(current.clone());
        return;
    }
    for i in start..n {
        current.push(i);
        subsets(n, k, i + 1, current, out);
        current.pop();
    }
}

/// Minimum total check loss over every vertex interpolating `p + 1` points.
fn exhaustive_optimum(x: &Matrix, y: &[f64], tau: f64) -> f64 {
    let k = x.ncols() + 1;
    let mut all = Vec::new();
    subsets(y.len(), k, 0, &mut Vec::new(), &mut all);
    all.iter()
        .filter_map(|s| {
            let rows: Vec<Vec<f64>> = s.iter().map(|&i| std::iter::once(1.0).chain(x.row(i).iter().copied()).collect()).collect();
            let rhs: Vec<f64> = s.iter().map(|&i| y[i]).collect();
            interpolate(&rows, &rhs)
        })
        .map(|b| loss(x, y, b[0], &b[1..], tau))
        .fold(f64::INFINITY, f64::min)
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (Matrix, Vec<f64>) {
    let noise = Normal::new(0.0, 5.0).unwrap();
    let mut data = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..p).map(|_| rng.random_range(-10.0..10.0)).collect();
        let heavy = if rng.random_bool(0.2) { 40.0 } else { 1.0 };
        y.push(3.0 + row.iter().enumerate().map(|(j, v)| (j as f64 + 1.0) * v).sum::<f64>() + heavy * noise.sample(rng));
        data.extend(row);
    }
    (Matrix::from_vec(n, p, data), y)
}

#[test]
fn matches_exhaustive_vertex_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..40 {
        let p = 1 + trial % 3;
        let n = 8 + trial % 6;
        let tau = [0.25, 0.5, 0.75, 0.9][trial % 4];
        let (x, y) = random_problem(&mut rng, n, p);
        let m = fit_quantile(&x, &y, tau).unwrap();
        let got = loss(&x, &y, m.intercept, &m.coefficients, tau);
        let best = exhaustive_optimum(&x, &y, tau);
        assert!(
            got - best <= 1e-6 * best.max(1e-12),
            "trial {trial}: {got} vs optimum {best}"
        );
        assert!((m.achieved_loss * n as f64 - got).abs() <= 1e-9 * got.max(1.0));
    }
}

#[test]
fn intercept_only_equals_sample_median_for_odd_n() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = 2 * rng.random_range(1..40) + 1;
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1e4..1e4)).collect();
        let mut sorted = y.clone();
        sorted.sort_by(f64::total_cmp);
        let m = fit_quantile(&Matrix::zeros(n, 0), &y, 0.5).unwrap();
        assert_eq!(m.intercept, sorted[n / 2]);
    }
}

#[test]
fn coefficient_perturbation_never_helps() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..20 {
        let p = 1 + trial % 4;
        let (x, y) = random_problem(&mut rng, 60 + 10 * trial, p);
        let m = fit_quantile(&x, &y, 0.5).unwrap();
        let base = loss(&x, &y, m.intercept, &m.coefficients, 0.5);
        let mut params = vec![m.intercept];
        params.extend(&m.coefficients);
        for j in 0..params.len() {
            let delta = 1e-4 * params[j].abs().max(1.0);
            for sign in [-1.0, 1.0] {
                let mut q = params.clone();
                q[j] += sign * delta;
                let moved = loss(&x, &y, q[0], &q[1..], 0.5);
                assert!(base - moved <= 1e-8 * base, "trial {trial}, coefficient {j}: {base} -> {moved}");
            }
        }
    }
}

#[test]
fn one_outlier_moves_median_by_one_order_step_not_the_mean() {
    let y: Vec<f64> = vec![3.0, 7.0, 1.0, 9.0, 4.0, 6.0, 2.0, 8.0, 5.0, 10.0, 11.0];
    let mut corrupted = y.clone();
    corrupted[0] = 1e9;
    let x = Matrix::zeros(11, 0);
    let clean = fit_quantile(&x, &y, 0.5).unwrap().intercept;
    let dirty = fit_quantile(&x, &corrupted, 0.5).unwrap().intercept;
    assert_eq!(clean, 6.0);
    assert!(dirty - clean <= 1.0 && dirty >= clean);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&corrupted) - mean(&y) > 1e7);
}

#[test]
fn prediction_at_mean_row_is_monotone_in_tau() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let (x, y) = random_problem(&mut rng, 80, 2);
        let mean_row: Vec<f64> = (0..2).map(|j| x.column(j).iter().sum::<f64>() / 80.0).collect();
        let preds: Vec<f64> = [0.25, 0.5, 0.75]
            .iter()
            .map(|&t| fit_quantile(&x, &y, t).unwrap().predict(&mean_row).unwrap())
            .collect();
        assert!(preds[0] <= preds[1] + 1e-9 && preds[1] <= preds[2] + 1e-9, "{preds:?}");
    }
}

#[test]
fn symmetric_noise_agrees_with_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let sd = 3000.0;
    let n = 400;
    let noise = Normal::new(0.0, sd).unwrap();
    let mut gaps = Vec::new();
    for _ in 0..20 {
        let mut data = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.random_range(0.0..80000.0);
            let b: f64 = rng.random_range(0.0..4000.0);
            y.push(3000.0 + 0.35 * a - 7.86 * b + noise.sample(&mut rng));
            data.extend([a, b]);
        }
        let x = Matrix::from_vec(n, 2, data);
        let q = fit_quantile(&x, &y, 0.5).unwrap();
        let (o, _) = fit_ols(&x, &y).unwrap();
        let mean_abs: f64 = (0..n)
            .map(|i| (q.predict(x.row(i)).unwrap() - o.predict(x.row(i)).unwrap()).abs())
            .sum::<f64>()
            / n as f64;
        gaps.push(mean_abs);
    }
    let average = gaps.iter().sum::<f64>() / gaps.len() as f64;
    assert!(average <= 2.0 * sd / (n as f64).sqrt(), "average gap {average}");
}

#[test]
fn deterministic_and_fast_at_training_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (x, y) = random_problem(&mut rng, 2000, 12);
    let start = std::time::Instant::now();
    let a = fit_quantile(&x, &y, 0.5).unwrap();
    let elapsed = start.elapsed();
    let b = fit_quantile(&x, &y, 0.5).unwrap();
    assert_eq!(a, b);
    assert!(elapsed.as_secs_f64() < 5.0, "{elapsed:?}");
}
