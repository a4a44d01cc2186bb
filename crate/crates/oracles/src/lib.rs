//! Slow, independent reference computations for tests.
//!
//! Nothing here shares code with the library crates: solutions come from
//! iterative descent, explicit inverses or brute-force enumeration.

use nalgebra::{DMatrix, DVector};

/// Weighted ridge objective `(1/n) Σ wᵢ (yᵢ − xᵢᵀθ)² + λ w0 ‖θ‖²`.
pub fn ridge_objective(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &[f64],
    w0: f64,
    lambda: f64,
    theta: &DVector<f64>,
) -> f64 {
    let r = y - x * theta;
    let n = x.nrows() as f64;
    r.iter().zip(w).map(|(ri, wi)| wi * ri * ri).sum::<f64>() / n
        + lambda * w0 * theta.norm_squared()
}

fn ridge_gradient(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &[f64],
    w0: f64,
    lambda: f64,
    theta: &DVector<f64>,
) -> DVector<f64> {
    let n = x.nrows() as f64;
    let r = y - x * theta;
    let wr = DVector::from_iterator(r.len(), r.iter().zip(w).map(|(a, b)| a * b));
    -(x.transpose() * wr) * (2.0 / n) + theta * (2.0 * lambda * w0)
}

/// Ridge solution by Nesterov-accelerated gradient descent with adaptive
/// restart. Iterates until the gradient norm drops below `grad_tol`.
pub fn ridge_gd(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &[f64],
    w0: f64,
    lambda: f64,
    grad_tol: f64,
    max_iter: usize,
) -> DVector<f64> {
    let p = x.ncols();
    let n = x.nrows() as f64;
    // Lipschitz bound from the Frobenius norm of the weighted Gram matrix.
    let mut gram = DMatrix::zeros(p, p);
    for (i, wi) in w.iter().enumerate() {
        let row = x.row(i).transpose();
        gram += &row * row.transpose() * *wi;
    }
    let lip = 2.0 * gram.norm() / n + 2.0 * lambda * w0;
    let step = 1.0 / lip;
    let mut theta = DVector::zeros(p);
    let mut prev = theta.clone();
    let mut t = 1.0f64;
    for _ in 0..max_iter {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let look = &theta + (&theta - &prev) * ((t - 1.0) / t_next);
        let g = ridge_gradient(x, y, w, w0, lambda, &look);
        let next = &look - &g * step;
        // Gradient-based restart: drop momentum when it points uphill.
        t = if g.dot(&(&next - &theta)) > 0.0 {
            1.0
        } else {
            t_next
        };
        prev = std::mem::replace(&mut theta, next);
        if ridge_gradient(x, y, w, w0, lambda, &theta).norm() < grad_tol {
            break;
        }
    }
    theta
}

/// Unweighted ridge by explicit matrix inverse.
pub fn ridge_explicit(x: &DMatrix<f64>, y: &DVector<f64>, w: &[f64], lambda: f64) -> DVector<f64> {
    let n = x.nrows() as f64;
    let wx = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * w[i]);
    let a = x.transpose() * &wx + DMatrix::identity(x.ncols(), x.ncols()) * (n * lambda);
    let inv = a.try_inverse().expect("invertible system");
    inv * (wx.transpose() * y)
}

/// `A(λ) = X (XᵀX + nλI)⁻¹ Xᵀ` by explicit inverse.
pub fn hat_explicit(x: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let a = x.transpose() * x + DMatrix::identity(x.ncols(), x.ncols()) * (n * lambda);
    x * a.try_inverse().expect("invertible system") * x.transpose()
}

/// Leave-one-out mean squared error by `n` explicit refits at `λ`, each on
/// `n − 1` rows with the `1/(n−1)` data-fit scaling.
pub fn loo_brute_force(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> f64 {
    let n = x.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let keep: Vec<usize> = (0..n).filter(|&k| k != i).collect();
        let xs = x.select_rows(&keep);
        let ys = y.select_rows(&keep);
        let theta = ridge_explicit(&xs, &ys, &vec![1.0; n - 1], lambda);
        let pred = (x.row(i) * &theta)[0];
        total += (y[i] - pred).powi(2);
    }
    total / n as f64
}

/// Check loss `|r| + (2q − 1) r`.
pub fn check_loss(r: f64, q: f64) -> f64 {
    r.abs() + (2.0 * q - 1.0) * r
}

pub fn quantile_objective(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &[f64],
    q: f64,
    theta: &DVector<f64>,
) -> f64 {
    let r = y - x * theta;
    r.iter()
        .zip(w)
        .map(|(ri, wi)| wi * check_loss(*ri, q))
        .sum::<f64>()
        / x.nrows() as f64
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exact unpenalized weighted quantile regression by enumerating every
/// basic solution (fits interpolating `p` observations). Returns the best
/// θ and its objective. Exponential in `p`; keep instances small.
pub fn quantile_enumerate(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &[f64],
    q: f64,
) -> (DVector<f64>, f64) {
    let (n, p) = x.shape();
    let mut idx: Vec<usize> = (0..p).collect();
    let mut best: Option<(DVector<f64>, f64)> = None;
    loop {
        let xs = x.select_rows(&idx);
        let ys = y.select_rows(&idx);
        if let Some(theta) = xs.lu().solve(&ys) {
            if theta.iter().all(|v| v.is_finite()) {
                let obj = quantile_objective(x, y, w, q, &theta);
                if best.as_ref().is_none_or(|b| obj < b.1) {
                    best = Some((theta, obj));
                }
            }
        }
        if !next_combination(&mut idx, n) {
            break;
        }
    }
    best.expect("at least one nonsingular basis")
}

/// Weighted q-quantile of a sample: minimizer of `Σ wᵢ ρ_q(yᵢ − m)` over the
/// sample points.
pub fn weighted_sample_quantile(y: &[f64], w: &[f64], q: f64) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for m in y {
        let v: f64 = y
            .iter()
            .zip(w)
            .map(|(yi, wi)| wi * check_loss(yi - m, q))
            .sum();
        if v < best.0 {
            best = (v, *m);
        }
    }
    best.1
}

/// Index of the smallest value, preferring the last among ties.
pub fn grid_argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v <= values[best] {
            best = i;
        }
    }
    best
}

/// Two-sample Kolmogorov–Smirnov statistic by brute force over the pooled
/// sample.
pub fn ks_brute_force(a: &[f64], b: &[f64]) -> f64 {
    let cdf = |s: &[f64], t: f64| s.iter().filter(|v| **v <= t).count() as f64 / s.len() as f64;
    a.iter()
        .chain(b)
        .map(|t| (cdf(a, *t) - cdf(b, *t)).abs())
        .fold(0.0, f64::max)
}
