#![allow(dead_code)]

use ambig::simulate::Draws;
use ambig::smooth::{fit_fixed_lambda, tps_kernel, SmoothBasis, SmoothFit};
use nalgebra::{DMatrix, DVector};

pub fn rescale(x: &[f64]) -> Vec<f64> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    x.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Natural cubic smoothing spline (Reinsch): minimizes
/// `sum (y - g)^2 + lambda * int g''^2` on `t` rescaled to [0, 1].
/// Values of `x` must be distinct.
pub fn reinsch(x: &[f64], y: &[f64], lambda: f64) -> Vec<f64> {
    let t = rescale(x);
    let n = t.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| t[a].total_cmp(&t[b]));
    let ts: Vec<f64> = order.iter().map(|&i| t[i]).collect();
    let ys = DVector::from_iterator(n, order.iter().map(|&i| y[i]));
    let h: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    let mut q = DMatrix::zeros(n, n - 2);
    let mut r = DMatrix::zeros(n - 2, n - 2);
    for j in 1..n - 1 {
        let c = j - 1;
        q[(j - 1, c)] = 1.0 / h[j - 1];
        q[(j, c)] = -1.0 / h[j - 1] - 1.0 / h[j];
        q[(j + 1, c)] = 1.0 / h[j];
        r[(c, c)] = (h[j - 1] + h[j]) / 3.0;
        if c + 1 < n - 2 {
            r[(c, c + 1)] = h[j] / 6.0;
            r[(c + 1, c)] = h[j] / 6.0;
        }
    }
    let k = &q * r.try_inverse().unwrap() * q.transpose();
    let a = DMatrix::identity(n, n) + k * lambda;
    let g = a.lu().solve(&ys).unwrap();
    let mut out = vec![0.0; n];
    for (pos, &i) in order.iter().enumerate() {
        out[i] = g[pos];
    }
    out
}

/// Thin-plate spline through its defining linear system:
/// `(E + lambda I) delta + T beta = y`, `T' delta = 0`.
pub fn wahba(x: &[f64], y: &[f64], lambda: f64) -> Vec<f64> {
    let t = rescale(x);
    let n = t.len();
    let mut a = DMatrix::zeros(n + 2, n + 2);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = tps_kernel(t[i] - t[j]);
        }
        a[(i, i)] += lambda;
        a[(i, n)] = 1.0;
        a[(i, n + 1)] = t[i];
        a[(n, i)] = 1.0;
        a[(n + 1, i)] = t[i];
    }
    let mut rhs = DVector::zeros(n + 2);
    rhs.rows_mut(0, n).copy_from_slice(y);
    let sol = a.lu().solve(&rhs).unwrap();
    (0..n)
        .map(|i| {
            let mut s = sol[n] + sol[n + 1] * t[i];
            for j in 0..n {
                s += sol[j] * tps_kernel(t[i] - t[j]);
            }
            s
        })
        .collect()
}

/// `B (B'B + lambda S)^{-1} B' y` by dense solve.
pub fn generalized_ridge(basis: &SmoothBasis, y: &[f64], lambda: f64) -> Vec<f64> {
    let b = &basis.basis_matrix;
    let lhs = b.transpose() * b + basis.penalty_matrix() * lambda;
    let rhs = b.transpose() * DVector::from_column_slice(y);
    let alpha = lhs.lu().solve(&rhs).unwrap();
    (b * alpha).iter().copied().collect()
}

/// REML from its definition: penalized RSS, `ln|B'B + lambda S|` by
/// Cholesky and the product of the nonzero penalty eigenvalues.
pub fn reml_from_definition(fit: &SmoothFit, y: &[f64]) -> f64 {
    let basis = &fit.basis;
    let n = y.len() as f64;
    let b = &basis.basis_matrix;
    let alpha = DVector::from_column_slice(&fit.alpha);
    let s = basis.penalty_matrix() * fit.lambda;
    let resid = DVector::from_column_slice(y) - b * &alpha;
    let d = resid.norm_squared() + (alpha.transpose() * &s * &alpha)[0];
    let m = basis.null_dim as f64;
    let chol = (b.transpose() * b + &s).cholesky().unwrap();
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let log_s: f64 = basis.penalty.iter().filter(|&&p| p > 0.0).map(|p| (fit.lambda * p).ln()).sum();
    -0.5 * ((n - m) * ((2.0 * std::f64::consts::PI * d / (n - m)).ln() + 1.0) + log_det - log_s)
}

/// REML maximizer over an 81-point grid on [-8, 12], refined by a parabola
/// through the best grid point and its neighbours.
pub fn grid_reml_argmax(basis: &SmoothBasis, y: &[f64]) -> f64 {
    let grid: Vec<f64> = (0..81).map(|i| -8.0 + 0.25 * i as f64).collect();
    let scores: Vec<f64> =
        grid.iter().map(|&r| fit_fixed_lambda(basis, y, 10f64.powf(r)).unwrap().reml_score).collect();
    let best = (0..81).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
    if best == 0 || best == 80 {
        return grid[best];
    }
    let (f0, f1, f2) = (scores[best - 1], scores[best], scores[best + 1]);
    let denom = f0 - 2.0 * f1 + f2;
    if denom >= 0.0 {
        return grid[best];
    }
    grid[best] + 0.125 * (f0 - f2) / denom
}

pub fn ols_line(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let b = sxy / sxx;
    x.iter().map(|v| my + b * (v - mx)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

pub fn cor(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let sab: f64 = a.iter().zip(b).map(|(u, v)| (u - ma) * (v - mb)).sum();
    let saa: f64 = a.iter().map(|u| (u - ma).powi(2)).sum();
    let sbb: f64 = b.iter().map(|v| (v - mb).powi(2)).sum();
    sab / (saa * sbb).sqrt()
}

/// Distinct uniform draws on [lo, hi].
pub fn uniform_points(d: &mut Draws, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| d.uniform(lo, hi)).collect()
}

/// Ten smooth test functions with random amplitude, frequency and phase.
pub fn random_function(d: &mut Draws) -> impl Fn(f64) -> f64 {
    let a = d.uniform(0.5, 2.0);
    let w = d.uniform(0.5, 4.0);
    let p = d.uniform(0.0, std::f64::consts::TAU);
    let q = d.uniform(-1.0, 1.0);
    move |x| a * (w * x + p).sin() + q * x * x
}
