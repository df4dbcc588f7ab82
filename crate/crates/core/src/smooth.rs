//! Low-rank thin-plate regression splines in one covariate.
//!
//! The covariate is rescaled to `t in [0, 1]`. On the distinct values
//! (knots) `t_1..t_m` the cubic thin-plate kernel `E_ij = |t_i - t_j|^3 / 12`
//! gives the wiggliness `integral f''(t)^2 dt = d^T E d` of
//! `f(t) = sum_i d_i |t - t_i|^3 / 12 + a + b t` whenever `d` is orthogonal to
//! the null-space columns `(1, t)`. Projecting the kernel onto that
//! constraint space and keeping its leading `k - 2` eigenvectors gives the
//! penalized basis functions; their penalty is diagonal. The two null-space
//! columns `(1, t)` are appended unpenalized, so a basis of rank `k` has `k`
//! coefficients and `lambda = 0, k = m` reproduces the interpolating spline.
//!
//! Smoothing parameters are on the scale of the rescaled covariate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::mean;
use crate::error::{Error, Result, Warning};
use crate::linalg::{leading_eigenpairs, sym_eigen_desc, PivotedQr};
use crate::optim::scan_maximize;

pub const NULL_DIM: usize = 2;
pub const DEFAULT_K: usize = 10;
/// Larger sets of distinct covariate values are thinned to this many knots.
pub const DEFAULT_MAX_KNOTS: usize = 2000;
pub const LOG10_LAMBDA_MIN: f64 = -8.0;
pub const LOG10_LAMBDA_MAX: f64 = 12.0;
/// Grid spacing of the initial REML scan in log10(lambda).
pub const SCAN_STEP: f64 = 0.5;
/// Final tolerance of the REML line search in log10(lambda).
pub const SEARCH_XTOL: f64 = 1e-6;
/// Penalty eigenvalues are clamped to this fraction of the largest.
pub const EIGEN_CLAMP: f64 = 1e-12;

#[inline]
pub fn tps_kernel(r: f64) -> f64 {
    let r = r.abs();
    r * r * r / 12.0
}

/// A fitted spline in closed form:
/// `f(x) = sum_i delta_i eta(|t - knot_i|) + intercept + slope * t` with
/// `t = (x - x_min) / x_scale` and `eta(r) = r^3 / 12`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineFunction {
    pub x_min: f64,
    pub x_scale: f64,
    pub knots: Vec<f64>,
    pub delta: Vec<f64>,
    pub intercept: f64,
    pub slope: f64,
}

impl SplineFunction {
    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.x_min) / self.x_scale;
        let mut s = self.intercept + self.slope * t;
        for (k, d) in self.knots.iter().zip(&self.delta) {
            s += d * tps_kernel(t - k);
        }
        s
    }

    pub fn eval_many(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.eval(v)).collect()
    }

    /// Covariate range covered by the knots.
    pub fn range(&self) -> (f64, f64) {
        let lo = self.knots.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.knots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (self.x_min + lo * self.x_scale, self.x_min + hi * self.x_scale)
    }
}

#[derive(Debug, Clone)]
pub struct SmoothBasis {
    pub covariate: String,
    pub k: usize,
    /// Covariate values the basis was built on (original scale).
    pub x: Vec<f64>,
    pub x_min: f64,
    pub x_scale: f64,
    /// Knot locations on the rescaled covariate.
    pub knots: Vec<f64>,
    /// `m x (k - 2)`; column `j` maps knots to penalized basis function `j`.
    pub kernel_weights: DMatrix<f64>,
    /// `n x k`: `k - 2` penalized columns, then `1` and `t`.
    pub basis_matrix: DMatrix<f64>,
    /// Diagonal of the penalty; zero on the two null-space columns.
    pub penalty: Vec<f64>,
    pub null_dim: usize,
}

/// Builds a rank-`k` basis with the default knot cap.
pub fn tps_basis(covariate: &str, x: &[f64], k: usize) -> Result<SmoothBasis> {
    tps_basis_with(covariate, x, k, DEFAULT_MAX_KNOTS)
}

pub fn tps_basis_with(covariate: &str, x: &[f64], k: usize, max_knots: usize) -> Result<SmoothBasis> {
    if k < 3 {
        return Err(Error::RankTooSmall(k));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("covariate `{covariate}` has non-finite values")));
    }
    let mut distinct: Vec<f64> = x.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::TooFewDistinctValues { distinct: distinct.len(), k });
    }
    if k > x.len() {
        return Err(Error::InvalidArgument(format!("basis rank {k} exceeds sample size {}", x.len())));
    }
    let x_min = distinct[0];
    let x_scale = distinct[distinct.len() - 1] - x_min;

    let m_all = distinct.len();
    let cap = max_knots.max(k);
    let knot_values: Vec<f64> = if m_all > cap {
        (0..cap).map(|i| distinct[(i as f64 * (m_all - 1) as f64 / (cap - 1) as f64).round() as usize]).collect()
    } else {
        distinct
    };
    let knots: Vec<f64> = knot_values.iter().map(|v| (v - x_min) / x_scale).collect();
    let m = knots.len();
    let r = k - NULL_DIM;

    let e = DMatrix::from_fn(m, m, |i, j| tps_kernel(knots[i] - knots[j]));
    let t_mat = DMatrix::from_fn(m, 2, |i, j| if j == 0 { 1.0 } else { knots[i] });
    let qt = PivotedQr::new(t_mat).thin_q();
    let project = |v: &DMatrix<f64>| -> DMatrix<f64> { v - &qt * (qt.transpose() * v) };

    let block = (2 * r + 8).min(m - NULL_DIM);
    let (values, vectors) = if m <= 300 || 2 * block >= m || block <= r {
        let pep = project(&project(&e).transpose());
        let (vals, vecs) = sym_eigen_desc((&pep + pep.transpose()) * 0.5);
        (vals[..r].to_vec(), vecs.columns(0, r).into_owned())
    } else {
        let start = DMatrix::from_fn(m, block, |i, j| ((j + 1) as f64 * std::f64::consts::PI * knots[i]).cos());
        let start = project(&start);
        leading_eigenpairs(|v| project(&(&e * project(v))), start, r, 1e-10, 500)
    };
    if values.iter().any(|&v| v <= 0.0) {
        return Err(Error::NumericalFailure("thin-plate kernel is not positive on the constraint space".into()));
    }

    // evaluate the penalized functions at the data, then scale each to unit
    // mean square so the normal equations stay well conditioned
    let n = x.len();
    let mut weights = vectors;
    let mut basis = DMatrix::zeros(n, k);
    let mut row = DVector::zeros(m);
    for (i, &xi) in x.iter().enumerate() {
        let t = (xi - x_min) / x_scale;
        for (l, kn) in knots.iter().enumerate() {
            row[l] = tps_kernel(t - kn);
        }
        for j in 0..r {
            basis[(i, j)] = row.dot(&weights.column(j));
        }
        basis[(i, r)] = 1.0;
        basis[(i, r + 1)] = t;
    }
    let mut penalty = vec![0.0; k];
    for j in 0..r {
        let rms = (basis.column(j).norm_squared() / n as f64).sqrt();
        let scale = if rms > 0.0 { 1.0 / rms } else { 1.0 };
        basis.column_mut(j).scale_mut(scale);
        weights.column_mut(j).scale_mut(scale);
        penalty[j] = values[j] * scale * scale;
    }
    let pmax = penalty.iter().copied().fold(0.0, f64::max);
    for p in penalty.iter_mut().take(r) {
        *p = p.max(EIGEN_CLAMP * pmax);
    }

    Ok(SmoothBasis {
        covariate: covariate.to_string(),
        k,
        x: x.to_vec(),
        x_min,
        x_scale,
        knots,
        kernel_weights: weights,
        basis_matrix: basis,
        penalty,
        null_dim: NULL_DIM,
    })
}

impl SmoothBasis {
    pub fn n(&self) -> usize {
        self.basis_matrix.nrows()
    }

    pub fn penalized_dim(&self) -> usize {
        self.k - self.null_dim
    }

    pub fn penalty_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.penalty))
    }

    /// Basis rows at new covariate values.
    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let r = self.penalized_dim();
        let m = self.knots.len();
        let mut out = DMatrix::zeros(x.len(), self.k);
        let mut row = DVector::zeros(m);
        for (i, &xi) in x.iter().enumerate() {
            let t = (xi - self.x_min) / self.x_scale;
            for (l, kn) in self.knots.iter().enumerate() {
                row[l] = tps_kernel(t - kn);
            }
            for j in 0..r {
                out[(i, j)] = row.dot(&self.kernel_weights.column(j));
            }
            out[(i, r)] = 1.0;
            out[(i, r + 1)] = t;
        }
        out
    }

    /// Closed form of `basis * alpha`.
    pub fn function(&self, alpha: &[f64]) -> SplineFunction {
        let r = self.penalized_dim();
        let delta = &self.kernel_weights * DVector::from_column_slice(&alpha[..r]);
        SplineFunction {
            x_min: self.x_min,
            x_scale: self.x_scale,
            knots: self.knots.clone(),
            delta: delta.iter().copied().collect(),
            intercept: alpha[r],
            slope: alpha[r + 1],
        }
    }

    /// Coefficients representing `f(x) = a + b x` exactly.
    pub fn linear_coefficients(&self, a: f64, b: f64) -> Vec<f64> {
        let mut alpha = vec![0.0; self.k];
        let r = self.penalized_dim();
        alpha[r] = a + b * self.x_min;
        alpha[r + 1] = b * self.x_scale;
        alpha
    }

    pub fn penalty_quadratic_form(&self, alpha: &[f64]) -> f64 {
        alpha.iter().zip(&self.penalty).map(|(a, s)| s * a * a).sum()
    }
}

#[derive(Debug, Clone)]
pub struct SmoothFit {
    pub basis: SmoothBasis,
    pub lambda: f64,
    pub alpha: Vec<f64>,
    pub fitted: Vec<f64>,
    pub rss: f64,
    /// `lambda * alpha^T S alpha`.
    pub penalty_value: f64,
    pub edf: f64,
    /// Log restricted likelihood with the residual variance profiled out.
    pub reml_score: f64,
    pub warnings: Vec<Warning>,
}

impl SmoothFit {
    pub fn function(&self) -> SplineFunction {
        self.basis.function(&self.alpha)
    }

    pub fn residuals(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.fitted).map(|(a, b)| a - b).collect()
    }

    pub fn summary(&self) -> SmoothSummary {
        SmoothSummary {
            covariate: self.basis.covariate.clone(),
            k: self.basis.k,
            lambda: self.lambda,
            log10_lambda: self.lambda.log10(),
            edf: self.edf,
            reml_score: self.reml_score,
            alpha: self.alpha.clone(),
            function: self.function(),
        }
    }
}

/// Serializable form of a single-covariate fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothSummary {
    pub covariate: String,
    pub k: usize,
    pub lambda: f64,
    pub log10_lambda: f64,
    pub edf: f64,
    pub reml_score: f64,
    pub alpha: Vec<f64>,
    pub function: SplineFunction,
}

/// Gaussian REML with the scale profiled out:
/// `-1/2 [ (n - M)(ln(2 pi D / (n - M)) + 1) + ln|X'X + S| - ln|S|_+ ]`
/// where `D` is the penalized residual sum of squares and `M` the
/// dimension of the unpenalized space.
pub fn profiled_reml(n: usize, null_dim: usize, penalized_rss: f64, log_det_xtx_s: f64, log_det_s_plus: f64) -> f64 {
    let dof = (n - null_dim) as f64;
    -0.5 * (dof * ((2.0 * std::f64::consts::PI * penalized_rss / dof).ln() + 1.0) + log_det_xtx_s - log_det_s_plus)
}

/// Minimizes `|y - B alpha|^2 + lambda alpha^T S alpha` by QR of the
/// augmented system `[B; sqrt(lambda S)]`.
pub fn fit_fixed_lambda(basis: &SmoothBasis, y: &[f64], lambda: f64) -> Result<SmoothFit> {
    let n = basis.n();
    let k = basis.k;
    if y.len() != n {
        return Err(Error::LengthMismatch { name: "response".into(), len: y.len(), expected: n });
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let r = basis.penalized_dim();
    let extra = if lambda > 0.0 { r } else { 0 };
    let mut aug = DMatrix::zeros(n + extra, k);
    aug.view_mut((0, 0), (n, k)).copy_from(&basis.basis_matrix);
    for j in 0..extra {
        aug[(n + j, j)] = (lambda * basis.penalty[j]).sqrt();
    }
    let qr = PivotedQr::new(aug);
    if qr.rank(1e-13) < k {
        return Err(Error::NumericalFailure(format!("augmented spline system is singular at lambda = {lambda}")));
    }
    let mut yaug = DVector::zeros(n + extra);
    yaug.rows_mut(0, n).copy_from_slice(y);
    let alpha = qr.solve(&yaug);
    let fitted = &basis.basis_matrix * &alpha;
    let rss: f64 = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    let alpha: Vec<f64> = alpha.iter().copied().collect();
    let penalty_value = lambda * basis.penalty_quadratic_form(&alpha);

    let q = qr.thin_q();
    let edf = q.rows(0, n).norm_squared();

    let reml_score = if lambda > 0.0 {
        let log_det = 2.0 * qr.log_abs_det_r();
        let log_s: f64 = basis.penalty[..r].iter().map(|s| (lambda * s).ln()).sum();
        profiled_reml(n, basis.null_dim, rss + penalty_value, log_det, log_s)
    } else {
        f64::NAN
    };

    Ok(SmoothFit {
        basis: basis.clone(),
        lambda,
        alpha,
        fitted: fitted.iter().copied().collect(),
        rss,
        penalty_value,
        edf,
        reml_score,
        warnings: Vec::new(),
    })
}

/// Chooses lambda by maximizing REML over log10(lambda) in [-8, 12].
pub fn select_lambda(basis: &SmoothBasis, y: &[f64]) -> Result<SmoothFit> {
    let score = |rho: f64| fit_fixed_lambda(basis, y, 10f64.powf(rho)).map_or(f64::NEG_INFINITY, |f| f.reml_score);
    let ls = scan_maximize(score, LOG10_LAMBDA_MIN, LOG10_LAMBDA_MAX, SCAN_STEP, SEARCH_XTOL);
    let mut fit = fit_fixed_lambda(basis, y, 10f64.powf(ls.x))?;
    if ls.at_bound {
        fit.warnings.push(Warning::Boundary { block: format!("s({})", basis.covariate), log10_lambda: ls.x });
    }
    Ok(fit)
}

/// Maximum number of rank doublings attempted by [`rank_check`].
pub const MAX_DOUBLINGS: usize = 4;
/// A residual spline counts as significant when its edf exceeds the null
/// space dimension by more than this and its F statistic exceeds 4
/// (the square of the `|t| > 2` rule).
pub const RESIDUAL_EDF_MARGIN: f64 = 0.5;
pub const RESIDUAL_F_THRESHOLD: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankStep {
    pub k: usize,
    pub residual_k: usize,
    pub residual_edf: f64,
    pub f_statistic: f64,
    pub significant: bool,
    pub residual_rmse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankOutcome {
    /// No significant structure in the residuals at `k_final`.
    Sufficient,
    /// Still significant after the maximum number of doublings.
    Insufficient,
    /// A further doubling would exceed the number of distinct values.
    CannotDouble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCheck {
    pub k_initial: usize,
    /// Rank recommended by the procedure (the last rank checked).
    pub k_final: usize,
    pub outcome: RankOutcome,
    pub steps: Vec<RankStep>,
}

impl RankCheck {
    pub fn sufficient(&self) -> bool {
        self.outcome == RankOutcome::Sufficient
    }
}

fn distinct_count(x: &[f64]) -> usize {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// Residual-spline check of the basis rank: a rank-`2k` spline is fitted to
/// the residuals; if it is significant the smooth is refitted with `2k` and
/// the check repeats, for at most [`MAX_DOUBLINGS`] doublings.
pub fn rank_check(basis: &SmoothBasis, fit: &SmoothFit, y: &[f64]) -> Result<RankCheck> {
    let n = basis.n();
    let limit = distinct_count(&basis.x).min(n);
    if 2 * basis.k > limit {
        return Err(Error::CannotDouble { k: basis.k, n: limit });
    }
    let mut steps = Vec::new();
    let mut k = basis.k;
    let mut current = fit.clone();
    let mut doublings = 0;
    loop {
        let resid = current.residuals(y);
        let rbasis = tps_basis(&basis.covariate, &basis.x, 2 * k)?;
        let rfit = select_lambda(&rbasis, &resid)?;
        let m = mean(&rfit.fitted);
        let explained: f64 = rfit.fitted.iter().map(|f| (f - m).powi(2)).sum();
        let num_df = (rfit.edf - 1.0).max(f64::EPSILON);
        let den_df = (n as f64 - rfit.edf).max(1.0);
        let f_statistic = (explained / num_df) / (rfit.rss / den_df);
        let significant = rfit.edf > basis.null_dim as f64 + RESIDUAL_EDF_MARGIN && f_statistic > RESIDUAL_F_THRESHOLD;
        steps.push(RankStep {
            k,
            residual_k: 2 * k,
            residual_edf: rfit.edf,
            f_statistic,
            significant,
            residual_rmse: (current.rss / n as f64).sqrt(),
        });
        if !significant {
            return Ok(RankCheck { k_initial: basis.k, k_final: k, outcome: RankOutcome::Sufficient, steps });
        }
        if doublings == MAX_DOUBLINGS {
            return Ok(RankCheck { k_initial: basis.k, k_final: k, outcome: RankOutcome::Insufficient, steps });
        }
        if 4 * k > limit {
            return Ok(RankCheck { k_initial: basis.k, k_final: k, outcome: RankOutcome::CannotDouble, steps });
        }
        k *= 2;
        doublings += 1;
        current = select_lambda(&tps_basis(&basis.covariate, &basis.x, k)?, y)?;
    }
}
