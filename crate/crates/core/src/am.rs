//! Additive (mixed) models: a global intercept, unpenalized parametric
//! columns, penalized smooth blocks and ridge-penalized random-intercept
//! blocks in one penalized least-squares system.
//!
//! Every penalty is diagonal, so the system matrix is `X'X + diag(s)`. The
//! random factor with the most levels has a diagonal Gram block (its level
//! counts) and is eliminated through a Schur complement; everything else is
//! solved densely by Cholesky. Smoothing and variance ratios are chosen by
//! coordinate-wise maximization of the profiled REML score.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::data::{mean, Dataset};
use crate::error::{Error, Result, Warning};
use crate::linalg::PivotedQr;
use crate::ols::{build_design, r_squared, total_sum_squares, DesignSpec, RANK_TOL};
use crate::optim::{local_maximize, scan_maximize};
use crate::smooth::{
    profiled_reml, tps_basis_with, SmoothBasis, SplineFunction, DEFAULT_K, DEFAULT_MAX_KNOTS, LOG10_LAMBDA_MAX,
    LOG10_LAMBDA_MIN, SCAN_STEP, SEARCH_XTOL,
};

pub const MAX_OUTER: usize = 50;
pub const OUTER_TOL: f64 = 1e-3;
/// Initial bracket half-width of the local line searches after the first pass.
pub const LOCAL_STEP: f64 = 0.25;

/// `s(covariate)` with basis rank `k`; parses from `x` or `x:12`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoothTerm {
    pub covariate: String,
    pub k: usize,
}

impl SmoothTerm {
    pub fn new(covariate: &str, k: usize) -> Self {
        SmoothTerm { covariate: covariate.to_string(), k }
    }

    pub fn block_name(&self) -> String {
        smooth_block_name(&self.covariate)
    }
}

impl FromStr for SmoothTerm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, k) = match s.split_once(':') {
            Some((name, k)) => {
                let k = k.trim().parse().map_err(|_| Error::InvalidSpec(format!("bad basis rank in `{s}`")))?;
                (name.trim(), k)
            }
            None => (s, DEFAULT_K),
        };
        if name.is_empty() {
            return Err(Error::InvalidSpec(format!("empty smooth term `{s}`")));
        }
        Ok(SmoothTerm::new(name, k))
    }
}

impl fmt::Display for SmoothTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.covariate, self.k)
    }
}

pub fn smooth_block_name(covariate: &str) -> String {
    format!("s({covariate})")
}

pub fn random_block_name(factor: &str) -> String {
    format!("(1|{factor})")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmSpec {
    pub response: String,
    pub smooths: Vec<SmoothTerm>,
    /// Extra unpenalized terms; its own intercept flag is ignored.
    pub parametric: Option<DesignSpec>,
    pub random_intercepts: Vec<String>,
    pub include_intercept: bool,
}

impl AmSpec {
    pub fn new(response: &str) -> Self {
        AmSpec {
            response: response.to_string(),
            smooths: Vec::new(),
            parametric: None,
            random_intercepts: Vec::new(),
            include_intercept: true,
        }
    }

    pub fn smooth(mut self, covariate: &str, k: usize) -> Self {
        self.smooths.push(SmoothTerm::new(covariate, k));
        self
    }

    pub fn parametric(mut self, spec: DesignSpec) -> Self {
        self.parametric = Some(spec);
        self
    }

    pub fn random(mut self, factor: &str) -> Self {
        self.random_intercepts.push(factor.to_string());
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.smooths.iter().enumerate() {
            if self.smooths[..i].iter().any(|o| o.covariate == s.covariate) {
                return Err(Error::InvalidSpec(format!("smooth of `{}` given twice", s.covariate)));
            }
        }
        for (i, f) in self.random_intercepts.iter().enumerate() {
            if self.random_intercepts[..i].contains(f) {
                return Err(Error::InvalidSpec(format!("random intercept for `{f}` given twice")));
            }
        }
        if let Some(p) = &self.parametric {
            p.validate()?;
        }
        Ok(())
    }

    /// Covariates entering the main-effects part (smooth or parametric).
    pub fn covariates(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.smooths.iter().map(|s| s.covariate.as_str()).collect();
        if let Some(p) = &self.parametric {
            for c in p.covariates() {
                if !out.contains(&c) {
                    out.push(c);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmOptions {
    pub max_outer: usize,
    pub tol: f64,
    pub max_knots: usize,
    /// Blocks (`s(x)`, `(1|g)`) whose log10 ratio is held fixed.
    pub fixed_log10_lambda: BTreeMap<String, f64>,
}

impl Default for AmOptions {
    fn default() -> Self {
        AmOptions {
            max_outer: MAX_OUTER,
            tol: OUTER_TOL,
            max_knots: DEFAULT_MAX_KNOTS,
            fixed_log10_lambda: BTreeMap::new(),
        }
    }
}

impl AmOptions {
    pub fn fix(mut self, block: &str, log10_lambda: f64) -> Self {
        self.fixed_log10_lambda.insert(block.to_string(), log10_lambda);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricEstimate {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
}

/// One centered smooth: its values sum to zero over the training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothBlock {
    pub covariate: String,
    pub k: usize,
    pub lambda: f64,
    pub log10_lambda: f64,
    /// Effective degrees of freedom of the centered smooth, in `[1, k - 1]`.
    pub edf: f64,
    /// Coefficients on the uncentered basis (penalized, `1`, `t`).
    pub alpha: Vec<f64>,
    pub function: SplineFunction,
}

impl SmoothBlock {
    pub fn eval(&self, x: f64) -> f64 {
        self.function.eval(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomBlock {
    pub factor: String,
    pub levels: Vec<String>,
    /// Predicted intercepts, one per level.
    pub effects: Vec<f64>,
    /// `sigma_b^2`.
    pub variance: f64,
    /// `sigma^2 / sigma_b^2`.
    pub lambda: f64,
    pub log10_lambda: f64,
    pub edf: f64,
}

impl RandomBlock {
    pub fn effect(&self, level: &str) -> f64 {
        self.levels.iter().position(|l| l == level).map_or(0.0, |i| self.effects[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmFit {
    pub response: String,
    pub n: usize,
    pub include_intercept: bool,
    pub parametric_spec: Option<DesignSpec>,
    /// Intercept first (when present), then parametric columns.
    pub parametric_coefficients: Vec<ParametricEstimate>,
    pub blocks: Vec<SmoothBlock>,
    pub random_effects: Vec<RandomBlock>,
    /// Residual variance `sigma^2`.
    pub sigma2: f64,
    pub rss: f64,
    pub edf: f64,
    /// `1 - rss / tss`, with random effects counted in the fitted values.
    pub r_squared: f64,
    pub reml_score: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    /// REML score after each outer iteration (index 0: starting values).
    pub reml_trace: Vec<f64>,
    pub warnings: Vec<Warning>,
    #[serde(skip)]
    pub fitted: Vec<f64>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl AmFit {
    pub fn block(&self, covariate: &str) -> Option<&SmoothBlock> {
        self.blocks.iter().find(|b| b.covariate == covariate)
    }

    pub fn random(&self, factor: &str) -> Option<&RandomBlock> {
        self.random_effects.iter().find(|b| b.factor == factor)
    }

    pub fn coefficient(&self, name: &str) -> Option<&ParametricEstimate> {
        self.parametric_coefficients.iter().find(|p| p.name == name)
    }
}

enum BlockKind {
    Smooth { basis: SmoothBasis, means: Vec<f64> },
    Random { factor: String, levels: Vec<String> },
    /// Random factor eliminated by the Schur complement.
    Eliminated { factor: String, levels: Vec<String> },
}

struct Block {
    name: String,
    kind: BlockKind,
    /// First column in the dense part and number of columns (for the
    /// eliminated factor: zero columns).
    start: usize,
    len: usize,
    /// Base penalty of each column (zero for unpenalized ones).
    penalty: Vec<f64>,
}

struct Eliminated {
    codes: Vec<usize>,
    counts: DVector<f64>,
    /// `X' F`.
    cross: DMatrix<f64>,
    /// `F' y`.
    fty: DVector<f64>,
}

struct Problem {
    n: usize,
    y: DVector<f64>,
    x: DMatrix<f64>,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    blocks: Vec<Block>,
    elim: Option<(usize, Eliminated)>,
    /// Unpenalized dimension (intercept, parametric, smooth linear terms).
    null_dim: usize,
    parametric_names: Vec<String>,
}

struct Solution {
    chol: Cholesky<f64, Dyn>,
    beta: DVector<f64>,
    b: DVector<f64>,
    diag_penalty: DVector<f64>,
    elim_lambda: f64,
    fitted: DVector<f64>,
    rss: f64,
    penalized_rss: f64,
    reml: f64,
}

impl Problem {
    fn solve(&self, rho: &[f64]) -> Option<Solution> {
        let p = self.x.ncols();
        let mut diag_penalty = DVector::zeros(p);
        let mut log_s = 0.0;
        for (blk, &r) in self.blocks.iter().zip(rho) {
            let lambda = 10f64.powf(r);
            for (j, &s) in blk.penalty.iter().enumerate() {
                if s > 0.0 {
                    diag_penalty[blk.start + j] = lambda * s;
                    log_s += (lambda * s).ln();
                }
            }
        }
        let mut a = self.gram.clone();
        for j in 0..p {
            a[(j, j)] += diag_penalty[j];
        }
        let mut rhs = self.xty.clone();
        let mut elim_lambda = 0.0;
        let mut w = DVector::zeros(0);
        if let Some((bi, e)) = &self.elim {
            elim_lambda = 10f64.powf(rho[*bi]);
            w = e.counts.map(|d| 1.0 / (d + elim_lambda));
            log_s += e.counts.len() as f64 * elim_lambda.ln();
            let mut cw = e.cross.clone();
            for (l, mut col) in cw.column_iter_mut().enumerate() {
                col.scale_mut(w[l]);
            }
            a -= &cw * e.cross.transpose();
            rhs -= &cw * &e.fty;
        }
        let a = (&a + a.transpose()) * 0.5;
        let chol = Cholesky::new(a)?;
        let beta = chol.solve(&rhs);
        let mut fitted = &self.x * &beta;
        let mut b = DVector::zeros(0);
        let mut log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let mut penalized = diag_penalty.iter().zip(beta.iter()).map(|(s, v)| s * v * v).sum::<f64>();
        if let Some((_, e)) = &self.elim {
            b = (&e.fty - e.cross.transpose() * &beta).component_mul(&w);
            for (f, &c) in fitted.iter_mut().zip(&e.codes) {
                *f += b[c];
            }
            log_det += e.counts.iter().map(|d| (d + elim_lambda).ln()).sum::<f64>();
            penalized += elim_lambda * b.norm_squared();
        }
        let rss = (&self.y - &fitted).norm_squared();
        let penalized_rss = rss + penalized;
        let reml = profiled_reml(self.n, self.null_dim, penalized_rss, log_det, log_s);
        Some(Solution { chol, beta, b, diag_penalty, elim_lambda, fitted, rss, penalized_rss, reml })
    }

    fn reml(&self, rho: &[f64]) -> f64 {
        self.solve(rho).map_or(f64::NEG_INFINITY, |s| if s.reml.is_nan() { f64::NEG_INFINITY } else { s.reml })
    }
}

fn build_problem(spec: &AmSpec, ds: &Dataset, opts: &AmOptions) -> Result<Problem> {
    spec.validate()?;
    let y = ds.numeric(&spec.response)?.to_vec();
    let n = y.len();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut parametric_names = Vec::new();
    if spec.include_intercept {
        cols.push(vec![1.0; n]);
        parametric_names.push("(Intercept)".to_string());
    }
    if let Some(p) = &spec.parametric {
        let design = build_design(&DesignSpec { intercept: false, terms: p.terms.clone() }, ds)?;
        for (j, name) in design.names.iter().enumerate() {
            cols.push(design.matrix.column(j).iter().copied().collect());
            parametric_names.push(name.clone());
        }
    }
    let mut null_dim = cols.len();
    let mut unpenalized: Vec<usize> = (0..cols.len()).collect();

    let mut blocks = Vec::new();
    for term in &spec.smooths {
        let x = ds.numeric(&term.covariate).map_err(|e| match e {
            Error::MissingColumn(c) => Error::MissingCovariate(c),
            other => other,
        })?;
        let basis = tps_basis_with(&term.covariate, x, term.k, opts.max_knots)?;
        let r = basis.penalized_dim();
        let start = cols.len();
        let mut means = Vec::with_capacity(r + 1);
        let mut penalty = Vec::with_capacity(r + 1);
        for j in (0..r).chain(std::iter::once(r + 1)) {
            let col: Vec<f64> = basis.basis_matrix.column(j).iter().copied().collect();
            let m = mean(&col);
            cols.push(col.iter().map(|v| v - m).collect());
            means.push(m);
            penalty.push(basis.penalty[j]);
        }
        unpenalized.push(start + r);
        null_dim += 1;
        blocks.push(Block {
            name: term.block_name(),
            kind: BlockKind::Smooth { basis, means },
            start,
            len: r + 1,
            penalty,
        });
    }

    let factors: Vec<_> = spec
        .random_intercepts
        .iter()
        .map(|f| ds.factor(f).map(|fac| (f.clone(), fac.clone())))
        .collect::<Result<_>>()?;
    let elim_index = factors
        .iter()
        .enumerate()
        .max_by_key(|(i, (_, f))| (f.levels().len(), std::cmp::Reverse(*i)))
        .map(|(i, _)| i);
    let mut elim = None;
    for (i, (name, fac)) in factors.iter().enumerate() {
        let levels = fac.levels().to_vec();
        if Some(i) == elim_index {
            blocks.push(Block {
                name: random_block_name(name),
                kind: BlockKind::Eliminated { factor: name.clone(), levels },
                start: 0,
                len: 0,
                penalty: Vec::new(),
            });
            continue;
        }
        let start = cols.len();
        for l in 0..levels.len() {
            cols.push(fac.codes().iter().map(|&c| if c == l { 1.0 } else { 0.0 }).collect());
        }
        blocks.push(Block {
            name: random_block_name(name),
            kind: BlockKind::Random { factor: name.clone(), levels: levels.clone() },
            start,
            len: levels.len(),
            penalty: vec![1.0; levels.len()],
        });
    }

    if n <= null_dim {
        return Err(Error::Underdetermined { n, p: null_dim });
    }
    if !unpenalized.is_empty() {
        let m = DMatrix::from_fn(n, unpenalized.len(), |i, j| cols[unpenalized[j]][i]);
        let rank = PivotedQr::new(m).rank(RANK_TOL);
        if rank < unpenalized.len() {
            return Err(Error::SingularDesign { rank, p: unpenalized.len() });
        }
    }

    let p = cols.len();
    let x = DMatrix::from_fn(n, p, |i, j| cols[j][i]);
    drop(cols);
    let gram = x.transpose() * &x;
    let yv = DVector::from_vec(y);
    let xty = x.transpose() * &yv;

    if let Some(ei) = elim_index {
        let fac = &factors[ei].1;
        let nlev = fac.levels().len();
        let codes = fac.codes().to_vec();
        let mut cross = DMatrix::zeros(p, nlev);
        for j in 0..p {
            let col = x.column(j);
            for (i, &c) in codes.iter().enumerate() {
                cross[(j, c)] += col[i];
            }
        }
        let mut fty = DVector::zeros(nlev);
        for (i, &c) in codes.iter().enumerate() {
            fty[c] += yv[i];
        }
        let counts = DVector::from_iterator(nlev, fac.counts().into_iter().map(|c| c as f64));
        let bi = blocks.iter().position(|b| matches!(b.kind, BlockKind::Eliminated { .. })).unwrap();
        elim = Some((bi, Eliminated { codes, counts, cross, fty }));
    }

    Ok(Problem { n, y: yv, x, gram, xty, blocks, elim, null_dim, parametric_names })
}

/// Fits the additive (mixed) model, choosing every free penalty ratio by REML.
pub fn fit_am(spec: &AmSpec, ds: &Dataset) -> Result<AmFit> {
    fit_am_with(spec, ds, &AmOptions::default())
}

pub fn fit_am_with(spec: &AmSpec, ds: &Dataset, opts: &AmOptions) -> Result<AmFit> {
    let problem = build_problem(spec, ds, opts)?;
    for name in opts.fixed_log10_lambda.keys() {
        if !problem.blocks.iter().any(|b| &b.name == name) {
            return Err(Error::InvalidArgument(format!("no penalized block named `{name}`")));
        }
    }
    let nb = problem.blocks.len();
    let mut rho: Vec<f64> = problem
        .blocks
        .iter()
        .map(|b| opts.fixed_log10_lambda.get(&b.name).copied().unwrap_or(0.0))
        .collect();
    let free: Vec<usize> = (0..nb).filter(|&i| !opts.fixed_log10_lambda.contains_key(&problem.blocks[i].name)).collect();

    let mut best = problem.reml(&rho);
    let mut trace = vec![best];
    let mut converged = free.is_empty();
    let mut outer = 0;
    while !converged && outer < opts.max_outer {
        outer += 1;
        let mut max_move: f64 = 0.0;
        for &j in &free {
            let mut trial = rho.clone();
            let f = |r: f64| {
                trial[j] = r;
                problem.reml(&trial)
            };
            let ls = if outer == 1 {
                scan_maximize(f, LOG10_LAMBDA_MIN, LOG10_LAMBDA_MAX, SCAN_STEP, SEARCH_XTOL)
            } else {
                local_maximize(f, rho[j], LOG10_LAMBDA_MIN, LOG10_LAMBDA_MAX, LOCAL_STEP, SEARCH_XTOL)
            };
            if ls.value >= best {
                max_move = max_move.max((ls.x - rho[j]).abs());
                rho[j] = ls.x;
                best = ls.value;
            }
        }
        trace.push(best);
        converged = max_move < opts.tol;
    }

    let sol = problem
        .solve(&rho)
        .ok_or_else(|| Error::NumericalFailure("penalized system is not positive definite".into()))?;
    let mut warnings = Vec::new();
    if !converged {
        warnings.push(Warning::NonConvergence { iterations: outer });
    }
    for &j in &free {
        if (rho[j] - LOG10_LAMBDA_MIN).abs() < 1e-6 || (rho[j] - LOG10_LAMBDA_MAX).abs() < 1e-6 {
            warnings.push(Warning::Boundary { block: problem.blocks[j].name.clone(), log10_lambda: rho[j] });
        }
    }
    Ok(assemble(spec, &problem, &rho, sol, converged, outer, trace, warnings))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    spec: &AmSpec,
    problem: &Problem,
    rho: &[f64],
    sol: Solution,
    converged: bool,
    outer: usize,
    trace: Vec<f64>,
    warnings: Vec<Warning>,
) -> AmFit {
    let n = problem.n;
    let sigma2 = sol.penalized_rss / (n - problem.null_dim) as f64;
    let inv = sol.chol.inverse();
    let col_edf = |j: usize| 1.0 - sol.diag_penalty[j] * inv[(j, j)];

    let parametric_coefficients = problem
        .parametric_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let se = (sigma2 * inv[(j, j)]).sqrt();
            ParametricEstimate { name: name.clone(), estimate: sol.beta[j], se, t: sol.beta[j] / se }
        })
        .collect();

    let mut total_edf: f64 = (0..problem.x.ncols()).map(col_edf).sum();
    let mut blocks = Vec::new();
    let mut random_effects = Vec::new();
    for (blk, &r) in problem.blocks.iter().zip(rho) {
        let lambda = 10f64.powf(r);
        let edf: f64 = (blk.start..blk.start + blk.len).map(col_edf).sum();
        match &blk.kind {
            BlockKind::Smooth { basis, means } => {
                let rr = basis.penalized_dim();
                let coef = sol.beta.rows(blk.start, blk.len);
                let mut alpha = vec![0.0; basis.k];
                alpha[..rr].copy_from_slice(&coef.as_slice()[..rr]);
                alpha[rr] = -coef.iter().zip(means).map(|(c, m)| c * m).sum::<f64>();
                alpha[rr + 1] = coef[rr];
                blocks.push(SmoothBlock {
                    covariate: basis.covariate.clone(),
                    k: basis.k,
                    lambda,
                    log10_lambda: r,
                    edf,
                    function: basis.function(&alpha),
                    alpha,
                });
            }
            BlockKind::Random { factor, levels } => random_effects.push(RandomBlock {
                factor: factor.clone(),
                levels: levels.clone(),
                effects: sol.beta.rows(blk.start, blk.len).iter().copied().collect(),
                variance: sigma2 / lambda,
                lambda,
                log10_lambda: r,
                edf,
            }),
            BlockKind::Eliminated { factor, levels } => {
                let (_, e) = problem.elim.as_ref().unwrap();
                let lam = sol.elim_lambda;
                let w = e.counts.map(|d| 1.0 / (d + lam));
                let mut g = e.cross.clone();
                for (l, mut col) in g.column_iter_mut().enumerate() {
                    col.scale_mut(w[l]);
                }
                let v = sol.chol.l().solve_lower_triangular(&g).expect("Cholesky factor is nonsingular");
                let edf: f64 = (0..levels.len()).map(|l| 1.0 - lam * (w[l] + v.column(l).norm_squared())).sum();
                total_edf += edf;
                random_effects.push(RandomBlock {
                    factor: factor.clone(),
                    levels: levels.clone(),
                    effects: sol.b.iter().copied().collect(),
                    variance: sigma2 / lam,
                    lambda: lam,
                    log10_lambda: r,
                    edf,
                });
            }
        }
    }
    // keep random blocks in specification order
    random_effects.sort_by_key(|b| spec.random_intercepts.iter().position(|f| f == &b.factor));

    let y = problem.y.as_slice();
    let fitted: Vec<f64> = sol.fitted.iter().copied().collect();
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    AmFit {
        response: spec.response.clone(),
        n,
        include_intercept: spec.include_intercept,
        parametric_spec: spec.parametric.clone(),
        parametric_coefficients,
        blocks,
        random_effects,
        sigma2,
        rss: sol.rss,
        edf: total_edf,
        r_squared: r_squared(sol.rss, total_sum_squares(y)),
        reml_score: sol.reml,
        converged,
        outer_iterations: outer,
        reml_trace: trace,
        warnings,
        fitted,
        residuals,
    }
}

/// Predictions on new rows. Random intercepts of levels not seen in training
/// contribute zero.
pub fn predict(fit: &AmFit, ds: &Dataset) -> Result<Vec<f64>> {
    let n = ds.n();
    let mut out = vec![0.0; n];
    let mut coefs = fit.parametric_coefficients.iter();
    if fit.include_intercept {
        let c = coefs.next().map_or(0.0, |p| p.estimate);
        out.iter_mut().for_each(|v| *v += c);
    }
    if let Some(p) = &fit.parametric_spec {
        let spec = DesignSpec { intercept: false, terms: p.terms.clone() };
        let design = build_design(&spec, ds).map_err(|e| match e {
            Error::UnknownCovariate(c) => Error::MissingCovariate(c),
            other => other,
        })?;
        let rest: Vec<&ParametricEstimate> = coefs.collect();
        if design.names.len() != rest.len() || design.names.iter().zip(&rest).any(|(a, b)| a != &b.name) {
            return Err(Error::InvalidArgument("parametric columns of new data do not match the fit".into()));
        }
        for (j, c) in rest.iter().enumerate() {
            for (v, x) in out.iter_mut().zip(design.matrix.column(j).iter()) {
                *v += c.estimate * x;
            }
        }
    }
    for b in &fit.blocks {
        let x = ds.numeric(&b.covariate).map_err(|_| Error::MissingCovariate(b.covariate.clone()))?;
        for (v, xi) in out.iter_mut().zip(x) {
            *v += b.eval(*xi);
        }
    }
    for r in &fit.random_effects {
        let f = ds.factor(&r.factor).map_err(|_| Error::MissingCovariate(r.factor.clone()))?;
        let lookup: Vec<f64> = f.levels().iter().map(|l| r.effect(l)).collect();
        for (v, &c) in out.iter_mut().zip(f.codes()) {
            *v += lookup[c];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, Factor};
    use crate::smooth::{select_lambda, tps_basis};

    fn wavy(n: usize) -> Dataset {
        let x: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.754_877_666).fract() * 2.0 - 1.0).collect();
        let z: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.569_840_29).fract() * 2.0 - 1.0).collect();
        let noise: Vec<f64> = (0..n).map(|i| ((i as f64 * 12.9898).sin() * 43758.5453).fract() - 0.5).collect();
        let y: Vec<f64> = (0..n).map(|i| (3.0 * x[i]).sin() + z[i] * z[i] + 0.3 * noise[i]).collect();
        Dataset::from_numeric(vec![("x", x), ("z", z), ("y", y)]).unwrap()
    }

    #[test]
    fn smooth_term_parsing() {
        assert_eq!("x:12".parse::<SmoothTerm>().unwrap(), SmoothTerm::new("x", 12));
        assert_eq!("x".parse::<SmoothTerm>().unwrap(), SmoothTerm::new("x", DEFAULT_K));
        assert!("x:a".parse::<SmoothTerm>().is_err());
    }

    #[test]
    fn single_smooth_matches_select_lambda() {
        let ds = wavy(300);
        let fit = fit_am(&AmSpec::new("y").smooth("x", 10), &ds).unwrap();
        let basis = tps_basis("x", ds.numeric("x").unwrap(), 10).unwrap();
        let single = select_lambda(&basis, ds.numeric("y").unwrap()).unwrap();
        let diff = fit.fitted.iter().zip(&single.fitted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "{diff}");
        assert!((fit.reml_score - single.reml_score).abs() < 1e-6);
        assert!(fit.converged);
    }

    #[test]
    fn smooth_contributions_sum_to_zero_and_predict_matches() {
        let ds = wavy(400);
        let fit = fit_am(&AmSpec::new("y").smooth("x", 10).smooth("z", 8), &ds).unwrap();
        for b in &fit.blocks {
            let s: f64 = ds.numeric(&b.covariate).unwrap().iter().map(|&v| b.eval(v)).sum();
            assert!(s.abs() < 1e-6 * 400.0, "{s}");
        }
        let p = predict(&fit, &ds).unwrap();
        for (a, b) in p.iter().zip(&fit.fitted) {
            assert!((a - b).abs() < 1e-10);
        }
        let y = ds.numeric("y").unwrap();
        for i in 0..400 {
            assert!((fit.fitted[i] + fit.residuals[i] - y[i]).abs() <= 1e-15 * (1.0 + y[i].abs()));
        }
        for w in fit.reml_trace.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn balanced_random_intercepts_shrink() {
        let groups = 8;
        let per = 6;
        let mut labels = Vec::new();
        let mut y = Vec::new();
        for g in 0..groups {
            for i in 0..per {
                labels.push(format!("g{g}"));
                y.push(g as f64 * 0.4 + ((i * 7 + g * 3) % 5) as f64 * 0.3);
            }
        }
        let ds = Dataset::new(vec![
            ("y".into(), Column::Numeric(y.clone())),
            ("g".into(), Column::Factor(Factor::from_labels(&labels))),
        ])
        .unwrap();
        let fit = fit_am(&AmSpec::new("y").random("g"), &ds).unwrap();
        let re = fit.random("g").unwrap();
        let ybar = mean(&y);
        for g in 0..groups {
            let yg = mean(&y[g * per..(g + 1) * per]);
            let shrink = per as f64 / (per as f64 + re.lambda);
            assert!((re.effects[g] - shrink * (yg - ybar)).abs() < 1e-9);
        }
        assert!(re.effects.iter().sum::<f64>().abs() < 1e-9);
    }
}
