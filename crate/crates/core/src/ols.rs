//! Parametric design matrices, least-squares fits and two-way ANOVA.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Deserialize, Serialize, Serializer};

use crate::data::{Column, Dataset, Factor};
use crate::error::{Error, Result, Warning};
use crate::linalg::PivotedQr;

/// Columns whose pivoted-QR diagonal falls below this fraction of the
/// largest one are treated as linearly dependent.
pub const RANK_TOL: f64 = 1e-10;

/// Significance rule used throughout: `|t| > 2`.
pub const T_THRESHOLD: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Power {
    pub covariate: String,
    pub degree: u32,
}

impl Power {
    pub fn new(covariate: &str, degree: u32) -> Self {
        Power { covariate: covariate.to_string(), degree }
    }

    fn name(&self) -> String {
        if self.degree == 1 {
            self.covariate.clone()
        } else {
            format!("{}^{}", self.covariate, self.degree)
        }
    }
}

impl FromStr for Power {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (cov, deg) = match s.split_once('^') {
            Some((c, d)) => {
                let d: u32 = d.trim().parse().map_err(|_| Error::InvalidSpec(format!("bad power `{s}`")))?;
                (c.trim(), d)
            }
            None => (s, 1),
        };
        if cov.is_empty() || deg == 0 {
            return Err(Error::InvalidSpec(format!("bad power `{s}`")));
        }
        Ok(Power::new(cov, deg))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Power(Power),
    /// Elementwise product of powers of distinct covariates.
    Product(Vec<Power>),
    FactorMain(String),
    FactorInteraction(String, String),
}

impl Term {
    pub fn power(covariate: &str, degree: u32) -> Self {
        Term::Power(Power::new(covariate, degree))
    }

    pub fn linear(covariate: &str) -> Self {
        Term::power(covariate, 1)
    }

    pub fn product(factors: &[(&str, u32)]) -> Self {
        Term::Product(factors.iter().map(|&(c, d)| Power::new(c, d)).collect())
    }

    pub fn name(&self) -> String {
        match self {
            Term::Power(p) => p.name(),
            Term::Product(ps) => ps.iter().map(Power::name).collect::<Vec<_>>().join(":"),
            Term::FactorMain(f) => f.clone(),
            Term::FactorInteraction(a, b) => format!("{a}:{b}"),
        }
    }

    pub fn covariates(&self) -> Vec<&str> {
        match self {
            Term::Power(p) => vec![p.covariate.as_str()],
            Term::Product(ps) => ps.iter().map(|p| p.covariate.as_str()).collect(),
            Term::FactorMain(f) => vec![f.as_str()],
            Term::FactorInteraction(a, b) => vec![a.as_str(), b.as_str()],
        }
    }

    pub fn is_interaction(&self) -> bool {
        matches!(self, Term::Product(_) | Term::FactorInteraction(..))
    }

    /// Powers making up the term (a single power for main effects).
    pub fn powers(&self) -> Vec<Power> {
        match self {
            Term::Power(p) => vec![p.clone()],
            Term::Product(ps) => ps.clone(),
            _ => Vec::new(),
        }
    }

    /// Rewrites degree-one powers of factor columns as factor terms.
    fn resolve(self, ds: &Dataset) -> Term {
        let is_factor = |c: &str| matches!(ds.column(c), Ok(Column::Factor(_)));
        match self {
            Term::Power(p) if p.degree == 1 && is_factor(&p.covariate) => Term::FactorMain(p.covariate),
            Term::Product(ps)
                if ps.len() == 2 && ps.iter().all(|p| p.degree == 1 && is_factor(&p.covariate)) =>
            {
                Term::FactorInteraction(ps[0].covariate.clone(), ps[1].covariate.clone())
            }
            t => t,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Term {
    type Err = Error;

    /// `x`, `x^2`, `x:z`, `x^2:z`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<Power> = s.split(':').map(str::parse).collect::<Result<_>>()?;
        match parts.len() {
            0 => Err(Error::InvalidSpec("empty term".into())),
            1 => Ok(Term::Power(parts.into_iter().next().unwrap())),
            _ => Ok(Term::Product(parts)),
        }
    }
}

/// Ordered list of terms with an optional leading intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub intercept: bool,
    pub terms: Vec<Term>,
}

impl DesignSpec {
    pub fn new(intercept: bool, terms: Vec<Term>) -> Result<Self> {
        let spec = DesignSpec { intercept, terms };
        spec.validate()?;
        Ok(spec)
    }

    pub fn intercept_only() -> Self {
        DesignSpec { intercept: true, terms: Vec::new() }
    }

    /// Parses a list of term expressions. Besides single terms (`x`, `x^2`,
    /// `x:z`) an expression may cross groups with `*`, each group listing
    /// alternatives with `+`: `(a+a^2)*lw*ls` expands to every main effect
    /// and interaction, ordered by interaction order.
    pub fn parse(intercept: bool, exprs: &[&str]) -> Result<Self> {
        let mut terms = Vec::new();
        for e in exprs {
            let e = e.trim();
            if e.contains('*') || e.contains('+') {
                let groups: Vec<Vec<Power>> = e
                    .split('*')
                    .map(|g| {
                        g.trim()
                            .trim_start_matches('(')
                            .trim_end_matches(')')
                            .split('+')
                            .map(str::parse)
                            .collect::<Result<Vec<Power>>>()
                    })
                    .collect::<Result<_>>()?;
                for t in crossed_terms(&groups) {
                    if !terms.contains(&t) {
                        terms.push(t);
                    }
                }
            } else {
                terms.push(e.parse()?);
            }
        }
        DesignSpec::new(intercept, terms)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.terms.iter().enumerate() {
            if self.terms[..i].contains(t) {
                return Err(Error::InvalidSpec(format!("duplicate term `{t}`")));
            }
            if let Term::Product(ps) = t {
                if ps.len() < 2 {
                    return Err(Error::InvalidSpec(format!("product `{t}` needs two or more factors")));
                }
                for (j, p) in ps.iter().enumerate() {
                    if ps[..j].iter().any(|q| q.covariate == p.covariate) {
                        return Err(Error::InvalidSpec(format!("product `{t}` repeats covariate `{}`", p.covariate)));
                    }
                }
            }
            if let Term::FactorInteraction(a, b) = t {
                if a == b {
                    return Err(Error::InvalidSpec(format!("interaction `{t}` repeats a factor")));
                }
            }
        }
        Ok(())
    }

    pub fn covariates(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for t in &self.terms {
            for c in t.covariates() {
                if !out.contains(&c) {
                    out.push(c);
                }
            }
        }
        out
    }

    pub fn with_term(&self, term: Term) -> Result<Self> {
        let mut terms = self.terms.clone();
        terms.push(term);
        DesignSpec::new(self.intercept, terms)
    }
}

/// Every selection of at most one alternative per group, grouped by
/// interaction order; within an order, group subsets are lexicographic and
/// the first group's alternatives vary fastest.
pub fn crossed_terms(groups: &[Vec<Power>]) -> Vec<Term> {
    let g = groups.len();
    let mut out = Vec::new();
    for order in 1..=g {
        for subset in subsets_of_size(g, order) {
            let mut idx = vec![0usize; order];
            loop {
                let powers: Vec<Power> = subset.iter().zip(&idx).map(|(&gi, &ai)| groups[gi][ai].clone()).collect();
                out.push(if powers.len() == 1 {
                    Term::Power(powers.into_iter().next().unwrap())
                } else {
                    Term::Product(powers)
                });
                // odometer with the first position fastest
                let mut pos = 0;
                loop {
                    if pos == order {
                        break;
                    }
                    idx[pos] += 1;
                    if idx[pos] < groups[subset[pos]].len() {
                        break;
                    }
                    idx[pos] = 0;
                    pos += 1;
                }
                if pos == order {
                    break;
                }
            }
        }
    }
    out
}

fn subsets_of_size(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Realized numeric design with named columns.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub names: Vec<String>,
    pub matrix: DMatrix<f64>,
    pub intercept: bool,
    pub rank: usize,
    pub warnings: Vec<Warning>,
}

impl DesignMatrix {
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>, intercept: bool) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        let p = columns.len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidArgument("design columns differ in length".into()));
        }
        let matrix = DMatrix::from_fn(n, p, |i, j| columns[j][i]);
        let rank = if n == 0 || p == 0 { 0 } else { PivotedQr::new(matrix.clone()).rank(RANK_TOL) };
        let warnings = if rank < p { vec![Warning::RankDeficient { rank, p }] } else { Vec::new() };
        Ok(DesignMatrix { names, matrix, intercept, rank, warnings })
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.names.iter().position(|n| n == name).map(|j| self.matrix.column(j).iter().copied().collect())
    }
}

/// Sum-to-zero coding: for two levels the first level is -1 and the second
/// +1; with more levels, column `j` is +1 on level `j` and -1 on level 0.
fn factor_columns(name: &str, f: &Factor) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let nlev = f.levels().len();
    if nlev < 2 {
        return Err(Error::DegenerateFactor(name.to_string()));
    }
    let mut names = Vec::new();
    let mut cols = Vec::new();
    for lev in 1..nlev {
        names.push(if nlev == 2 { name.to_string() } else { format!("{name}[{}]", f.levels()[lev]) });
        cols.push(
            f.codes()
                .iter()
                .map(|&c| if c == lev { 1.0 } else if c == 0 { -1.0 } else { 0.0 })
                .collect(),
        );
    }
    Ok((names, cols))
}

fn power_column(ds: &Dataset, p: &Power) -> Result<Vec<f64>> {
    let v = match ds.column(&p.covariate) {
        Ok(Column::Numeric(v)) => v,
        Ok(Column::Factor(_)) => return Err(Error::NotNumeric(p.covariate.clone())),
        Err(_) => return Err(Error::UnknownCovariate(p.covariate.clone())),
    };
    Ok(v.iter().map(|x| x.powi(p.degree as i32)).collect())
}

fn factor_of<'a>(ds: &'a Dataset, name: &str) -> Result<&'a Factor> {
    match ds.column(name) {
        Ok(Column::Factor(f)) => Ok(f),
        Ok(Column::Numeric(_)) => Err(Error::NotFactor(name.to_string())),
        Err(_) => Err(Error::UnknownCovariate(name.to_string())),
    }
}

/// Realizes `spec` on `ds`. Rank deficiency is reported in
/// [`DesignMatrix::warnings`], not raised.
pub fn build_design(spec: &DesignSpec, ds: &Dataset) -> Result<DesignMatrix> {
    spec.validate()?;
    let n = ds.n();
    let mut names = Vec::new();
    let mut cols = Vec::new();
    if spec.intercept {
        names.push("(Intercept)".to_string());
        cols.push(vec![1.0; n]);
    }
    for term in spec.terms.iter().cloned().map(|t| t.resolve(ds)) {
        match &term {
            Term::Power(p) => {
                cols.push(power_column(ds, p)?);
                names.push(term.name());
            }
            Term::Product(ps) => {
                let mut col = vec![1.0; n];
                for p in ps {
                    for (c, v) in col.iter_mut().zip(power_column(ds, p)?) {
                        *c *= v;
                    }
                }
                cols.push(col);
                names.push(term.name());
            }
            Term::FactorMain(f) => {
                let (nm, cs) = factor_columns(f, factor_of(ds, f)?)?;
                names.extend(nm);
                cols.extend(cs);
            }
            Term::FactorInteraction(a, b) => {
                let (na, ca) = factor_columns(a, factor_of(ds, a)?)?;
                let (nb, cb) = factor_columns(b, factor_of(ds, b)?)?;
                for (nb_j, cb_j) in nb.iter().zip(&cb) {
                    for (na_i, ca_i) in na.iter().zip(&ca) {
                        names.push(format!("{na_i}:{nb_j}"));
                        cols.push(ca_i.iter().zip(cb_j).map(|(x, y)| x * y).collect());
                    }
                }
            }
        }
    }
    DesignMatrix::from_columns(names, cols, spec.intercept)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    pub tss: f64,
    pub r_squared: f64,
    pub n: usize,
    pub dof_residual: usize,
    pub sigma2_hat: f64,
}

impl OlsFit {
    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.coefficients[i])
    }

    pub fn standard_error(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.standard_errors[i])
    }

    pub fn t_value(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.t_values[i])
    }

    pub fn estimate(&self, name: &str) -> Option<Estimate> {
        self.index(name).map(|i| Estimate {
            estimate: self.coefficients[i],
            se: self.standard_errors[i],
            t: self.t_values[i],
        })
    }
}

pub(crate) struct NamedValues<'a>(pub &'a [String], pub &'a [f64]);

impl Serialize for NamedValues<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0.iter().zip(self.1) {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

impl Serialize for OlsFit {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("OlsFit", 7)?;
        st.serialize_field("coefficients", &NamedValues(&self.names, &self.coefficients))?;
        st.serialize_field("se", &NamedValues(&self.names, &self.standard_errors))?;
        st.serialize_field("t", &NamedValues(&self.names, &self.t_values))?;
        st.serialize_field("r2", &self.r_squared)?;
        st.serialize_field("n", &self.n)?;
        st.serialize_field("dof", &self.dof_residual)?;
        st.serialize_field("sigma2", &self.sigma2_hat)?;
        st.end()
    }
}

pub(crate) fn total_sum_squares(y: &[f64]) -> f64 {
    let m = crate::data::mean(y);
    y.iter().map(|v| (v - m).powi(2)).sum()
}

pub(crate) fn r_squared(rss: f64, tss: f64) -> f64 {
    if tss > 0.0 {
        1.0 - rss / tss
    } else if rss == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    }
}

/// Least squares through a column-pivoted Householder QR.
pub fn fit_ols(x: &DesignMatrix, y: &[f64]) -> Result<OlsFit> {
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n {
        return Err(Error::LengthMismatch { name: "response".into(), len: y.len(), expected: n });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("response contains non-finite values".into()));
    }
    if n <= p {
        return Err(Error::Underdetermined { n, p });
    }
    let qr = PivotedQr::new(x.matrix.clone());
    let rank = qr.rank(RANK_TOL);
    if rank < p {
        return Err(Error::SingularDesign { rank, p });
    }
    let yv = DVector::from_column_slice(y);
    let beta = qr.solve(&yv);
    let fitted = &x.matrix * &beta;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let dof = n - p;
    let sigma2 = rss / dof as f64;
    let diag = qr.gram_inverse_diag();
    let se: Vec<f64> = diag.iter().map(|d| (sigma2 * d).sqrt()).collect();
    let t: Vec<f64> = beta.iter().zip(&se).map(|(b, s)| b / s).collect();
    let tss = total_sum_squares(y);
    Ok(OlsFit {
        names: x.names.clone(),
        coefficients: beta.iter().copied().collect(),
        standard_errors: se,
        t_values: t,
        fitted: fitted.iter().copied().collect(),
        residuals,
        rss,
        tss,
        r_squared: r_squared(rss, tss),
        n,
        dof_residual: dof,
        sigma2_hat: sigma2,
    })
}

/// Builds the design for `spec` and regresses the named response on it.
pub fn fit_formula(ds: &Dataset, response: &str, spec: &DesignSpec) -> Result<OlsFit> {
    let x = build_design(spec, ds)?;
    fit_ols(&x, ds.numeric(response)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaRow {
    pub name: String,
    pub sum_sq: f64,
    pub dof: usize,
    pub mean_sq: f64,
    /// `None` on the residual row.
    pub f_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaTable {
    pub rows: Vec<AnovaRow>,
    pub n: usize,
}

impl AnovaTable {
    pub fn row(&self, name: &str) -> Option<&AnovaRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn residual(&self) -> &AnovaRow {
        self.rows.last().expect("anova table always has a residual row")
    }
}

fn rss_of(cols: &[&[f64]], y: &[f64]) -> Result<f64> {
    let n = y.len();
    let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let qr = PivotedQr::new(x.clone());
    let rank = qr.rank(RANK_TOL);
    if rank < cols.len() {
        return Err(Error::SingularDesign { rank, p: cols.len() });
    }
    let beta = qr.solve(&DVector::from_column_slice(y));
    let fitted = x * beta;
    Ok(y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum())
}

fn two_level_codes(ds: &Dataset, name: &str) -> Result<Vec<f64>> {
    let f = factor_of(ds, name)?;
    let counts = f.counts();
    let observed = counts.iter().filter(|&&c| c > 0).count();
    if observed < 2 {
        return Err(Error::DegenerateFactor(name.to_string()));
    }
    if f.levels().len() != 2 {
        return Err(Error::InvalidSpec(format!("factor `{name}` must have exactly two levels")));
    }
    Ok(f.codes().iter().map(|&c| if c == 0 { -1.0 } else { 1.0 }).collect())
}

/// Two-way ANOVA of two two-level factors with Type-II sums of squares:
/// each main effect is adjusted for the other, the interaction for both,
/// and the residual comes from the full cell-means model.
pub fn anova_two_way(ds: &Dataset, y: &str, fx: &str, fz: &str) -> Result<AnovaTable> {
    let yv = ds.numeric(y)?;
    let cx = two_level_codes(ds, fx)?;
    let cz = two_level_codes(ds, fz)?;
    let n = yv.len();
    for (a, b) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
        if !cx.iter().zip(&cz).any(|(&x, &z)| x == a && z == b) {
            let fa = ds.factor(fx)?.levels()[usize::from(a > 0.0)].clone();
            let fb = ds.factor(fz)?.levels()[usize::from(b > 0.0)].clone();
            return Err(Error::EmptyCell(format!("{fx}={fa}, {fz}={fb}")));
        }
    }
    if n <= 4 {
        return Err(Error::Underdetermined { n, p: 4 });
    }
    let one = vec![1.0; n];
    let cxz: Vec<f64> = cx.iter().zip(&cz).map(|(a, b)| a * b).collect();
    let rss_z = rss_of(&[&one, &cz], yv)?;
    let rss_x = rss_of(&[&one, &cx], yv)?;
    let rss_main = rss_of(&[&one, &cx, &cz], yv)?;
    let rss_full = rss_of(&[&one, &cx, &cz, &cxz], yv)?;

    let res_dof = n - 4;
    let ms_res = rss_full / res_dof as f64;
    let effect = |name: String, ss: f64| AnovaRow {
        name,
        sum_sq: ss,
        dof: 1,
        mean_sq: ss,
        f_value: Some(ss / ms_res),
    };
    Ok(AnovaTable {
        rows: vec![
            effect(fx.to_string(), rss_z - rss_main),
            effect(fz.to_string(), rss_x - rss_main),
            effect(format!("{fx}:{fz}"), rss_main - rss_full),
            AnovaRow { name: "Residuals".into(), sum_sq: rss_full, dof: res_dof, mean_sq: ms_res, f_value: None },
        ],
        n,
    })
}

/// Adds `<target>_resid`: the least-squares residuals of `target` on the
/// `predictors` design.
pub fn residualize(ds: &Dataset, target: &str, predictors: &DesignSpec) -> Result<Dataset> {
    let fit = fit_formula(ds, target, predictors)?;
    ds.with_column(&format!("{target}_resid"), Column::Numeric(fit.residuals))
}
