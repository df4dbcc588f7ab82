//! Two-step interaction check. Step 1 fits a main-effects additive model;
//! step 2 regresses its residuals on the interaction products. An
//! interaction that is significant under parametric mains but not in the
//! residuals is labelled ambiguous: smooth main effects of dependent
//! covariates can explain it. The labels are a heuristic, not a test.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::am::{fit_am_with, AmFit, AmOptions, AmSpec};
use crate::data::{center, Dataset};
use crate::error::{Error, Result};
use crate::ols::{build_design, fit_ols, DesignMatrix, DesignSpec, OlsFit, Term, T_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Ambiguous,
    Robust,
    AbsentInBoth,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Classification::Ambiguous => "Ambiguous",
            Classification::Robust => "Robust",
            Classification::AbsentInBoth => "AbsentInBoth",
        })
    }
}

/// Robust when the residual t exceeds the threshold; ambiguous when only
/// the parametric t does.
pub fn classify(t_parametric: f64, t_step2: f64, threshold: f64) -> Classification {
    if t_step2.abs() > threshold {
        Classification::Robust
    } else if t_parametric.abs() > threshold {
        Classification::Ambiguous
    } else {
        Classification::AbsentInBoth
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermEstimate {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothEdf {
    pub covariate: String,
    pub k: usize,
    pub edf: f64,
    pub log10_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponent {
    pub factor: String,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step1Summary {
    pub r2: f64,
    pub reml_score: f64,
    pub sigma2: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    pub smooths: Vec<SmoothEdf>,
    pub random_effects: Vec<VarianceComponent>,
}

impl Step1Summary {
    fn from_fit(fit: &AmFit) -> Self {
        Step1Summary {
            r2: fit.r_squared,
            reml_score: fit.reml_score,
            sigma2: fit.sigma2,
            converged: fit.converged,
            outer_iterations: fit.outer_iterations,
            smooths: fit
                .blocks
                .iter()
                .map(|b| SmoothEdf { covariate: b.covariate.clone(), k: b.k, edf: b.edf, log10_lambda: b.log10_lambda })
                .collect(),
            random_effects: fit
                .random_effects
                .iter()
                .map(|r| VarianceComponent { factor: r.factor.clone(), variance: r.variance })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step2Summary {
    /// Every step-2 column except the intercept.
    pub terms: Vec<TermEstimate>,
    pub intercept: TermEstimate,
    pub r2: f64,
    pub n: usize,
    pub dof: usize,
}

impl Step2Summary {
    pub fn term(&self, name: &str) -> Option<&TermEstimate> {
        self.terms.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceModel {
    Ols,
    /// Linear mixed model (random intercepts, no smooths).
    Lmm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricSummary {
    pub model: ReferenceModel,
    pub terms: Vec<TermEstimate>,
    pub r2: f64,
}

impl ParametricSummary {
    pub fn term(&self, name: &str) -> Option<&TermEstimate> {
        self.terms.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub t: f64,
    /// The labels follow a rule of thumb, not a formal test.
    pub heuristic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityReport {
    pub step1: Step1Summary,
    pub step2: Step2Summary,
    pub parametric: Option<ParametricSummary>,
    pub classification: BTreeMap<String, Classification>,
    pub thresholds: Thresholds,
}

impl AmbiguityReport {
    /// Labels recomputed from the stored t values.
    pub fn reclassify(&self) -> BTreeMap<String, Classification> {
        self.classification
            .keys()
            .map(|name| {
                let t2 = self.step2.term(name).map_or(0.0, |t| t.t);
                let tp = self.parametric.as_ref().and_then(|p| p.term(name)).map_or(0.0, |t| t.t);
                (name.clone(), classify(tp, t2, self.thresholds.t))
            })
            .collect()
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "step 1: additive model, R^2 = {:.4}", self.step1.r2);
        for sm in &self.step1.smooths {
            let _ = writeln!(s, "  s({}) k = {} edf = {:.2}", sm.covariate, sm.k, sm.edf);
        }
        let _ = writeln!(s, "step 2: residual model, R^2 = {:.5}", self.step2.r2);
        for (name, label) in &self.classification {
            let t2 = self.step2.term(name).map_or(f64::NAN, |t| t.t);
            let tp = self.parametric.as_ref().and_then(|p| p.term(name)).map_or(f64::NAN, |t| t.t);
            let _ = writeln!(s, "{name}: {label} (parametric t = {tp:.2}, residual t = {t2:.2})");
        }
        let _ = writeln!(s, "threshold |t| > {} (heuristic)", self.thresholds.t);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStepOptions {
    /// Extra mains of the parametric reference model (e.g. `x^2`).
    pub reference_terms: Vec<Term>,
    /// Fit the parametric reference model at all.
    pub reference: bool,
    /// Fit the whole reference design to the residuals in step 2 instead of
    /// the interactions alone.
    pub full_step2: bool,
    pub threshold: f64,
    pub am: AmOptions,
}

impl Default for TwoStepOptions {
    fn default() -> Self {
        TwoStepOptions {
            reference_terms: Vec::new(),
            reference: true,
            full_step2: false,
            threshold: T_THRESHOLD,
            am: AmOptions::default(),
        }
    }
}

fn check_interactions(spec: &AmSpec, interactions: &[Term]) -> Result<()> {
    if interactions.is_empty() {
        return Err(Error::InvalidSpec("no interaction terms given".into()));
    }
    let covered = spec.covariates();
    for t in interactions {
        if !matches!(t, Term::Product(_)) {
            return Err(Error::InvalidSpec(format!("`{t}` is not a product of covariates")));
        }
        if t.covariates().iter().any(|c| !covered.contains(c)) {
            return Err(Error::InteractionNotCovered(t.name()));
        }
    }
    Ok(())
}

/// Working copy of `ds` with every numeric covariate of the analysis centered.
fn centered(ds: &Dataset, spec: &AmSpec, extra: &[Term]) -> Result<Dataset> {
    let mut names: Vec<&str> = spec.covariates();
    for t in extra {
        for c in t.covariates() {
            if !names.contains(&c) {
                names.push(c);
            }
        }
    }
    names.retain(|c| ds.numeric(c).is_ok());
    for c in spec.covariates() {
        if !ds.has_column(c) {
            return Err(Error::MissingCovariate(c.to_string()));
        }
    }
    center(ds, &names)
}

fn reference_spec(spec: &AmSpec, reference_terms: &[Term], interactions: &[Term]) -> Result<DesignSpec> {
    let mut terms: Vec<Term> = spec.smooths.iter().map(|s| Term::linear(&s.covariate)).collect();
    if let Some(p) = &spec.parametric {
        terms.extend(p.terms.iter().cloned());
    }
    for t in reference_terms.iter().chain(interactions) {
        if !terms.contains(t) {
            terms.push(t.clone());
        }
    }
    DesignSpec::new(true, terms)
}

fn estimates_from_ols(fit: &OlsFit) -> Vec<TermEstimate> {
    fit.names
        .iter()
        .enumerate()
        .map(|(i, n)| TermEstimate {
            name: n.clone(),
            estimate: fit.coefficients[i],
            se: fit.standard_errors[i],
            t: fit.t_values[i],
        })
        .collect()
}

fn fit_reference(spec: &AmSpec, design: &DesignSpec, ds: &Dataset, opts: &AmOptions) -> Result<ParametricSummary> {
    if spec.random_intercepts.is_empty() {
        let x = build_design(design, ds)?;
        let fit = fit_ols(&x, ds.numeric(&spec.response)?)?;
        Ok(ParametricSummary { model: ReferenceModel::Ols, terms: estimates_from_ols(&fit), r2: fit.r_squared })
    } else {
        let lmm = AmSpec {
            response: spec.response.clone(),
            smooths: Vec::new(),
            parametric: Some(DesignSpec { intercept: false, terms: design.terms.clone() }),
            random_intercepts: spec.random_intercepts.clone(),
            include_intercept: true,
        };
        let fit = fit_am_with(&lmm, ds, opts)?;
        let terms = fit
            .parametric_coefficients
            .iter()
            .map(|p| TermEstimate { name: p.name.clone(), estimate: p.estimate, se: p.se, t: p.t })
            .collect();
        Ok(ParametricSummary { model: ReferenceModel::Lmm, terms, r2: fit.r_squared })
    }
}

fn step2(design: &DesignSpec, ds: &Dataset, residuals: Vec<f64>) -> Result<(Step2Summary, OlsFit)> {
    let mut x: DesignMatrix = build_design(&DesignSpec { intercept: true, terms: design.terms.clone() }, ds)?;
    // centered regressors leave slopes unchanged and put the intercept at
    // the residual mean
    for mut col in x.matrix.column_iter_mut().skip(1) {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let fit = fit_ols(&x, &residuals)?;
    let mut terms = estimates_from_ols(&fit);
    let intercept = terms.remove(0);
    let summary = Step2Summary { terms, intercept, r2: fit.r_squared, n: fit.n, dof: fit.dof_residual };
    Ok((summary, fit))
}

/// Both steps plus the parametric reference, with default options.
pub fn two_step_test(spec: &AmSpec, interactions: &[Term], ds: &Dataset) -> Result<AmbiguityReport> {
    two_step_test_with(spec, interactions, ds, &TwoStepOptions::default()).map(|(r, _)| r)
}

/// Like [`two_step_test`]; also returns the step-1 fit.
pub fn two_step_test_with(
    spec: &AmSpec,
    interactions: &[Term],
    ds: &Dataset,
    opts: &TwoStepOptions,
) -> Result<(AmbiguityReport, AmFit)> {
    spec.validate()?;
    check_interactions(spec, interactions)?;
    let work = centered(ds, spec, &opts.reference_terms)?;
    let fit = fit_am_with(spec, &work, &opts.am)?;

    let reference = reference_spec(spec, &opts.reference_terms, interactions)?;
    let step2_design = if opts.full_step2 {
        reference.clone()
    } else {
        DesignSpec::new(true, interactions.to_vec())?
    };
    let (step2, _) = step2(&step2_design, &work, fit.residuals.clone())?;
    let parametric = if opts.reference { Some(fit_reference(spec, &reference, &work, &opts.am)?) } else { None };

    let classification = interactions
        .iter()
        .map(|t| {
            let name = t.name();
            let t2 = step2.term(&name).map_or(0.0, |e| e.t);
            let tp = parametric.as_ref().and_then(|p| p.term(&name)).map_or(0.0, |e| e.t);
            (name, classify(tp, t2, opts.threshold))
        })
        .collect();
    let report = AmbiguityReport {
        step1: Step1Summary::from_fit(&fit),
        step2,
        parametric,
        classification,
        thresholds: Thresholds { t: opts.threshold, heuristic: true },
    };
    Ok((report, fit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub term: String,
    pub parametric: TermEstimate,
    /// The same term in the residual model (absent for the intercept).
    pub residual: Option<TermEstimate>,
}

/// Side-by-side parametric and residual models over the same terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub parametric_model: ReferenceModel,
    pub rows: Vec<ComparisonRow>,
    pub parametric_r2: f64,
    pub residual_r2: f64,
    pub step1_r2: f64,
    pub classification: BTreeMap<String, Classification>,
}

impl ComparisonTable {
    pub fn row(&self, term: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.term == term)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        s.push_str("| Term | Estimate | SE | t | Estimate (resid.) | SE (resid.) | t (resid.) |\n");
        s.push_str("|---|---:|---:|---:|---:|---:|---:|\n");
        for r in &self.rows {
            let p = &r.parametric;
            let _ = write!(s, "| {} | {:.4} | {:.4} | {:.2} |", r.term, p.estimate, p.se, p.t);
            match &r.residual {
                Some(e) => {
                    let _ = writeln!(s, " {:.4} | {:.4} | {:.2} |", e.estimate, e.se, e.t);
                }
                None => s.push_str(" | | |\n"),
            }
        }
        let _ = writeln!(
            s,
            "\nR^2: parametric {:.4}, additive main effects {:.4}, residual model {:.5}",
            self.parametric_r2, self.step1_r2, self.residual_r2
        );
        s
    }
}

/// Fits `parametric` to the data and, after an additive main-effects fit
/// from `spec`, the same design (without its intercept column) to the
/// residuals.
pub fn compare_models(
    ds: &Dataset,
    parametric: &DesignSpec,
    spec: &AmSpec,
    interactions: &[Term],
) -> Result<ComparisonTable> {
    compare_models_with(ds, parametric, spec, interactions, &AmOptions::default())
}

pub fn compare_models_with(
    ds: &Dataset,
    parametric: &DesignSpec,
    spec: &AmSpec,
    interactions: &[Term],
    opts: &AmOptions,
) -> Result<ComparisonTable> {
    spec.validate()?;
    check_interactions(spec, interactions)?;
    for t in interactions {
        if !parametric.terms.contains(t) {
            return Err(Error::InvalidSpec(format!("interaction `{t}` is not in the parametric model")));
        }
    }
    let work = centered(ds, spec, &parametric.terms)?;
    let design = DesignSpec { intercept: true, terms: parametric.terms.clone() };
    let reference = fit_reference(spec, &design, &work, opts)?;
    let fit = fit_am_with(spec, &work, opts)?;
    let (resid, _) = step2(&design, &work, fit.residuals.clone())?;

    let rows: Vec<ComparisonRow> = reference
        .terms
        .iter()
        .map(|p| ComparisonRow {
            term: p.name.clone(),
            parametric: p.clone(),
            residual: resid.term(&p.name).cloned(),
        })
        .collect();
    let classification = interactions
        .iter()
        .map(|t| {
            let name = t.name();
            let tp = reference.term(&name).map_or(0.0, |e| e.t);
            let t2 = resid.term(&name).map_or(0.0, |e| e.t);
            (name, classify(tp, t2, T_THRESHOLD))
        })
        .collect();
    Ok(ComparisonTable {
        parametric_model: reference.model,
        rows,
        parametric_r2: reference.r2,
        residual_r2: resid.r2,
        step1_r2: fit.r_squared,
        classification,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_rule() {
        assert_eq!(classify(3.8, 0.1, 2.0), Classification::Ambiguous);
        assert_eq!(classify(3.8, 2.5, 2.0), Classification::Robust);
        assert_eq!(classify(0.5, -2.5, 2.0), Classification::Robust);
        assert_eq!(classify(-1.0, 1.0, 2.0), Classification::AbsentInBoth);
        assert_eq!(classify(2.0, 0.0, 2.0), Classification::AbsentInBoth);
    }

    #[test]
    fn uncovered_interaction_rejected() {
        let ds = Dataset::from_numeric(vec![
            ("x", (0..30).map(|i| i as f64).collect()),
            ("w", (0..30).map(|i| (i * i % 7) as f64).collect()),
            ("y", (0..30).map(|i| (i % 5) as f64).collect()),
        ])
        .unwrap();
        let spec = AmSpec::new("y").smooth("x", 5);
        let err = two_step_test(&spec, &[Term::product(&[("x", 1), ("w", 1)])], &ds).unwrap_err();
        assert!(matches!(err, Error::InteractionNotCovered(_)));
    }
}
