//! Seeded data generators and the Monte Carlo study runner.
//!
//! Randomness: iteration `i` of a study with master seed `s` uses the seed
//! `splitmix64(s ^ splitmix64(i))` to key a ChaCha8 stream. Uniforms use the
//! top 53 bits of each 64-bit draw; normals invert the standard normal CDF
//! at the midpoint `(m + 0.5) / 2^53` of a 53-bit integer `m`. Within a row
//! the draw order is `x`, `u`, `eps`. Streams are stable within one release
//! of this crate.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::am::AmSpec;
use crate::ambiguity::{two_step_test_with, TwoStepOptions};
use crate::data::{dichotomize, Column, Dataset, Factor};
use crate::error::{Error, Result, Warning};
use crate::ols::{anova_two_way, fit_formula, DesignSpec, Term, T_THRESHOLD};

pub const MIN_RATE_ITERATIONS: usize = 30;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn iteration_seed(master: u64, iteration: usize) -> u64 {
    splitmix64(master ^ splitmix64(iteration as u64))
}

/// Uniform and standard-normal draws from one ChaCha8 stream.
pub struct Draws {
    rng: ChaCha8Rng,
    normal: Normal,
}

impl Draws {
    pub fn new(seed: u64) -> Self {
        Draws { rng: ChaCha8Rng::seed_from_u64(seed), normal: Normal::standard() }
    }

    /// Uniform on `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn normal(&mut self) -> f64 {
        let m = (self.rng.next_u64() >> 11) as f64;
        self.normal.inverse_cdf((m + 0.5) * (1.0 / (1u64 << 53) as f64))
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.unit() * n as f64) as usize).min(n - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    Intro,
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    S7,
}

impl ScenarioId {
    pub const TABLE3: [ScenarioId; 7] =
        [ScenarioId::S1, ScenarioId::S2, ScenarioId::S3, ScenarioId::S4, ScenarioId::S5, ScenarioId::S6, ScenarioId::S7];
    pub const ALL: [ScenarioId; 8] = [
        ScenarioId::Intro,
        ScenarioId::S1,
        ScenarioId::S2,
        ScenarioId::S3,
        ScenarioId::S4,
        ScenarioId::S5,
        ScenarioId::S6,
        ScenarioId::S7,
    ];
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScenarioId::Intro => "intro",
            ScenarioId::S1 => "s1",
            ScenarioId::S2 => "s2",
            ScenarioId::S3 => "s3",
            ScenarioId::S4 => "s4",
            ScenarioId::S5 => "s5",
            ScenarioId::S6 => "s6",
            ScenarioId::S7 => "s7",
        };
        f.write_str(s)
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario `{s}` (intro, s1..s7)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateLaw {
    /// `z = w_x x + w_u u`.
    Linear { w_x: f64, w_u: f64 },
    /// `z = 4 x^2 + u`.
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    /// `y = x^2 + eps`.
    Square,
    /// `y = x z + eps`.
    Product,
    /// `y = x^3 + eps`.
    Cube,
}

impl Process {
    pub fn mean(self, x: f64, z: f64) -> f64 {
        match self {
            Process::Square => x * x,
            Process::Product => x * z,
            Process::Cube => x * x * x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: ScenarioId,
    pub n: usize,
    pub covariate_law: CovariateLaw,
    pub process: Process,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn preset(id: ScenarioId, seed: u64) -> Self {
        let third = CovariateLaw::Linear { w_x: 1.0 / 3.0, w_u: 2.0 / 3.0 };
        let (n, covariate_law, process) = match id {
            ScenarioId::Intro => (5000, CovariateLaw::Linear { w_x: 0.5, w_u: 0.5 }, Process::Square),
            ScenarioId::S1 | ScenarioId::S2 | ScenarioId::S3 => (1000, third, Process::Square),
            ScenarioId::S4 => (1000, third, Process::Product),
            ScenarioId::S5 => (1000, third, Process::Cube),
            ScenarioId::S6 | ScenarioId::S7 => (1000, CovariateLaw::Quadratic, Process::Cube),
        };
        Scenario { id, n, covariate_law, process, noise_sd: 1.0, seed }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Scenario { seed, ..self }
    }

    pub fn with_n(self, n: usize) -> Self {
        Scenario { n, ..self }
    }
}

/// Columns `y`, `x`, `z`; the hidden `u` is not returned.
pub fn generate(sc: &Scenario) -> Result<Dataset> {
    if sc.n < 10 {
        return Err(Error::InvalidArgument(format!("scenario needs n >= 10, got {}", sc.n)));
    }
    let mut d = Draws::new(sc.seed);
    let mut x = Vec::with_capacity(sc.n);
    let mut z = Vec::with_capacity(sc.n);
    let mut y = Vec::with_capacity(sc.n);
    for _ in 0..sc.n {
        let xi = d.uniform(-1.0, 1.0);
        let ui = d.uniform(-1.0, 1.0);
        let eps = d.normal();
        let zi = match sc.covariate_law {
            CovariateLaw::Linear { w_x, w_u } => w_x * xi + w_u * ui,
            CovariateLaw::Quadratic => 4.0 * xi * xi + ui,
        };
        x.push(xi);
        z.push(zi);
        y.push(sc.process.mean(xi, zi) + sc.noise_sd * eps);
    }
    Dataset::from_numeric(vec![("y", y), ("x", x), ("z", z)])?.with_response("y")
}

/// Stand-in for the parental-education data: two parents' education scores
/// `ME`, `FE` on 4..20 sharing a latent factor (with a nonlinear component in
/// `FE`), and the child's expectation `EE` as a sum of convex, increasing
/// main effects plus noise. Contains no interaction.
pub fn generate_education(seed: u64, n: usize) -> Result<Dataset> {
    let mut d = Draws::new(seed);
    let score = |v: f64| v.round().clamp(4.0, 20.0);
    let main = |v: f64| {
        let t = (v - 12.0) / 4.0;
        0.6 * t + 0.45 * t * t - 0.3 * t * t * t
    };
    let (mut me, mut fe, mut ee) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let g = d.normal();
        let e1 = d.normal();
        let e2 = d.normal();
        let eps = d.normal();
        let m = score(12.0 + 2.6 * (0.82 * g + 0.57 * e1));
        let f = score(12.0 + 3.0 * (0.82 * g + 0.57 * e2 + 0.35 * (g * g - 1.0)));
        me.push(m);
        fe.push(f);
        ee.push(14.0 + main(m) + 1.2 * main(f) + 2.0 * eps);
    }
    Dataset::from_numeric(vec![("EE", ee), ("ME", me), ("FE", fe)])?.with_response("EE")
}

/// Size of a synthetic reading corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusShape {
    pub rows: usize,
    pub subjects: usize,
    pub sentences: usize,
    pub words_per_sentence: usize,
    /// Distinct word types shared across sentences.
    pub word_types: usize,
}

impl Default for CorpusShape {
    fn default() -> Self {
        CorpusShape { rows: 13523, subjects: 48, sentences: 120, words_per_sentence: 10, word_types: 1000 }
    }
}

/// Stand-in for a fixation-location corpus: landing position `xl` in a word
/// of length `lw = lr + ls` (root plus suffixes), incoming saccade amplitude
/// `a`, crossed random intercepts for `Subject`, `Sentence` and `Word`. The
/// landing position depends nonlinearly on word length and includes a real
/// `a:lw` interaction.
pub fn generate_fixations(seed: u64, shape: CorpusShape) -> Result<Dataset> {
    let mut d = Draws::new(seed);
    let types: Vec<(f64, f64)> = (0..shape.word_types)
        .map(|_| {
            let lr = 1.0 + (d.unit() * 6.0 + d.unit() * 5.0).floor().min(10.0);
            let nsuf = [0usize, 0, 0, 1, 1, 1, 1, 2, 2, 3][d.below(10)];
            let ls: f64 = (0..nsuf).map(|_| 1.0 + d.below(4) as f64).sum();
            (lr, ls)
        })
        .collect();
    let word_effect: Vec<f64> = (0..shape.word_types).map(|_| 0.25 * d.normal()).collect();
    let sentence_effect: Vec<f64> = (0..shape.sentences).map(|_| 0.15 * d.normal()).collect();
    let subject_effect: Vec<f64> = (0..shape.subjects).map(|_| 0.4 * d.normal()).collect();
    let slots: Vec<usize> = (0..shape.sentences * shape.words_per_sentence).map(|_| d.below(shape.word_types)).collect();

    let n = shape.rows;
    let mut cols: [Vec<f64>; 5] = Default::default();
    let (mut subj, mut sent, mut word) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let s = d.below(shape.subjects);
        let st = d.below(shape.sentences);
        let slot = st * shape.words_per_sentence + d.below(shape.words_per_sentence);
        let w = slots[slot];
        let (lr, ls) = types[w];
        let lw = lr + ls;
        let a = 0.2 + d.unit() * 0.8 + 0.15 * d.normal().abs();
        let t = (lw - 7.0) / 3.0;
        let mean = 2.5 + 1.1 * t - 0.35 * t * t + 0.08 * t * t * t - 1.2 * (a - 0.6) - 0.8 * (a - 0.6) * t;
        let xl = mean + subject_effect[s] + sentence_effect[st] + word_effect[w] + 1.3 * d.normal();
        for (c, v) in cols.iter_mut().zip([xl, a, lw, ls, lr]) {
            c.push(v);
        }
        subj.push(s);
        sent.push(st);
        word.push(w);
    }
    let factor = |prefix: &str, codes: Vec<usize>| {
        let labels: Vec<String> = codes.iter().map(|c| format!("{prefix}{c}")).collect();
        Column::Factor(Factor::from_labels(&labels))
    };
    let [xl, a, lw, ls, lr] = cols;
    Dataset::new(vec![
        ("xl".into(), Column::Numeric(xl)),
        ("a".into(), Column::Numeric(a)),
        ("lw".into(), Column::Numeric(lw)),
        ("ls".into(), Column::Numeric(ls)),
        ("lr".into(), Column::Numeric(lr)),
        ("Subject".into(), factor("s", subj)),
        ("Sentence".into(), factor("t", sent)),
        ("Word".into(), factor("w", word)),
    ])?
    .with_response("xl")
}

/// What is fitted in each iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// OLS of `y` on the terms (plus intercept); `interaction` is reported.
    Parametric { terms: Vec<Term>, interaction: Term },
    /// Additive model `s(x) + s(z)`, then `x:z` on its residuals.
    TwoStep { k: usize, interaction: Term },
    /// OLS `y ~ x + z + x:z` plus a two-way ANOVA of `x`, `z` split at 0.
    Intro,
}

impl Pipeline {
    pub fn linear_mains() -> Self {
        Pipeline::Parametric { terms: vec![Term::linear("x"), Term::linear("z"), xz()], interaction: xz() }
    }

    pub fn quadratic_x() -> Self {
        Pipeline::Parametric { terms: vec![Term::linear("x"), Term::power("x", 2), xz()], interaction: xz() }
    }

    pub fn two_step() -> Self {
        Pipeline::TwoStep { k: crate::smooth::DEFAULT_K, interaction: xz() }
    }

    /// The model paired with each scenario in the simulation table.
    pub fn for_scenario(id: ScenarioId) -> Self {
        match id {
            ScenarioId::Intro => Pipeline::Intro,
            ScenarioId::S1 => Pipeline::linear_mains(),
            ScenarioId::S2 | ScenarioId::S5 | ScenarioId::S6 => Pipeline::quadratic_x(),
            ScenarioId::S3 | ScenarioId::S4 | ScenarioId::S7 => Pipeline::two_step(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Pipeline::Parametric { terms, .. } => {
                format!("LM y ~ {}", terms.iter().map(Term::name).collect::<Vec<_>>().join(" + "))
            }
            Pipeline::TwoStep { k, interaction } => format!("AM y ~ s(x, k={k}) + s(z, k={k}); resid ~ {interaction}"),
            Pipeline::Intro => "LM y ~ x + z + x:z; ANOVA y ~ X * Z".into(),
        }
    }
}

fn xz() -> Term {
    Term::product(&[("x", 1), ("z", 1)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub seed: u64,
    /// t of the interaction term (step 2 for the two-step pipeline).
    pub t: f64,
    pub coefficient: f64,
    /// R^2 of the (step-1 or only) model.
    pub r2: f64,
    pub step2_r2: Option<f64>,
    /// Pipeline-specific statistics (main-effect t values, ANOVA F values).
    pub extras: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationFailure {
    pub iteration: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub scenario: ScenarioId,
    pub pipeline: String,
    pub n: usize,
    pub master_seed: u64,
    pub iterations: usize,
    pub completed: usize,
    pub mean_t: f64,
    /// Monte Carlo standard error of `mean_t`.
    pub se_t: f64,
    pub mean_r2: f64,
    pub se_r2: f64,
    pub mean_step2_r2: Option<f64>,
    pub se_step2_r2: Option<f64>,
    pub mean_coefficient: f64,
    pub se_coefficient: f64,
    pub rejection_rate: f64,
    pub mean_extras: BTreeMap<String, f64>,
    pub records: Vec<IterationRecord>,
    pub failures: Vec<IterationFailure>,
    pub warnings: Vec<Warning>,
}

/// Mean and standard error of the mean (zero SE for fewer than 2 values).
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

fn run_iteration(sc: &Scenario, pipeline: &Pipeline) -> Result<IterationRecord> {
    let ds = generate(sc)?;
    let mut extras = BTreeMap::new();
    let rec = |t: f64, coefficient: f64, r2: f64, step2_r2: Option<f64>, extras| IterationRecord {
        iteration: 0,
        seed: sc.seed,
        t,
        coefficient,
        r2,
        step2_r2,
        extras,
    };
    match pipeline {
        Pipeline::Parametric { terms, interaction } => {
            let fit = fit_formula(&ds, "y", &DesignSpec::new(true, terms.clone())?)?;
            let name = interaction.name();
            let est = fit.estimate(&name).ok_or_else(|| Error::InvalidSpec(format!("`{name}` not in model")))?;
            for term in terms {
                if let Some(t) = fit.t_value(&term.name()) {
                    extras.insert(format!("t[{}]", term.name()), t);
                }
            }
            Ok(rec(est.t, est.estimate, fit.r_squared, None, extras))
        }
        Pipeline::TwoStep { k, interaction } => {
            let spec = AmSpec::new("y").smooth("x", *k).smooth("z", *k);
            let opts = TwoStepOptions { reference: false, ..TwoStepOptions::default() };
            let (report, fit) = two_step_test_with(&spec, std::slice::from_ref(interaction), &ds, &opts)?;
            let est = report.step2.term(&interaction.name()).expect("interaction is in step 2").clone();
            for b in &fit.blocks {
                extras.insert(format!("edf[s({})]", b.covariate), b.edf);
            }
            Ok(rec(est.t, est.estimate, report.step1.r2, Some(report.step2.r2), extras))
        }
        Pipeline::Intro => {
            let terms = vec![Term::linear("x"), Term::linear("z"), xz()];
            let fit = fit_formula(&ds, "y", &DesignSpec::new(true, terms)?)?;
            let est = fit.estimate("x:z").expect("x:z is in the model");
            extras.insert("t[x]".into(), fit.t_value("x").unwrap());
            extras.insert("t[z]".into(), fit.t_value("z").unwrap());
            let split = dichotomize(&dichotomize(&ds, "x", 0.0)?, "z", 0.0)?;
            let table = anova_two_way(&split, "y", "x_f", "z_f")?;
            for (key, row) in [("F[X]", "x_f"), ("F[Z]", "z_f"), ("F[X:Z]", "x_f:z_f")] {
                extras.insert(key.into(), table.row(row).and_then(|r| r.f_value).unwrap_or(f64::NAN));
            }
            Ok(rec(est.t, est.estimate, fit.r_squared, None, extras))
        }
    }
}

/// Runs `iterations` independent generate-and-fit cycles. Iteration `i`
/// uses the seed [`iteration_seed`]`(sc.seed, i)`; results do not depend on
/// `threads` (`None` uses the global pool).
pub fn run_study(sc: &Scenario, pipeline: &Pipeline, iterations: usize, threads: Option<usize>) -> Result<StudySummary> {
    if iterations == 0 {
        return Err(Error::EmptyStudy);
    }
    let one = |i: usize| {
        let seed = iteration_seed(sc.seed, i);
        let res = run_iteration(&sc.with_seed(seed), pipeline);
        (i, seed, res)
    };
    let results: Vec<(usize, u64, Result<IterationRecord>)> = match threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            pool.install(|| (0..iterations).into_par_iter().map(one).collect())
        }
        None => (0..iterations).into_par_iter().map(one).collect(),
    };
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (i, seed, r) in results {
        match r {
            Ok(mut rec) => {
                rec.iteration = i;
                records.push(rec);
            }
            Err(e) => failures.push(IterationFailure { iteration: i, seed, error: e.to_string() }),
        }
    }
    Ok(summarize(sc, pipeline, iterations, records, failures))
}

fn summarize(
    sc: &Scenario,
    pipeline: &Pipeline,
    iterations: usize,
    records: Vec<IterationRecord>,
    failures: Vec<IterationFailure>,
) -> StudySummary {
    let col = |f: &dyn Fn(&IterationRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    let (mean_t, se_t) = mean_se(&col(&|r| r.t));
    let (mean_r2, se_r2) = mean_se(&col(&|r| r.r2));
    let (mean_coefficient, se_coefficient) = mean_se(&col(&|r| r.coefficient));
    let step2: Vec<f64> = records.iter().filter_map(|r| r.step2_r2).collect();
    let (mean_step2_r2, se_step2_r2) = if step2.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_se(&step2);
        (Some(m), Some(s))
    };
    let rejection_rate = if records.is_empty() {
        f64::NAN
    } else {
        records.iter().filter(|r| r.t.abs() > T_THRESHOLD).count() as f64 / records.len() as f64
    };
    let mut mean_extras = BTreeMap::new();
    if let Some(first) = records.first() {
        for key in first.extras.keys() {
            let v: Vec<f64> = records.iter().filter_map(|r| r.extras.get(key).copied()).collect();
            mean_extras.insert(key.clone(), mean_se(&v).0);
        }
    }
    let mut warnings = Vec::new();
    if !failures.is_empty() {
        warnings.push(Warning::FailedIterations { count: failures.len() });
    }
    if records.len() < MIN_RATE_ITERATIONS {
        warnings.push(Warning::TooFewIterations { iterations: records.len() });
    }
    StudySummary {
        scenario: sc.id,
        pipeline: pipeline.label(),
        n: sc.n,
        master_seed: sc.seed,
        iterations,
        completed: records.len(),
        mean_t,
        se_t,
        mean_r2,
        se_r2,
        mean_step2_r2,
        se_step2_r2,
        mean_coefficient,
        se_coefficient,
        rejection_rate,
        mean_extras,
        records,
        failures,
        warnings,
    }
}

/// Rejection rate at `|t| > 2` with its binomial standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub monte_carlo_se: f64,
    pub iterations: usize,
    pub warnings: Vec<Warning>,
}

pub fn estimate_rates(summary: &StudySummary) -> RateEstimate {
    let n = summary.records.len();
    let rejections = summary.records.iter().filter(|r| r.t.abs() > T_THRESHOLD).count();
    let rate = if n == 0 { f64::NAN } else { rejections as f64 / n as f64 };
    let warnings = if n < MIN_RATE_ITERATIONS { vec![Warning::TooFewIterations { iterations: n }] } else { Vec::new() };
    RateEstimate { rate, monte_carlo_se: (rate * (1.0 - rate) / n as f64).sqrt(), iterations: n, warnings }
}

/// Flat per-iteration table: scenario, iteration, seed, t, coefficient, r2,
/// step2_r2 (empty when not applicable).
pub fn write_records_csv<W: Write>(summaries: &[&StudySummary], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["scenario", "iteration", "seed", "t", "coefficient", "r2", "step2_r2"])?;
    for s in summaries {
        for r in &s.records {
            out.write_record([
                s.scenario.to_string(),
                r.iteration.to_string(),
                r.seed.to_string(),
                format!("{:?}", r.t),
                format!("{:?}", r.coefficient),
                format!("{:?}", r.r2),
                r.step2_r2.map_or(String::new(), |v| format!("{v:?}")),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Published mean t and mean R^2 of one simulation-table row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table3Reference {
    pub scenario: ScenarioId,
    pub t: f64,
    pub r2: f64,
    pub step2_r2: Option<f64>,
}

pub const TABLE3_REFERENCE: [Table3Reference; 7] = [
    Table3Reference { scenario: ScenarioId::S1, t: 3.84, r2: 0.017, step2_r2: None },
    Table3Reference { scenario: ScenarioId::S2, t: 0.10, r2: 0.084, step2_r2: None },
    Table3Reference { scenario: ScenarioId::S3, t: 0.12, r2: 0.086, step2_r2: Some(0.00092) },
    Table3Reference { scenario: ScenarioId::S4, t: 3.46, r2: 0.042, step2_r2: Some(0.012) },
    Table3Reference { scenario: ScenarioId::S5, t: -0.069, r2: 0.11, step2_r2: None },
    Table3Reference { scenario: ScenarioId::S6, t: 4.14, r2: 0.12, step2_r2: None },
    Table3Reference { scenario: ScenarioId::S7, t: 0.34, r2: 0.13, step2_r2: Some(0.00010) },
];

/// Acceptance band on a mean t value.
pub const T_BAND: f64 = 0.5;
/// Relative acceptance band on a mean R^2, with an absolute floor.
pub const R2_BAND_REL: f64 = 0.3;
pub const R2_BAND_FLOOR: f64 = 0.005;
/// Introduction example: interaction |t| and F must exceed these, main
/// effects must stay below `2` and `4`.
pub const INTRO_T_MIN: f64 = 8.0;
pub const INTRO_F_MIN: f64 = 40.0;
pub const INTRO_MAIN_T_MAX: f64 = 2.0;
pub const INTRO_MAIN_F_MAX: f64 = 4.0;

pub fn r2_within_band(value: f64, reference: f64) -> bool {
    (value - reference).abs() <= (R2_BAND_REL * reference).max(R2_BAND_FLOOR)
}

pub fn t_within_band(value: f64, reference: f64) -> bool {
    (value - reference).abs() <= T_BAND
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Row {
    pub scenario: ScenarioId,
    pub model: String,
    pub iterations: usize,
    pub mean_r2: f64,
    pub se_r2: f64,
    pub mean_step2_r2: Option<f64>,
    pub se_step2_r2: Option<f64>,
    pub mean_t: f64,
    pub se_t: f64,
    pub mean_coefficient: f64,
    pub rejection_rate: f64,
    pub reference_r2: f64,
    pub reference_step2_r2: Option<f64>,
    pub reference_t: f64,
    pub t_pass: bool,
    pub r2_pass: bool,
    pub step2_r2_pass: Option<bool>,
    /// False when fewer than two iterations make the SEs meaningless.
    pub se_reliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntroRow {
    pub iterations: usize,
    pub mean_t_interaction: f64,
    pub se_t_interaction: f64,
    pub mean_t_x: f64,
    pub mean_t_z: f64,
    pub mean_f_interaction: f64,
    pub mean_f_x: f64,
    pub mean_f_z: f64,
    pub reference_t: f64,
    pub reference_f: f64,
    pub pass: bool,
    pub se_reliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3 {
    pub iterations: usize,
    pub seed: u64,
    pub intro: IntroRow,
    pub rows: Vec<Table3Row>,
    pub all_pass: bool,
}

/// Runs the introduction example and the seven simulation rows. Every row
/// uses `seed` as its master seed, so rows sharing a generating process
/// analyze the same samples.
pub fn run_table3(iterations: usize, seed: u64, threads: Option<usize>) -> Result<(Table3, Vec<StudySummary>)> {
    let intro_sc = Scenario::preset(ScenarioId::Intro, seed);
    let intro = run_study(&intro_sc, &Pipeline::Intro, iterations, threads)?;
    let ex = |k: &str| intro.mean_extras.get(k).copied().unwrap_or(f64::NAN);
    let intro_row = IntroRow {
        iterations: intro.completed,
        mean_t_interaction: intro.mean_t,
        se_t_interaction: intro.se_t,
        mean_t_x: ex("t[x]"),
        mean_t_z: ex("t[z]"),
        mean_f_interaction: ex("F[X:Z]"),
        mean_f_x: ex("F[X]"),
        mean_f_z: ex("F[Z]"),
        reference_t: 15.02,
        reference_f: 69.03,
        pass: intro.mean_t.abs() > INTRO_T_MIN
            && ex("F[X:Z]") > INTRO_F_MIN
            && ex("t[x]").abs() < INTRO_MAIN_T_MAX
            && ex("t[z]").abs() < INTRO_MAIN_T_MAX
            && ex("F[X]") < INTRO_MAIN_F_MAX
            && ex("F[Z]") < INTRO_MAIN_F_MAX,
        se_reliable: intro.completed >= 2,
    };
    let mut summaries = vec![intro];
    let mut rows = Vec::new();
    for r in TABLE3_REFERENCE {
        let sc = Scenario::preset(r.scenario, seed);
        let s = run_study(&sc, &Pipeline::for_scenario(r.scenario), iterations, threads)?;
        let step2_r2_pass = match (r.step2_r2, s.mean_step2_r2) {
            (Some(p), Some(v)) => Some(r2_within_band(v, p)),
            _ => None,
        };
        rows.push(Table3Row {
            scenario: r.scenario,
            model: s.pipeline.clone(),
            iterations: s.completed,
            mean_r2: s.mean_r2,
            se_r2: s.se_r2,
            mean_step2_r2: s.mean_step2_r2,
            se_step2_r2: s.se_step2_r2,
            mean_t: s.mean_t,
            se_t: s.se_t,
            mean_coefficient: s.mean_coefficient,
            rejection_rate: s.rejection_rate,
            reference_r2: r.r2,
            reference_step2_r2: r.step2_r2,
            reference_t: r.t,
            t_pass: t_within_band(s.mean_t, r.t),
            r2_pass: r2_within_band(s.mean_r2, r.r2),
            step2_r2_pass,
            se_reliable: s.completed >= 2,
        });
        summaries.push(s);
    }
    let all_pass = intro_row.pass && rows.iter().all(|r| r.t_pass && r.r2_pass && r.step2_r2_pass != Some(false));
    Ok((Table3 { iterations, seed, intro: intro_row, rows, all_pass }, summaries))
}

impl Table3 {
    pub fn to_markdown(&self) -> String {
        use std::fmt::Write as _;
        let flag = |b: bool| if b { "pass" } else { "FAIL" };
        let mut s = String::new();
        let _ = writeln!(s, "Simulation study: {} iterations per row, seed {}\n", self.iterations, self.seed);
        let i = &self.intro;
        let _ = writeln!(s, "Introduction example (n = 5000):\n");
        let _ = writeln!(
            s,
            "LM interaction t = {:.2} (SE {:.2}; reference 15.02), mean main-effect t = {:.2}, {:.2}",
            i.mean_t_interaction, i.se_t_interaction, i.mean_t_x, i.mean_t_z
        );
        let _ = writeln!(
            s,
            "ANOVA F(X x Z) = {:.2} (reference 69.03), F(X) = {:.3}, F(Z) = {:.3}: {}\n",
            i.mean_f_interaction,
            i.mean_f_x,
            i.mean_f_z,
            flag(i.pass)
        );
        s.push_str("| Row | Model | mean R^2 (SE) | reference R^2 | mean t (SE) | reference t | R^2 | t |\n");
        s.push_str("|---|---|---:|---:|---:|---:|---|---|\n");
        for r in &self.rows {
            let se = |v: f64| if r.se_reliable { format!("{v:.4}") } else { "unreliable".into() };
            let _ = writeln!(
                s,
                "| {} | {} | {:.4} ({}) | {} | | | {} | |",
                r.scenario,
                r.model,
                r.mean_r2,
                se(r.se_r2),
                r.reference_r2,
                flag(r.r2_pass)
            );
            match (r.mean_step2_r2, r.reference_step2_r2) {
                (Some(m), Some(p)) => {
                    let _ = writeln!(
                        s,
                        "| | residuals ~ x:z | {:.5} ({}) | {} | {:.3} ({}) | {} | {} | {} |",
                        m,
                        se(r.se_step2_r2.unwrap_or(f64::NAN)),
                        p,
                        r.mean_t,
                        se(r.se_t),
                        r.reference_t,
                        flag(r.step2_r2_pass.unwrap_or(false)),
                        flag(r.t_pass)
                    );
                }
                _ => {
                    // put t on the model line for one-step rows
                    let line = s.trim_end_matches('\n').rfind('\n').map_or(0, |p| p + 1);
                    s.truncate(line);
                    let _ = writeln!(
                        s,
                        "| {} | {} | {:.4} ({}) | {} | {:.3} ({}) | {} | {} | {} |",
                        r.scenario,
                        r.model,
                        r.mean_r2,
                        se(r.se_r2),
                        r.reference_r2,
                        r.mean_t,
                        se(r.se_t),
                        r.reference_t,
                        flag(r.r2_pass),
                        flag(r.t_pass)
                    );
                }
            }
        }
        let _ = writeln!(s, "\nAll rows within bands: {}", if self.all_pass { "yes" } else { "no" });
        s
    }
}
