//! The `ambig` command line.
//!
//! Every subcommand reads an optional `--config` file of `key = value` lines
//! (TOML syntax; keys are the long flag names with `-` or `_`, list flags
//! take arrays). Flags given on the command line win over the file.
//!
//! Exit codes: 0 when every requested file was written, 2 for invalid flags
//! or model specifications, 1 for any other failure. Files written by a
//! failing command are removed.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::am::{fit_am, AmFit, AmSpec, SmoothTerm};
use crate::ambiguity::{compare_models, two_step_test_with, TwoStepOptions};
use crate::data::{dichotomize, load_csv, write_csv, ColumnSchema, Dataset};
use crate::error::{Error, Result};
use crate::ols::{DesignSpec, Term};
use crate::simulate::{
    generate, generate_education, generate_fixations, run_study, run_table3, write_records_csv, CorpusShape, Pipeline,
    Scenario, ScenarioId,
};
use crate::smooth::{rank_check, select_lambda, tps_basis, RankCheck};

pub const THREADS_ENV: &str = "AMBIG_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ambig", version, about = "Additive models and the two-step check for ambiguous interactions")]
pub struct Cli {
    /// Key-value configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset, or run a Monte Carlo study with --iterations.
    Simulate(SimulateArgs),
    /// Fit an additive (mixed) model to a CSV file.
    Fit(FitArgs),
    /// Run the two-step interaction check on a CSV file.
    Ambiguity(AmbiguityArgs),
    /// Reproduce the simulation table.
    Table3(Table3Args),
    /// Plot-ready points: a fitted smooth on a grid, or 2x2 cell means.
    PlotData(PlotArgs),
}

#[derive(Debug, Args, Default)]
pub struct SimulateArgs {
    /// intro, s1..s7, education or fixations.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run this many iterations and write the study summary instead of data.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Sample size (default: the scenario's own).
    #[arg(long)]
    pub n: Option<usize>,
    /// Study model: auto, linear, quadratic or two-step.
    #[arg(long)]
    pub model: Option<String>,
    /// Output file: CSV dataset, or JSON study summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-iteration CSV of a study.
    #[arg(long)]
    pub records: Option<PathBuf>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct ModelArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub response: Option<String>,
    /// Smooth main effect `name` or `name:k`; repeatable.
    #[arg(long = "smooth")]
    pub smooths: Vec<String>,
    /// Parametric term (`x`, `x^2`, `x:z`, `(a+a^2)*b`); repeatable.
    #[arg(long = "term")]
    pub terms: Vec<String>,
    /// Random intercept factor; repeatable.
    #[arg(long = "random")]
    pub random: Vec<String>,
    /// Categorical covariate column used by parametric terms; repeatable.
    #[arg(long = "factor")]
    pub factors: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Also run the residual-spline rank check for each smooth.
    #[arg(long)]
    pub rank_check: bool,
}

#[derive(Debug, Args, Default)]
pub struct AmbiguityArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Interaction product to test, e.g. `x:z`; repeatable.
    #[arg(long = "interaction")]
    pub interactions: Vec<String>,
    /// Extra main effects of the parametric reference model; repeatable.
    #[arg(long = "reference-term")]
    pub reference_terms: Vec<String>,
    /// Fit the full reference design to the residuals in step 2.
    #[arg(long)]
    pub full_step2: bool,
    /// Human-readable summary file (also printed).
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Side-by-side table of reference and residual models (Markdown).
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct Table3Args {
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for table3.md, table3.json and table3_records.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct PlotArgs {
    /// Fit JSON written by `fit`.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    #[arg(long)]
    pub covariate: Option<String>,
    #[arg(long)]
    pub grid: Option<usize>,
    /// CSV with raw data for cell means.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub response: Option<String>,
    /// Two covariates split at `--threshold` into 2x2 cells.
    #[arg(long = "split", num_args = 2)]
    pub split: Vec<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Values read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    scenario: Option<String>,
    seed: Option<u64>,
    iterations: Option<usize>,
    n: Option<usize>,
    model: Option<String>,
    out: Option<PathBuf>,
    records: Option<PathBuf>,
    input: Option<PathBuf>,
    response: Option<String>,
    #[serde(alias = "smooths")]
    smooth: Option<Vec<String>>,
    #[serde(alias = "terms")]
    term: Option<Vec<String>>,
    random: Option<Vec<String>>,
    #[serde(alias = "factors")]
    factor: Option<Vec<String>>,
    #[serde(alias = "interactions")]
    interaction: Option<Vec<String>>,
    reference_term: Option<Vec<String>>,
    full_step2: Option<bool>,
    rank_check: Option<bool>,
    summary: Option<PathBuf>,
    table: Option<PathBuf>,
    fit: Option<PathBuf>,
    covariate: Option<String>,
    grid: Option<usize>,
    split: Option<Vec<String>>,
    threshold: Option<f64>,
}

fn read_config(path: &Path) -> std::result::Result<ConfigFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Run(e.into()))?;
    let normalized: String = text
        .lines()
        .map(|l| match l.split_once('=') {
            Some((k, v)) => format!("{} ={}\n", k.trim().replace('-', "_"), v),
            None => format!("{l}\n"),
        })
        .collect();
    toml::from_str(&normalized).map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))
}

fn fill<T>(flag: &mut Option<T>, file: Option<T>) {
    if flag.is_none() {
        *flag = file;
    }
}

fn fill_vec(flag: &mut Vec<String>, file: Option<Vec<String>>) {
    if flag.is_empty() {
        if let Some(v) = file {
            *flag = v;
        }
    }
}

fn fill_bool(flag: &mut bool, file: Option<bool>) {
    if !*flag {
        *flag = file.unwrap_or(false);
    }
}

impl ModelArgs {
    fn merge(&mut self, c: &mut ConfigFile) {
        fill(&mut self.input, c.input.take());
        fill(&mut self.response, c.response.take());
        fill(&mut self.out, c.out.take());
        fill_vec(&mut self.smooths, c.smooth.take());
        fill_vec(&mut self.terms, c.term.take());
        fill_vec(&mut self.random, c.random.take());
        fill_vec(&mut self.factors, c.factor.take());
    }
}

impl Command {
    fn merge(&mut self, mut c: ConfigFile) {
        match self {
            Command::Simulate(a) => {
                fill(&mut a.scenario, c.scenario);
                fill(&mut a.seed, c.seed);
                fill(&mut a.iterations, c.iterations);
                fill(&mut a.n, c.n);
                fill(&mut a.model, c.model);
                fill(&mut a.out, c.out);
                fill(&mut a.records, c.records);
            }
            Command::Fit(a) => {
                a.model.merge(&mut c);
                fill_bool(&mut a.rank_check, c.rank_check);
            }
            Command::Ambiguity(a) => {
                a.model.merge(&mut c);
                fill_vec(&mut a.interactions, c.interaction);
                fill_vec(&mut a.reference_terms, c.reference_term);
                fill_bool(&mut a.full_step2, c.full_step2);
                fill(&mut a.summary, c.summary);
                fill(&mut a.table, c.table);
            }
            Command::Table3(a) => {
                fill(&mut a.iterations, c.iterations);
                fill(&mut a.seed, c.seed);
                fill(&mut a.out, c.out);
            }
            Command::PlotData(a) => {
                fill(&mut a.fit, c.fit);
                fill(&mut a.covariate, c.covariate);
                fill(&mut a.grid, c.grid);
                fill(&mut a.input, c.input);
                fill(&mut a.response, c.response);
                fill_vec(&mut a.split, c.split);
                fill(&mut a.threshold, c.threshold);
                fill(&mut a.out, c.out);
            }
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Invalid flags or model specification (exit code 2).
    Usage(String),
    Run(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidSpec(_)
            | Error::InteractionNotCovered(_)
            | Error::InvalidArgument(_)
            | Error::UnknownCovariate(_)
            | Error::MissingCovariate(_)
            | Error::RankTooSmall(_) => CliError::Usage(e.to_string()),
            other => CliError::Run(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Usage(format!("missing required flag --{flag}")))
}

/// Files written so far; removed again unless the command succeeds.
#[derive(Default)]
struct Outputs {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn write(&mut self, path: &Path, contents: &[u8]) -> CliResult<()> {
        self.write_with(path, |p| fs::write(p, contents).map_err(Error::from))
    }

    fn write_with(&mut self, path: &Path, f: impl FnOnce(&Path) -> Result<()>) -> CliResult<()> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".partial");
        let tmp = PathBuf::from(tmp);
        if let Err(e) = f(&tmp).and_then(|_| fs::rename(&tmp, path).map_err(Error::from)) {
            let _ = fs::remove_file(&tmp);
            return Err(CliError::Run(e));
        }
        self.written.push(path.to_path_buf());
        Ok(())
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

fn threads() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()).filter(|&n: &usize| n > 0)
}

fn seed_or_fresh(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let nanos = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_nanos());
        let s = crate::simulate::splitmix64(nanos as u64 ^ std::process::id() as u64);
        eprintln!("seed: {s}");
        s
    })
}

fn to_json<T: Serialize>(v: &T) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v).map_err(Error::from)?;
    s.push(b'\n');
    Ok(s)
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(mut cli: Cli) -> CliResult<()> {
    if let Some(path) = &cli.config {
        let c = read_config(path)?;
        cli.command.merge(c);
    }
    let mut outputs = Outputs::default();
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a, &mut outputs)?,
        Command::Fit(a) => cmd_fit(a, &mut outputs)?,
        Command::Ambiguity(a) => cmd_ambiguity(a, &mut outputs)?,
        Command::Table3(a) => cmd_table3(a, &mut outputs)?,
        Command::PlotData(a) => cmd_plot_data(a, &mut outputs)?,
    }
    outputs.committed = true;
    Ok(())
}

fn cmd_simulate(a: SimulateArgs, outputs: &mut Outputs) -> CliResult<()> {
    let scenario = required(a.scenario, "scenario")?;
    let out = required(a.out, "out")?;
    if a.records.is_some() && a.iterations.is_none() {
        return Err(CliError::Usage("--records needs --iterations".into()));
    }
    let seed = seed_or_fresh(a.seed);
    match scenario.to_ascii_lowercase().as_str() {
        "education" => {
            let ds = generate_education(seed, a.n.unwrap_or(7748))?;
            return outputs.write_with(&out, |p| write_csv(&ds, p));
        }
        "fixations" => {
            let shape = CorpusShape { rows: a.n.unwrap_or(CorpusShape::default().rows), ..CorpusShape::default() };
            let ds = generate_fixations(seed, shape)?;
            return outputs.write_with(&out, |p| write_csv(&ds, p));
        }
        _ => {}
    }
    let id: ScenarioId = scenario.parse()?;
    let mut sc = Scenario::preset(id, seed);
    if let Some(n) = a.n {
        sc = sc.with_n(n);
    }
    let pipeline = match a.model.as_deref().unwrap_or("auto") {
        "auto" => Pipeline::for_scenario(id),
        "linear" => Pipeline::linear_mains(),
        "quadratic" => Pipeline::quadratic_x(),
        "two-step" | "two_step" => Pipeline::two_step(),
        m => return Err(CliError::Usage(format!("unknown model `{m}` (auto, linear, quadratic, two-step)"))),
    };
    match a.iterations {
        None => {
            let ds = generate(&sc)?;
            outputs.write_with(&out, |p| write_csv(&ds, p))
        }
        Some(it) => {
            let summary = run_study(&sc, &pipeline, it, threads())?;
            outputs.write(&out, &to_json(&summary)?)?;
            if let Some(r) = &a.records {
                outputs.write_with(r, |p| write_records_csv(&[&summary], fs::File::create(p)?))?;
            }
            eprintln!(
                "{}: mean t = {:.3}, mean R^2 = {:.4}, rejection rate = {:.3}",
                summary.scenario, summary.mean_t, summary.mean_r2, summary.rejection_rate
            );
            Ok(())
        }
    }
}

struct ParsedModel {
    spec: AmSpec,
    input: PathBuf,
    factors: Vec<String>,
}

fn parse_model(m: &ModelArgs) -> CliResult<ParsedModel> {
    let input = required(m.input.clone(), "input")?;
    let response = required(m.response.clone(), "response")?;
    let smooths: Vec<SmoothTerm> = m.smooths.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    let terms: Vec<&str> = m.terms.iter().map(String::as_str).collect();
    let parametric = if terms.is_empty() { None } else { Some(DesignSpec::parse(false, &terms)?) };
    let spec = AmSpec {
        response,
        smooths,
        parametric,
        random_intercepts: m.random.clone(),
        include_intercept: true,
    };
    spec.validate()?;
    Ok(ParsedModel { spec, input, factors: m.factors.clone() })
}

fn load_for(pm: &ParsedModel, extra_numeric: &[&str]) -> CliResult<Dataset> {
    let mut schema = vec![ColumnSchema::response(&pm.spec.response)];
    let mut seen: Vec<String> = vec![pm.spec.response.clone()];
    let mut add = |s: ColumnSchema, seen: &mut Vec<String>| {
        if !seen.contains(&s.name) {
            seen.push(s.name.clone());
            schema.push(s);
        }
    };
    for f in &pm.factors {
        add(ColumnSchema::factor(f), &mut seen);
    }
    for r in &pm.spec.random_intercepts {
        add(ColumnSchema::group(r), &mut seen);
    }
    for c in pm.spec.covariates().into_iter().chain(extra_numeric.iter().copied()) {
        add(ColumnSchema::numeric(c), &mut seen);
    }
    load_csv(&pm.input, &schema).map_err(|e| match e {
        Error::MissingColumn(c) => CliError::Usage(format!("column `{c}` not found in {}", pm.input.display())),
        other => CliError::Run(other),
    })
}

#[derive(Serialize)]
struct FitOutput<'a> {
    fit: &'a AmFit,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    rank_checks: Vec<NamedRankCheck>,
}

#[derive(Serialize)]
struct NamedRankCheck {
    covariate: String,
    check: RankCheck,
}

fn cmd_fit(a: FitArgs, outputs: &mut Outputs) -> CliResult<()> {
    let pm = parse_model(&a.model)?;
    let out = required(a.model.out.clone(), "out")?;
    let ds = load_for(&pm, &[])?;
    let fit = fit_am(&pm.spec, &ds)?;
    let mut rank_checks = Vec::new();
    if a.rank_check {
        for b in &fit.blocks {
            // partial residuals of this smooth
            let x = ds.numeric(&b.covariate)?;
            let partial: Vec<f64> = fit.residuals.iter().zip(x).map(|(r, &xi)| r + b.eval(xi)).collect();
            let basis = tps_basis(&b.covariate, x, b.k)?;
            let single = select_lambda(&basis, &partial)?;
            let check = rank_check(&basis, &single, &partial)?;
            rank_checks.push(NamedRankCheck { covariate: b.covariate.clone(), check });
        }
    }
    outputs.write(&out, &to_json(&FitOutput { fit: &fit, rank_checks })?)?;
    eprintln!(
        "R^2 = {:.4}, REML = {:.3}, converged = {} after {} iterations",
        fit.r_squared, fit.reml_score, fit.converged, fit.outer_iterations
    );
    Ok(())
}

fn parse_terms(v: &[String]) -> CliResult<Vec<Term>> {
    let mut out = Vec::new();
    for s in v {
        let spec = DesignSpec::parse(false, &[s.as_str()])?;
        out.extend(spec.terms);
    }
    Ok(out)
}

fn cmd_ambiguity(a: AmbiguityArgs, outputs: &mut Outputs) -> CliResult<()> {
    let pm = parse_model(&a.model)?;
    let out = required(a.model.out.clone(), "out")?;
    if a.interactions.is_empty() {
        return Err(CliError::Usage("missing required flag --interaction".into()));
    }
    let interactions = parse_terms(&a.interactions)?;
    let reference_terms = parse_terms(&a.reference_terms)?;
    let covered = pm.spec.covariates();
    for t in &interactions {
        if let Some(c) = t.covariates().into_iter().find(|c| !covered.contains(c)) {
            return Err(CliError::Usage(format!(
                "interaction `{t}` uses `{c}`, which is neither a smooth nor a parametric main effect"
            )));
        }
    }
    let extra: Vec<&str> = reference_terms.iter().flat_map(|t| t.covariates()).collect();
    let ds = load_for(&pm, &extra)?;
    let opts = TwoStepOptions { reference_terms: reference_terms.clone(), full_step2: a.full_step2, ..Default::default() };
    let (report, fit) = two_step_test_with(&pm.spec, &interactions, &ds, &opts)?;
    let text = report.summary_text();
    outputs.write(&out, &to_json(&report)?)?;
    if let Some(s) = &a.summary {
        outputs.write(s, text.as_bytes())?;
    }
    if let Some(t) = &a.table {
        let mut terms: Vec<Term> = pm.spec.smooths.iter().map(|s| Term::linear(&s.covariate)).collect();
        if let Some(p) = &pm.spec.parametric {
            terms.extend(p.terms.iter().cloned());
        }
        for t in reference_terms.iter().chain(&interactions) {
            if !terms.contains(t) {
                terms.push(t.clone());
            }
        }
        let table = compare_models(&ds, &DesignSpec::new(true, terms)?, &pm.spec, &interactions)?;
        outputs.write(t, table.to_markdown().as_bytes())?;
    }
    print!("{text}");
    if !fit.converged {
        eprintln!("warning: step-1 fit did not converge");
    }
    Ok(())
}

fn cmd_table3(a: Table3Args, outputs: &mut Outputs) -> CliResult<()> {
    let iterations = a.iterations.unwrap_or(100);
    if iterations == 0 {
        return Err(CliError::Usage("--iterations must be at least 1".into()));
    }
    let out = required(a.out, "out")?;
    let seed = seed_or_fresh(a.seed);
    fs::create_dir_all(&out).map_err(Error::from)?;
    let (table, summaries) = run_table3(iterations, seed, threads())?;
    let md = table.to_markdown();
    outputs.write(&out.join("table3.md"), md.as_bytes())?;
    outputs.write(&out.join("table3.json"), &to_json(&table)?)?;
    let refs: Vec<_> = summaries.iter().collect();
    outputs.write_with(&out.join("table3_records.csv"), |p| write_records_csv(&refs, fs::File::create(p)?))?;
    print!("{md}");
    Ok(())
}

fn cmd_plot_data(a: PlotArgs, outputs: &mut Outputs) -> CliResult<()> {
    let out = required(a.out, "out")?;
    if let Some(fit_path) = a.fit {
        let covariate = required(a.covariate, "covariate")?;
        let grid = a.grid.unwrap_or(101);
        if grid == 0 {
            return Err(CliError::Usage("--grid must be at least 1".into()));
        }
        let text = fs::read_to_string(&fit_path).map_err(Error::from)?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(Error::from)?;
        let fit_value = value.get("fit").cloned().unwrap_or(value);
        let fit: AmFit = serde_json::from_value(fit_value).map_err(Error::from)?;
        let block = fit.block(&covariate).ok_or_else(|| CliError::from(Error::UnknownCovariate(covariate.clone())))?;
        let (lo, hi) = block.function.range();
        let points: Vec<f64> = if grid == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..grid).map(|i| lo + (hi - lo) * i as f64 / (grid - 1) as f64).collect()
        };
        outputs.write_with(&out, |p| {
            let mut w = csv::Writer::from_path(p)?;
            w.write_record([covariate.as_str(), "s"])?;
            for x in &points {
                w.write_record([format!("{x:?}"), format!("{:?}", block.eval(*x))])?;
            }
            w.flush()?;
            Ok(())
        })
    } else if let Some(input) = a.input {
        let response = required(a.response, "response")?;
        if a.split.len() != 2 {
            return Err(CliError::Usage("--split needs two covariates".into()));
        }
        let threshold = a.threshold.unwrap_or(0.0);
        let schema =
            [ColumnSchema::response(&response), ColumnSchema::numeric(&a.split[0]), ColumnSchema::numeric(&a.split[1])];
        let ds = load_csv(&input, &schema)?;
        let ds = dichotomize(&dichotomize(&ds, &a.split[0], threshold)?, &a.split[1], threshold)?;
        let fx = ds.factor(&format!("{}_f", a.split[0]))?.clone();
        let fz = ds.factor(&format!("{}_f", a.split[1]))?.clone();
        let y = ds.numeric(&response)?;
        outputs.write_with(&out, |p| {
            let mut w = csv::Writer::from_path(p)?;
            w.write_record([a.split[0].as_str(), a.split[1].as_str(), "mean", "se", "n"])?;
            for (i, lx) in fx.levels().iter().enumerate() {
                for (j, lz) in fz.levels().iter().enumerate() {
                    let cell: Vec<f64> = (0..y.len())
                        .filter(|&r| fx.codes()[r] == i && fz.codes()[r] == j)
                        .map(|r| y[r])
                        .collect();
                    let (m, se) = crate::simulate::mean_se(&cell);
                    w.write_record([lx.clone(), lz.clone(), format!("{m:?}"), format!("{se:?}"), cell.len().to_string()])?;
                }
            }
            w.flush()?;
            Ok(())
        })
    } else {
        Err(CliError::Usage("plot-data needs --fit with --covariate, or --input with --split".into()))
    }
}
