//! Two positively correlated covariates, a response that depends on neither
//! main effect linearly, and a large "interaction" in both a linear model and
//! a median-split ANOVA.
//!
//!     cargo run --release --example intro_anova [seed]

use ambig::data::dichotomize;
use ambig::ols::{anova_two_way, fit_formula, DesignSpec};
use ambig::simulate::{generate, Scenario, ScenarioId};

fn main() -> ambig::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let ds = generate(&Scenario::preset(ScenarioId::Intro, seed))?;

    let lm = fit_formula(&ds, "y", &DesignSpec::parse(true, &["x", "z", "x:z"])?)?;
    println!("linear model, n = {}, R^2 = {:.4}", ds.n(), lm.r_squared);
    for name in ["(Intercept)", "x", "z", "x:z"] {
        let e = lm.estimate(name).unwrap();
        println!("  {name:<12} {:>9.4} (SE {:.4}) t = {:>6.2}", e.estimate, e.se, e.t);
    }

    let split = dichotomize(&dichotomize(&ds, "x", 0.0)?, "z", 0.0)?;
    let anova = anova_two_way(&split, "y", "x_f", "z_f")?;
    println!("\ntwo-way ANOVA on sign splits");
    for row in &anova.rows {
        match row.f_value {
            Some(f) => println!("  {:<10} df = {} SS = {:>9.3} F = {:>7.2}", row.name, row.dof, row.sum_sq, f),
            None => println!("  {:<10} df = {} SS = {:>9.3}", row.name, row.dof, row.sum_sq),
        }
    }
    Ok(())
}
