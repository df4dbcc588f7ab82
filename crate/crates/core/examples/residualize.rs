//! Residualizing one covariate on another removes only the linear part of
//! their dependence; the quadratic relation survives.
//!
//!     cargo run --release --example residualize

use ambig::ols::{fit_formula, residualize, DesignSpec};
use ambig::simulate::{generate, Scenario, ScenarioId};

fn main() -> ambig::Result<()> {
    let ds = generate(&Scenario::preset(ScenarioId::S6, 5))?;
    let ds = residualize(&ds, "z", &DesignSpec::parse(true, &["x"])?)?;

    let lin = fit_formula(&ds, "z_resid", &DesignSpec::parse(true, &["x"])?)?;
    let quad = fit_formula(&ds, "z_resid", &DesignSpec::parse(true, &["x", "x^2"])?)?;
    println!("z_resid ~ x:        R^2 = {:.4}", lin.r_squared.max(0.0));
    println!("z_resid ~ x + x^2:  R^2 = {:.4}, t[x^2] = {:.1}", quad.r_squared, quad.t_value("x^2").unwrap());

    let before = fit_formula(&ds, "y", &DesignSpec::parse(true, &["x", "z", "x:z"])?)?;
    let after = fit_formula(&ds, "y", &DesignSpec::parse(true, &["x", "z_resid", "x:z_resid"])?)?;
    println!("\nt[x:z]       = {:.2}", before.t_value("x:z").unwrap());
    println!("t[x:z_resid] = {:.2}", after.t_value("x:z_resid").unwrap());
    Ok(())
}
