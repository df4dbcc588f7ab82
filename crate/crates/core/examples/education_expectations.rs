//! Parents' education and children's expectations: the interaction flips
//! sign once the mains become quadratic, and disappears against smooth
//! mains.
//!
//!     cargo run --release --example education_expectations [seed]

use ambig::am::AmSpec;
use ambig::ambiguity::{two_step_test_with, TwoStepOptions};
use ambig::data::center;
use ambig::ols::{fit_formula, DesignSpec, Term};
use ambig::simulate::generate_education;

fn main() -> ambig::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let ds = center(&generate_education(seed, 7748)?, &["ME", "FE"])?;

    let linear = fit_formula(&ds, "EE", &DesignSpec::parse(true, &["ME", "FE", "ME:FE"])?)?;
    let quad = fit_formula(&ds, "EE", &DesignSpec::parse(true, &["ME", "ME^2", "FE", "FE^2", "ME:FE"])?)?;
    println!("linear mains:    t[ME:FE] = {:>6.2}", linear.t_value("ME:FE").unwrap());
    println!("quadratic mains: t[ME:FE] = {:>6.2}", quad.t_value("ME:FE").unwrap());

    let spec = AmSpec::new("EE").smooth("ME", 10).smooth("FE", 10);
    let opts = TwoStepOptions {
        reference_terms: vec![Term::power("ME", 2), Term::power("FE", 2)],
        ..TwoStepOptions::default()
    };
    let (report, _) = two_step_test_with(&spec, &[Term::product(&[("ME", 1), ("FE", 1)])], &ds, &opts)?;
    println!("\n{}", report.summary_text());
    Ok(())
}
