//! Additive mixed model on a synthetic eye-tracking corpus: smooth word
//! length, random intercepts for subjects, sentences and words, then the
//! two-step check for the age by length interaction.
//!
//!     cargo run --release --example mixed_model [rows]

use ambig::am::AmSpec;
use ambig::ambiguity::two_step_test_with;
use ambig::ambiguity::TwoStepOptions;
use ambig::ols::{DesignSpec, Term};
use ambig::simulate::{generate_fixations, CorpusShape};

fn main() -> ambig::Result<()> {
    let rows = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4000);
    let ds = generate_fixations(17, CorpusShape { rows, ..CorpusShape::default() })?;

    let spec = AmSpec::new("xl")
        .smooth("lw", 10)
        .smooth("a", 10)
        .parametric(DesignSpec::parse(false, &["ls"])?)
        .random("Subject")
        .random("Sentence")
        .random("Word");
    let t0 = std::time::Instant::now();
    let (report, fit) =
        two_step_test_with(&spec, &[Term::product(&[("a", 1), ("lw", 1)])], &ds, &TwoStepOptions::default())?;
    println!("n = {}, converged = {} in {} outer iterations ({:.1?})", fit.n, fit.converged, fit.outer_iterations, t0.elapsed());
    for b in &fit.blocks {
        println!("  s({}) edf = {:.2}", b.covariate, b.edf);
    }
    for r in &fit.random_effects {
        println!("  (1|{}) levels = {} variance = {:.4}", r.factor, r.levels.len(), r.variance);
    }
    println!("  residual variance = {:.4}", fit.sigma2);
    println!("\n{}", report.summary_text());
    Ok(())
}
