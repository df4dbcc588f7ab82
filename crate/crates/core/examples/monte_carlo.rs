//! Rejection rate of the step-2 test when the truth has no interaction.
//! Results are identical for any thread count.
//!
//!     AMBIG_THREADS=4 cargo run --release --example monte_carlo [iterations]

use ambig::simulate::{estimate_rates, run_study, Pipeline, Scenario, ScenarioId};

fn main() -> ambig::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let threads = std::env::var("AMBIG_THREADS").ok().and_then(|v| v.parse().ok());
    let sc = Scenario::preset(ScenarioId::S3, 99);
    let summary = run_study(&sc, &Pipeline::two_step(), iterations, threads)?;
    let rate = estimate_rates(&summary);
    println!("{} iterations of {}", summary.completed, summary.pipeline);
    println!("mean step-2 t = {:.3} (SE {:.3})", summary.mean_t, summary.se_t);
    println!("rejection rate |t| > 2 = {:.3} (MC SE {:.3})", rate.rate, rate.monte_carlo_se);
    for w in &rate.warnings {
        println!("warning: {w:?}");
    }
    Ok(())
}
