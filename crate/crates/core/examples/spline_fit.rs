//! Thin-plate regression spline with REML-selected smoothing, followed by
//! the basis-dimension check.
//!
//!     cargo run --release --example spline_fit

use ambig::simulate::Draws;
use ambig::smooth::{fit_fixed_lambda, rank_check, select_lambda, tps_basis};

fn main() -> ambig::Result<()> {
    let mut d = Draws::new(11);
    let n = 400;
    let x: Vec<f64> = (0..n).map(|_| d.uniform(-2.0, 2.0)).collect();
    let y: Vec<f64> = x.iter().map(|&v| (2.0 * v).sin() + 0.3 * d.normal()).collect();

    let basis = tps_basis("x", &x, 10)?;
    let fit = select_lambda(&basis, &y)?;
    let s = fit.summary();
    println!("k = {}, log10(lambda) = {:.3}, edf = {:.2}, REML = {:.2}", s.k, s.log10_lambda, s.edf, s.reml_score);

    println!("\n{:>6} {:>10} {:>10}", "x", "s(x)", "sin(2x)");
    for i in 0..=8 {
        let v = -2.0 + 0.5 * i as f64;
        println!("{v:>6.2} {:>10.4} {:>10.4}", s.function.eval(v), (2.0 * v).sin());
    }

    println!("\nedf along the lambda path");
    for l in [-4.0, -2.0, 0.0, 2.0, 4.0, 8.0] {
        let f = fit_fixed_lambda(&basis, &y, 10f64.powf(l))?;
        println!("  log10(lambda) = {l:>5.1}  edf = {:.3}", f.edf);
    }

    // a too-small basis for a wiggly truth
    let y2: Vec<f64> = x.iter().map(|&v| (5.0 * v).sin() + 0.2 * d.normal()).collect();
    let b4 = tps_basis("x", &x, 4)?;
    let f4 = select_lambda(&b4, &y2)?;
    let check = rank_check(&b4, &f4, &y2)?;
    println!("\nrank check starting at k = 4: {:?}, final k = {}", check.outcome, check.k_final);
    for st in &check.steps {
        println!("  k = {:>3} residual edf = {:.2} F = {:.2}", st.k, st.residual_edf, st.f_statistic);
    }
    Ok(())
}
