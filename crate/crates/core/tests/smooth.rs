mod common;

use ambig::simulate::Draws;
use ambig::smooth::{fit_fixed_lambda, rank_check, select_lambda, tps_basis, RankOutcome};
use ambig::{Error, Warning};
use common::*;

/// Twenty equispaced points, shuffled, with a noisy response.
fn twenty_points(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut d = Draws::new(seed);
    let mut x: Vec<f64> = (0..20).map(|i| -3.0 + 0.4 * i as f64).collect();
    for i in (1..20).rev() {
        x.swap(i, d.below(i + 1));
    }
    let y = x.iter().map(|&v| (v * 0.9).sin() + 0.3 * d.normal()).collect();
    (x, y)
}

#[test]
fn full_rank_matches_natural_cubic_smoothing_spline() {
    for seed in [1, 2, 3] {
        let (x, y) = twenty_points(seed);
        let basis = tps_basis("x", &x, 20).unwrap();
        for lambda in [0.01, 1.0, 100.0] {
            let fit = fit_fixed_lambda(&basis, &y, lambda).unwrap();
            let oracle = reinsch(&x, &y, lambda);
            let diff = max_abs_diff(&fit.fitted, &oracle);
            assert!(diff < 1e-8, "seed {seed} lambda {lambda}: {diff:e}");
        }
    }
}

#[test]
fn full_rank_matches_thin_plate_system() {
    let (x, y) = twenty_points(9);
    let basis = tps_basis("x", &x, 20).unwrap();
    for lambda in [0.01, 1.0, 100.0] {
        let fit = fit_fixed_lambda(&basis, &y, lambda).unwrap();
        assert!(max_abs_diff(&fit.fitted, &wahba(&x, &y, lambda)) < 1e-8);
    }
}

#[test]
fn five_points_generalized_ridge() {
    let x = [0.3, 1.1, 1.7, 2.9, 4.0];
    let y = [1.0, -0.4, 0.8, 2.2, 1.5];
    let basis = tps_basis("x", &x, 5).unwrap();
    let fit = fit_fixed_lambda(&basis, &y, 1.0).unwrap();
    assert!(max_abs_diff(&fit.fitted, &generalized_ridge(&basis, &y, 1.0)) < 1e-8);
    assert!(max_abs_diff(&fit.fitted, &reinsch(&x, &y, 1.0)) < 1e-8);
}

#[test]
fn reduced_rank_matches_generalized_ridge() {
    let mut d = Draws::new(4);
    let x = uniform_points(&mut d, 300, 0.0, 10.0);
    let y: Vec<f64> = x.iter().map(|v| v.sqrt() + 0.2 * d.normal()).collect();
    let basis = tps_basis("x", &x, 12).unwrap();
    for lambda in [1e-4, 1e-1, 1e2] {
        let fit = fit_fixed_lambda(&basis, &y, lambda).unwrap();
        assert!(max_abs_diff(&fit.fitted, &generalized_ridge(&basis, &y, lambda)) < 1e-8);
    }
}

#[test]
fn linear_data_any_lambda() {
    let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.37 - 2.0).collect();
    let y: Vec<f64> = x.iter().map(|v| 3.0 - 1.5 * v).collect();
    let basis = tps_basis("x", &x, 8).unwrap();
    let scale: f64 = y.iter().map(|v| v * v).sum();
    for lambda in [1e-6, 1.0, 1e6] {
        let fit = fit_fixed_lambda(&basis, &y, lambda).unwrap();
        assert!(fit.rss <= 1e-16 * scale.max(1.0) * 100.0, "rss {}", fit.rss);
        assert!(fit.edf >= 2.0 - 1e-9);
    }
    let alpha = basis.linear_coefficients(3.0, -1.5);
    assert!(basis.penalty_quadratic_form(&alpha) <= 1e-10);
}

#[test]
fn infinite_smoothing_is_the_least_squares_line() {
    let mut d = Draws::new(8);
    let x = uniform_points(&mut d, 200, -1.0, 1.0);
    let y: Vec<f64> = x.iter().map(|v| v * v + 0.5 * v + 0.1 * d.normal()).collect();
    let basis = tps_basis("x", &x, 10).unwrap();
    let fit = fit_fixed_lambda(&basis, &y, 1e8).unwrap();
    assert!(max_abs_diff(&fit.fitted, &ols_line(&x, &y)) < 1e-4);
}

#[test]
fn zero_lambda_full_rank_interpolates() {
    let (x, y) = twenty_points(5);
    let basis = tps_basis("x", &x, 20).unwrap();
    let fit = fit_fixed_lambda(&basis, &y, 0.0).unwrap();
    let scale: f64 = y.iter().map(|v| v * v).sum();
    assert!(fit.rss <= 1e-12 * scale, "rss {}", fit.rss);
    assert!((fit.edf - 20.0).abs() < 1e-8);
}

#[test]
fn pure_noise_smooths_to_a_line() {
    // the selected edf is random; its median over seeds sits at the line
    let mut edfs: Vec<f64> = (0..25)
        .map(|s| {
            let mut d = Draws::new(2100 + s);
            let x = uniform_points(&mut d, 500, 0.0, 1.0);
            let y: Vec<f64> = (0..500).map(|_| d.normal()).collect();
            select_lambda(&tps_basis("x", &x, 10).unwrap(), &y).unwrap().edf
        })
        .collect();
    edfs.sort_by(f64::total_cmp);
    assert!(edfs[12] <= 2.5, "median edf {}", edfs[12]);
    let share = edfs.iter().filter(|&&e| e <= 2.5).count() as f64 / 25.0;
    assert!(share >= 0.5, "share {share}");
}

#[test]
fn recovers_a_quadratic() {
    let mut d = Draws::new(22);
    let x = uniform_points(&mut d, 1000, -1.0, 1.0);
    let y: Vec<f64> = x.iter().map(|v| v * v + d.normal()).collect();
    let fit = select_lambda(&tps_basis("x", &x, 10).unwrap(), &y).unwrap();
    let mse: f64 = x.iter().zip(&fit.fitted).map(|(v, f)| (v * v - f).powi(2)).sum::<f64>() / 1000.0;
    assert!(mse < 0.05, "mse {mse}");
}

#[test]
fn reml_matches_definition() {
    let mut d = Draws::new(23);
    let x = uniform_points(&mut d, 250, -2.0, 2.0);
    let y: Vec<f64> = x.iter().map(|v| v.tanh() + 0.3 * d.normal()).collect();
    let basis = tps_basis("x", &x, 10).unwrap();
    for lambda in [1e-5, 0.1, 1.0, 1e3] {
        let fit = fit_fixed_lambda(&basis, &y, lambda).unwrap();
        let oracle = reml_from_definition(&fit, &y);
        assert!((fit.reml_score - oracle).abs() < 1e-8, "{} vs {oracle}", fit.reml_score);
    }
}

#[test]
fn optimizer_agrees_with_grid_search() {
    let mut d = Draws::new(24);
    for _ in 0..10 {
        let f = random_function(&mut d);
        let x = uniform_points(&mut d, 200, -2.0, 2.0);
        let y: Vec<f64> = x.iter().map(|&v| f(v) + 0.5 * d.normal()).collect();
        let basis = tps_basis("x", &x, 10).unwrap();
        let fit = select_lambda(&basis, &y).unwrap();
        let grid = grid_reml_argmax(&basis, &y);
        assert!((fit.lambda.log10() - grid).abs() < 0.1, "{} vs {grid}", fit.lambda.log10());
    }
}

#[test]
fn influence_operator_is_symmetric() {
    let mut d = Draws::new(25);
    let x = uniform_points(&mut d, 150, 0.0, 3.0);
    let basis = tps_basis("x", &x, 10).unwrap();
    let u: Vec<f64> = (0..150).map(|_| d.normal()).collect();
    let v: Vec<f64> = (0..150).map(|_| d.normal()).collect();
    for lambda in [1e-3, 1.0, 50.0] {
        let hu = fit_fixed_lambda(&basis, &u, lambda).unwrap().fitted;
        let hv = fit_fixed_lambda(&basis, &v, lambda).unwrap().fitted;
        let a: f64 = u.iter().zip(&hv).map(|(p, q)| p * q).sum();
        let b: f64 = hu.iter().zip(&v).map(|(p, q)| p * q).sum();
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn boundary_warning_for_linear_truth() {
    let mut d = Draws::new(5);
    let x = uniform_points(&mut d, 200, 0.0, 1.0);
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 0.5 * d.normal()).collect();
    let fit = select_lambda(&tps_basis("x", &x, 6).unwrap(), &y).unwrap();
    assert!(fit.warnings.iter().any(|w| matches!(w, Warning::Boundary { .. })));
}

#[test]
fn basis_errors() {
    assert!(matches!(tps_basis("x", &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0], 5), Err(Error::TooFewDistinctValues { .. })));
    assert!(matches!(tps_basis("x", &[1.0, 2.0, 3.0, 4.0], 2), Err(Error::RankTooSmall(2))));
}

#[test]
fn rank_check_linear_truth_is_sufficient() {
    let mut d = Draws::new(26);
    let x = uniform_points(&mut d, 300, 0.0, 1.0);
    let y: Vec<f64> = x.iter().map(|v| 1.0 + 2.0 * v + 0.1 * d.normal()).collect();
    let basis = tps_basis("x", &x, 4).unwrap();
    let fit = select_lambda(&basis, &y).unwrap();
    let check = rank_check(&basis, &fit, &y).unwrap();
    assert_eq!(check.outcome, RankOutcome::Sufficient);
    assert_eq!(check.k_final, 4);
    assert_eq!(check.steps.len(), 1);
}

#[test]
fn rank_check_doubles_for_a_wiggly_truth() {
    let mut d = Draws::new(27);
    let noise = 0.1;
    let x = uniform_points(&mut d, 400, 0.0, 1.0);
    let y: Vec<f64> =
        x.iter().map(|v| (8.0 * std::f64::consts::PI * v).sin() + noise * d.normal()).collect();
    let basis = tps_basis("x", &x, 5).unwrap();
    let fit = select_lambda(&basis, &y).unwrap();
    let check = rank_check(&basis, &fit, &y).unwrap();
    assert!(check.steps[0].significant);
    assert!(check.k_final >= 20, "{check:?}");
    assert!(check.steps.len() <= 5);
    // residual error at the recommended rank is at the noise level
    let big = tps_basis("x", &x, check.k_final).unwrap();
    let refit = select_lambda(&big, &y).unwrap();
    let rmse = (refit.rss / 400.0).sqrt();
    assert!(rmse < 1.2 * noise, "rmse {rmse}");
}

#[test]
fn rank_check_cannot_double() {
    let x: Vec<f64> = (0..12).map(|i| i as f64).collect();
    let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
    let basis = tps_basis("x", &x, 7).unwrap();
    let fit = select_lambda(&basis, &y).unwrap();
    assert!(matches!(rank_check(&basis, &fit, &y), Err(Error::CannotDouble { .. })));
}

#[test]
fn summary_round_trips_through_json() {
    let (x, y) = twenty_points(30);
    let fit = select_lambda(&tps_basis("x", &x, 8).unwrap(), &y).unwrap();
    let s = fit.summary();
    let back: ambig::smooth::SmoothSummary = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
    for &v in &x {
        assert_eq!(back.function.eval(v).to_bits(), s.function.eval(v).to_bits());
    }
}
