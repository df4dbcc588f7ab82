mod common;

use ambig::simulate::*;
use ambig::{Error, Warning};
use common::cor;

#[test]
fn covariate_correlations() {
    // population values: 1/sqrt(5) and 1/sqrt(2)
    let s1: Vec<f64> = (0..20)
        .map(|seed| {
            let ds = generate(&Scenario::preset(ScenarioId::S1, seed)).unwrap();
            cor(ds.numeric("x").unwrap(), ds.numeric("z").unwrap())
        })
        .collect();
    let mean = s1.iter().sum::<f64>() / 20.0;
    assert!((mean - 0.2f64.sqrt()).abs() < 0.015, "mean S1 cor {mean}");
    assert!(s1.iter().filter(|c| (*c - 0.45).abs() < 0.05).count() >= 16, "{s1:?}");
    for seed in [1, 2, 3] {
        let intro = generate(&Scenario::preset(ScenarioId::Intro, seed)).unwrap();
        let c = cor(intro.numeric("x").unwrap(), intro.numeric("z").unwrap());
        assert!((c - 0.70).abs() < 0.03, "intro cor {c}");
    }
}

#[test]
fn quadratic_law_is_uncorrelated_but_dependent() {
    let ds = generate(&Scenario::preset(ScenarioId::S6, 4).with_n(10_000)).unwrap();
    let x = ds.numeric("x").unwrap();
    let z = ds.numeric("z").unwrap();
    assert!(cor(x, z).abs() < 0.05);
    let x2: Vec<f64> = x.iter().map(|v| v * v).collect();
    assert!(cor(&x2, z) > 0.8);
}

#[test]
fn conditional_mean_is_the_square() {
    let ds = generate(&Scenario::preset(ScenarioId::S1, 5).with_n(100_000)).unwrap();
    let x = ds.numeric("x").unwrap();
    let y = ds.numeric("y").unwrap();
    let bins = 20;
    let mut sum = vec![0.0; bins];
    let mut cnt = vec![0usize; bins];
    let mut truth = vec![0.0; bins];
    for (&xi, &yi) in x.iter().zip(y) {
        let b = (((xi + 1.0) / 2.0) * bins as f64).floor().min((bins - 1) as f64) as usize;
        sum[b] += yi;
        truth[b] += xi * xi;
        cnt[b] += 1;
    }
    for b in 0..bins {
        let n = cnt[b] as f64;
        let dev = (sum[b] - truth[b]) / n;
        assert!(dev.abs() < 3.0 / n.sqrt(), "bin {b}: {dev}");
    }
}

#[test]
fn generation_is_deterministic() {
    let sc = Scenario::preset(ScenarioId::S4, 11);
    let a = generate(&sc).unwrap();
    let b = generate(&sc).unwrap();
    for name in ["x", "y", "z"] {
        let (u, v) = (a.numeric(name).unwrap(), b.numeric(name).unwrap());
        assert!(u.iter().zip(v).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    let c = generate(&sc.with_seed(12)).unwrap();
    assert_ne!(a.numeric("x").unwrap(), c.numeric("x").unwrap());
}

#[test]
fn study_is_identical_across_thread_counts() {
    let sc = Scenario::preset(ScenarioId::S3, 13).with_n(300);
    let runs: Vec<String> = [Some(1), Some(3), None]
        .into_iter()
        .map(|t| serde_json::to_string(&run_study(&sc, &Pipeline::two_step(), 12, t).unwrap()).unwrap())
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn summary_means_recompute_from_records() {
    let sc = Scenario::preset(ScenarioId::S2, 14);
    let s = run_study(&sc, &Pipeline::quadratic_x(), 15, Some(2)).unwrap();
    let mean = |f: &dyn Fn(&IterationRecord) -> f64| s.records.iter().map(f).sum::<f64>() / s.records.len() as f64;
    assert!((s.mean_t - mean(&|r| r.t)).abs() <= 1e-12);
    assert!((s.mean_r2 - mean(&|r| r.r2)).abs() <= 1e-12);
    assert!((s.mean_coefficient - mean(&|r| r.coefficient)).abs() <= 1e-12);
    let rate = s.records.iter().filter(|r| r.t.abs() > 2.0).count() as f64 / 15.0;
    assert_eq!(s.rejection_rate, rate);
    assert_eq!(s.completed, 15);
    assert!(s.warnings.contains(&Warning::TooFewIterations { iterations: 15 }));
    for (i, r) in s.records.iter().enumerate() {
        assert_eq!(r.iteration, i);
        assert_eq!(r.seed, iteration_seed(14, i));
    }
}

#[test]
fn empty_study() {
    let sc = Scenario::preset(ScenarioId::S1, 1);
    assert!(matches!(run_study(&sc, &Pipeline::linear_mains(), 0, None), Err(Error::EmptyStudy)));
}

#[test]
fn type_one_inflation_and_absorbed_power() {
    let s1 = run_study(&Scenario::preset(ScenarioId::S1, 15), &Pipeline::linear_mains(), 40, None).unwrap();
    assert!(estimate_rates(&s1).rate > 0.5);
    let s4 = run_study(&Scenario::preset(ScenarioId::S4, 15), &Pipeline::two_step(), 40, None).unwrap();
    let r = estimate_rates(&s4);
    assert!(r.rate > 0.8, "power {}", r.rate);
    assert!(r.warnings.is_empty());
    assert!(s4.mean_coefficient < 1.0);
}

#[test]
fn records_csv_layout() {
    let s = run_study(&Scenario::preset(ScenarioId::S3, 16).with_n(200), &Pipeline::two_step(), 3, None).unwrap();
    let mut buf = Vec::new();
    write_records_csv(&[&s], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "scenario,iteration,seed,t,coefficient,r2,step2_r2");
    assert_eq!(lines.count(), 3);
    assert!(text.contains("\ns3,0,"));
}

#[test]
fn scenario_names_round_trip() {
    for id in ScenarioId::ALL {
        assert_eq!(id.to_string().parse::<ScenarioId>().unwrap(), id);
    }
    assert!("s9".parse::<ScenarioId>().is_err());
}

#[test]
fn education_stand_in_shape() {
    let ds = generate_education(1, 3000).unwrap();
    let me = ds.numeric("ME").unwrap();
    let fe = ds.numeric("FE").unwrap();
    assert!(me.iter().chain(fe).all(|v| (4.0..=20.0).contains(v) && v.fract() == 0.0));
    assert!(cor(me, fe) > 0.4);
}

#[test]
fn fixation_corpus_shape() {
    let shape = CorpusShape { rows: 2000, ..CorpusShape::default() };
    let ds = generate_fixations(2, shape).unwrap();
    assert_eq!(ds.n(), 2000);
    assert_eq!(ds.factor("Subject").unwrap().levels().len(), 48);
    assert_eq!(ds.factor("Sentence").unwrap().levels().len(), 120);
    let lw = ds.numeric("lw").unwrap();
    let ls = ds.numeric("ls").unwrap();
    let lr = ds.numeric("lr").unwrap();
    assert!((0..2000).all(|i| lw[i] == lr[i] + ls[i]));
}

#[test]
fn uniforms_and_normals() {
    let mut d = Draws::new(99);
    let u: Vec<f64> = (0..20000).map(|_| d.unit()).collect();
    assert!(u.iter().all(|v| (0.0..1.0).contains(v)));
    let m = u.iter().sum::<f64>() / u.len() as f64;
    assert!((m - 0.5).abs() < 0.01);
    let z: Vec<f64> = (0..20000).map(|_| d.normal()).collect();
    let m = z.iter().sum::<f64>() / z.len() as f64;
    let v = z.iter().map(|x| (x - m).powi(2)).sum::<f64>() / z.len() as f64;
    assert!(m.abs() < 0.03 && (v - 1.0).abs() < 0.04);
}
