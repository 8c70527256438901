use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use nimd::data::{build_design, check_identifiability, write_dataset_to_writer, parse_dataset_from_reader};
use nimd::mean_response::empirical_mgf;
use nimd::outcome::{fit_least_squares, predict_mu};
use nimd::propensity::{fit_propensity, recover_alpha0, PropensityFit};
use nimd::rng::stream;
use nimd::simulation::{compute_truth, generate_dataset, Scenario};
use nimd::{fit_point, fit_proposed, BasisTerm, CsvSchema, Dataset, Error, FitOptions, ModelConfig};

fn example1_config() -> ModelConfig {
    Scenario::example1(-1.7, 0.0).unwrap().model_config()
}

#[test]
fn identifiability_of_reference_bases() {
    let ds = generate_dataset(&Scenario::example2(-2.7, 0.0).unwrap(), 200, 1).unwrap();
    let linear = ModelConfig::new(vec![BasisTerm::intercept(1), BasisTerm::linear(1, 0)], vec![0]).unwrap();
    assert!(!check_identifiability(&build_design(&ds, &linear).unwrap(), None).identifiable);
    let quad = Scenario::example2(-2.7, 0.0).unwrap().model_config();
    assert!(check_identifiability(&build_design(&ds, &quad).unwrap(), None).identifiable);

    let ds1 = generate_dataset(&Scenario::example1(-1.7, 0.0).unwrap(), 200, 1).unwrap();
    assert!(check_identifiability(&build_design(&ds1, &example1_config()).unwrap(), None).identifiable);

    match fit_point(&ds, &linear) {
        Err(e @ Error::Identifiability(_)) => assert_eq!(e.code().as_str(), "IDENTIFIABILITY"),
        other => panic!("expected identifiability error, got {other:?}"),
    }
}

#[test]
fn csv_round_trip_of_generated_data() {
    let ds = generate_dataset(&Scenario::example1(-1.7, 1.0).unwrap(), 300, 4).unwrap();
    let mut buf = Vec::new();
    write_dataset_to_writer(&ds, &mut buf).unwrap();
    let back = parse_dataset_from_reader(buf.as_slice(), &CsvSchema::default()).unwrap();
    assert_eq!(back.r(), ds.r());
    assert_eq!(back.x(), ds.x());
    assert_eq!(back.y(), ds.y());
}

#[test]
fn complete_case_regression_is_consistent() {
    let ds = generate_dataset(&Scenario::example1(-1.7, 0.0).unwrap(), 100_000, 7).unwrap();
    let dm = build_design(&ds, &example1_config()).unwrap();
    let fit = fit_least_squares(&ds, &dm).unwrap();
    for (got, want) in fit.xi_hat.iter().zip([2.5, -1.0, 1.5]) {
        assert!((got - want).abs() < 0.05, "{got} vs {want}");
    }

    // Residual orthogonality and consistency with the predictions.
    let mu = predict_mu(&fit, &dm).unwrap();
    for k in 0..dm.q() {
        let dot: f64 = fit.observed_rows.iter().zip(&fit.residuals).map(|(&i, e)| e * dm.m[(i, k)]).sum();
        let scale: f64 = fit.observed_rows.iter().zip(&fit.residuals).map(|(&i, e)| (e * dm.m[(i, k)]).abs()).sum();
        assert!(dot.abs() < 1e-8 * scale, "column {k}: {dot}");
    }
    for (&i, e) in fit.observed_rows.iter().zip(&fit.residuals) {
        assert!((ds.y()[i].unwrap() - mu[i] - e).abs() < 1e-12);
    }
}

#[test]
fn duplicated_column_is_rejected() {
    let ds = generate_dataset(&Scenario::example1(-1.7, 0.0).unwrap(), 200, 2).unwrap();
    let cfg = ModelConfig::new(
        vec![BasisTerm::intercept(2), BasisTerm::linear(2, 0), BasisTerm::linear(2, 1), BasisTerm::linear(2, 1)],
        vec![0],
    );
    // Either the configuration or the fit must refuse the duplicate.
    let outcome = cfg.and_then(|cfg| {
        let dm = build_design(&ds, &cfg)?;
        fit_least_squares(&ds, &dm)
    });
    assert!(outcome.is_err());
}

#[test]
fn propensity_fit_recovers_induced_parameters() {
    let sc = Scenario::example1(-1.7, 0.0).unwrap();
    let ds = generate_dataset(&sc, 100_000, 11).unwrap();
    let point = fit_point(&ds, &sc.model_config()).unwrap();
    let theta = &point.propensity.theta_hat;
    for (got, want) in theta.iter().zip([-1.2, -0.4, 0.5]) {
        assert!((got - want).abs() < 0.05, "{got} vs {want}");
    }
    assert!((point.tau.alpha0_hat + 1.7).abs() < 0.1, "{}", point.tau.alpha0_hat);
    let truth = compute_truth(&sc, 1_000_000, 3).unwrap();
    assert!((point.tau.tau_hat - truth.tau0).abs() < 0.03);
}

#[test]
fn independent_missingness_gives_flat_propensity() {
    let sc = Scenario::example1(-1.7, 0.0).unwrap();
    let base = generate_dataset(&sc, 100_000, 12).unwrap();
    let mut rng = stream(12, 1);
    let r: Vec<u8> = (0..base.n()).map(|_| u8::from(rng.random::<f64>() < 0.7)).collect();
    let y: Vec<f64> = (0..base.n()).map(|i| base.x()[(i, 0)] + base.x()[(i, 1)] + rng.random::<f64>()).collect();
    let ds = Dataset::from_full(r, &y, base.x().clone()).unwrap();
    let dm = build_design(&ds, &sc.model_config()).unwrap();
    let mu = predict_mu(&fit_least_squares(&ds, &dm).unwrap(), &dm).unwrap();
    let fit = fit_propensity(&ds, &dm, &mu).unwrap();
    let logit = (0.3f64 / 0.7).ln();
    assert!((fit.alpha() - logit).abs() < 0.05, "{}", fit.alpha());
    assert!(fit.beta()[0].abs() < 0.05 && fit.gamma().abs() < 0.05);
}

#[test]
fn alpha0_recovery() {
    let fit = |alpha: f64| PropensityFit {
        theta_hat: nalgebra::DVector::from_vec(vec![alpha, 0.0, 0.5]),
        loglik: 0.0,
        iterations: 0,
        converged: true,
        gradient_norm: 0.0,
        loglik_trace: vec![],
    };
    assert!((recover_alpha0(&fit(-1.2), 0.5f64.exp()).unwrap() + 1.7).abs() < 1e-12);
    assert!((recover_alpha0(&fit(0.0), 2.0).unwrap() + 2f64.ln()).abs() < 1e-15);
    assert_eq!(recover_alpha0(&fit(0.3), 1.0).unwrap(), 0.3);
    assert!(recover_alpha0(&fit(0.3), 0.0).is_err());
}

#[test]
fn gaussian_residual_mgf() {
    let mut rng = stream(5, 0);
    let e: Vec<f64> = (0..1_000_000).map(|_| 2.0 * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    let m = empirical_mgf(&e, 0.5).unwrap();
    assert!((m.m1() - 0.5f64.exp()).abs() < 0.01, "{}", m.m1());
    assert!((m.ratio() - 2.0).abs() < 0.02, "{}", m.ratio());
}

#[test]
fn log_mgf_derivative_is_ratio() {
    let mut rng = stream(6, 0);
    let e: Vec<f64> = (0..500).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
    for t in [-1.0, -0.2, 0.0, 0.7, 1.5] {
        let h = 1e-5;
        let fd = (empirical_mgf(&e, t + h).unwrap().log_m1() - empirical_mgf(&e, t - h).unwrap().log_m1()) / (2.0 * h);
        let ratio = empirical_mgf(&e, t).unwrap().ratio();
        assert!((fd - ratio).abs() < 1e-6, "t={t}: {fd} vs {ratio}");
    }
}

fn permuted(ds: &Dataset, seed: u64) -> Dataset {
    let mut rows: Vec<usize> = (0..ds.n()).collect();
    rows.shuffle(&mut stream(seed, 0));
    ds.select_rows(&rows)
}

#[test]
fn fits_are_permutation_invariant() {
    let sc = Scenario::example1(-1.7, 1.0).unwrap();
    let cfg = sc.model_config();
    let ds = generate_dataset(&sc, 1500, 21).unwrap();
    let a = fit_proposed(&ds, &cfg, &FitOptions::default()).unwrap();
    let b = fit_proposed(&permuted(&ds, 3), &cfg, &FitOptions::default()).unwrap();
    assert!((a.point.outcome.sigma2_hat - b.point.outcome.sigma2_hat).abs() < 1e-12);
    assert!((&a.point.propensity.theta_hat - &b.point.propensity.theta_hat).amax() < 1e-10);
    assert!((a.tau_hat() - b.tau_hat()).abs() < 1e-10);
    let rel = (&a.variance.sigma - &b.variance.sigma).amax() / a.variance.sigma.amax();
    assert!(rel < 1e-8, "{rel}");
    assert!((a.variance.sigma2_tau - b.variance.sigma2_tau).abs() < 1e-8 * a.variance.sigma2_tau);
}

#[test]
fn tau_is_invariant_to_covariate_scaling() {
    let sc = Scenario::example2(-2.7, 1.0).unwrap();
    let cfg = sc.model_config();
    let ds = generate_dataset(&sc, 2000, 22).unwrap();
    let scaled_x: DMatrix<f64> = ds.x() * 3.0;
    let scaled = Dataset::new(ds.r().to_vec(), ds.y().to_vec(), scaled_x).unwrap();
    let a = fit_point(&ds, &cfg).unwrap();
    let b = fit_point(&scaled, &cfg).unwrap();
    assert!((a.tau.tau_hat - b.tau.tau_hat).abs() < 1e-9);
    assert!((a.propensity.gamma() - b.propensity.gamma()).abs() < 1e-8);
    assert!((a.propensity.beta()[0] - 3.0 * b.propensity.beta()[0]).abs() < 1e-8);
}

#[test]
fn wald_interval_is_well_formed() {
    let sc = Scenario::example1(-1.2, 0.0).unwrap();
    let ds = generate_dataset(&sc, 1000, 23).unwrap();
    let fit = fit_proposed(&ds, &sc.model_config(), &FitOptions::default()).unwrap();
    assert!(fit.variance.sigma2_tau > 0.0);
    assert!(fit.wald.lower < fit.tau_hat() && fit.tau_hat() < fit.wald.upper);
    let s = &fit.variance.sigma;
    assert!((s - s.transpose()).amax() < 1e-10 * s.amax());
}
