use super::*;

#[test]
fn move_x_all_trials_pass() {
    let out = check_move_x(200, 1).unwrap();
    assert_eq!(out.pass_fraction, 1.0, "{out}");
    assert!(out.passed());
}

#[test]
fn move_x_zero_matrix_has_zero_gap() {
    let x = DenseMatrix::zeros(4, 3);
    assert_eq!(linops::resolvent_commute_gap(&x, 0.5).unwrap(), 0.0);
    assert_eq!(move_x_margin(&x, 0.5, MOVE_X_TOL).unwrap(), MOVE_X_TOL);
}

#[test]
fn move_x_ill_conditioned_relaxed() {
    let mut rng = stream(2, "cond", 0);
    let q1 = linops::orthonormalize(&gaussian_matrix(&mut rng, 8, 8));
    let q2 = linops::orthonormalize(&gaussian_matrix(&mut rng, 8, 8));
    let s = Vector::from_fn(8, |i, _| 10f64.powf(-8.0 * i as f64 / 7.0));
    let x = &q1 * DenseMatrix::from_diagonal(&s) * q2.transpose();
    assert!(move_x_margin(&x, 1e-6, MOVE_X_RELAXED_TOL).unwrap() >= 0.0);
}

#[test]
fn loewner_examples() {
    let mut rng = stream(3, "lw", 0);
    let a = gaussian_matrix(&mut rng, 7, 5);
    let b = gaussian_matrix(&mut rng, 5, 2);
    let bp = gaussian_matrix(&mut rng, 5, 3);
    assert!(loewner_gap(&a, &a, &b, &bp).unwrap().abs() <= 1e-12);
    let mut a1 = DenseMatrix::zeros(9, 5);
    a1.view_mut((0, 0), (7, 5)).copy_from(&a);
    a1.view_mut((7, 0), (2, 5)).copy_from(&gaussian_matrix(&mut rng, 2, 5));
    assert!(loewner_gap(&a1, &a, &b, &b).unwrap().abs() <= 1e-10);
    let out = check_loewner(500, 4).unwrap();
    assert_eq!(out.pass_fraction, 1.0, "{out}");
}

#[test]
fn cov_implies_div_examples() {
    let mut rng = stream(5, "cd", 0);
    let phi = FeatureMap::Linear(gaussian_matrix(&mut rng, 6, 2));
    let phi_p = FeatureMap::Linear(gaussian_matrix(&mut rng, 6, 3));
    let x = gaussian_matrix(&mut rng, 10, 6);
    // q = q', α = 1: divergences coincide
    let dq = rep_covariance(&phi, &phi_p, &x).unwrap().divergence;
    assert!(divergence_gap(&phi, &phi_p, &x, &x, 1.0).unwrap().abs() <= 1e-10);
    // α = 0 reduces to D_q ⪰ 0
    let other = gaussian_matrix(&mut rng, 4, 6);
    assert!(divergence_gap(&phi, &phi_p, &x, &other, 0.0).unwrap() >= -1e-10);
    assert!(linops::min_eigenvalue(&dq) >= -1e-10);
    let out = check_cov_implies_div(200, 6).unwrap();
    assert_eq!(out.pass_fraction, 1.0, "{out}");
}

#[test]
fn identity_examples() {
    let spec = identity_pilot();
    let gt = sample_ground_truth(&spec).unwrap();
    let sigma = gt.target_sigma();
    let mut rng = stream(7, "id", 0);
    let b = gaussian_matrix(&mut rng, spec.d, 3);
    let zero = DenseMatrix::zeros(spec.d, spec.t);
    assert_eq!(source_target_sides(&zero, sigma, &b, 0.1).unwrap(), (0.0, 0.0));
    let (l, r) = source_target_sides(&gt.theta_star, sigma, &gt.b_star, 1e-12).unwrap();
    assert!(l.abs() <= 1e-8 && r.abs() <= 1e-8, "{l} {r}");
    let (l, r) = source_target_sides(&gt.theta_star, sigma, &b, 0.3).unwrap();
    assert!((l - r).abs() <= 1e-8 * (1.0 + r));
    assert!(r > 0.0);
    let out = check_source_target_identity(&spec, 50, 8).unwrap();
    assert_eq!(out.pass_fraction, 1.0, "{out}");
}

#[test]
fn sandwich_one_dimension_and_rank_deficiency() {
    let (freq, _) = sandwich_frequency(1, 5000, 200, 9);
    assert!(freq >= 0.95);
    let (freq, margin) = sandwich_frequency(3, 1, 200, 9);
    assert_eq!(freq, 0.0);
    assert!(margin < 0.0);
}

#[test]
fn concentration_reports_constant() {
    let out = check_covariance_concentration(5, 0.05, 10).unwrap();
    assert!(out.pass_fraction >= 0.95, "{out}");
    assert!(out.calibrated_constant.unwrap() > 0.0);
    assert!(out.note.as_deref().unwrap().starts_with("d=5"));
}

#[test]
fn regularizer_zero_noise_always_passes() {
    let spec = regularizer_pilot().with_sigma(0.0);
    let out = check_regularizer_bound(&spec, 20, 0.05, 11).unwrap();
    assert_eq!(out.pass_fraction, 1.0);
    assert_eq!(out.median_ratio, Some(0.0));
}

#[test]
fn regularizer_bound_pilot() {
    let out = check_regularizer_bound(&regularizer_pilot(), 200, 0.05, 12).unwrap();
    assert!(out.pass_fraction >= 0.95, "{out}");
    assert!(out.median_ratio.unwrap() <= 1.0);
    assert!(out.passed());
}

#[test]
fn deviation_examples() {
    let d = 10;
    let sigma = DenseMatrix::identity(d, d);
    let mut rng = stream(13, "dev", 0);
    let x = gaussian_matrix(&mut rng, 1000, d);
    let e1 = Vector::from_fn(d, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let (lhs, base) = deviation_sides(&x, &sigma, &e1, 0.05);
    assert!(lhs <= DEVIATION_C * base);
    assert_eq!(deviation_sides(&x, &sigma, &Vector::zeros(d), 0.05), (0.0, 0.0));
}

#[test]
fn deviation_pilot_meets_frequency() {
    let out = check_matrix_deviation(&deviation_pilot(), 200, 0.05, 14).unwrap();
    assert!(out.pass_fraction >= 0.95, "{out}");
}

#[test]
fn norm_theta_noiseless_tiny_lambda() {
    let spec = norm_theta_pilot().with_sigma(0.0);
    let out = check_norm_theta_at(&spec, 3, 15, Some(1e-6)).unwrap();
    assert_eq!(out.skipped, 0);
    assert_eq!(out.pass_fraction, 1.0, "{out}");
}

#[test]
fn norm_theta_gate_skips_small_lambda() {
    let out = check_norm_theta_at(&norm_theta_pilot(), 4, 16, Some(1e-9)).unwrap();
    assert_eq!(out.skipped, 4);
    assert_eq!(out.trials, 4);
}

#[test]
fn norm_theta_pilot_passes() {
    let out = check_norm_theta(&norm_theta_pilot(), 8, 17).unwrap();
    assert_eq!(out.pass_fraction, 1.0, "{out}");
}

#[test]
fn kernel_zero_theta_and_huge_lambda() {
    let mut rng = stream(18, "kern", 0);
    let x = gaussian_matrix(&mut rng, 40, 6);
    let noise = gaussian_matrix(&mut rng, 40, 3) * 0.5;
    let zero = DenseMatrix::zeros(6, 3);
    let lam = 2.0 / 40.0 * linops::spectral_norm(&x.tr_mul(&noise));
    let kb = kernel_bounds(&x, &zero, &noise, 0.5, lam, KERNEL_C).unwrap();
    assert_eq!(kb.bias.0, 0.0);
    assert_eq!(kb.variance.0, 0.0);
    assert!(kb.margin() >= 0.0);

    let theta = gaussian_matrix(&mut rng, 6, 3);
    let kb = kernel_bounds(&x, &theta, &noise, 0.5, 1e8, KERNEL_C).unwrap();
    assert!(kb.variance.0 <= 1e-12);
    let energy = (&x * &theta).norm_squared() / (3.0 * 40.0);
    assert!(kb.bias.0 <= energy * (1.0 + 1e-12));
}

#[test]
fn kernel_pilot_passes() {
    let out = check_kernel_fixed_design(&kernel_pilot(), 10, 19).unwrap();
    assert_eq!(out.pass_fraction, 1.0, "{out}");
    assert!(out.note.is_some());
}

#[test]
fn calibration_rule() {
    assert_eq!(calibrate_power_of_two(&[], 0.05), None);
    assert_eq!(calibrate_power_of_two(&[0.0, 0.0], 0.05), Some(0.0));
    assert_eq!(calibrate_power_of_two(&[0.3, 0.9, 3.0], 0.05), Some(4.0));
    let many: Vec<f64> = (1..=100).map(|i| i as f64 / 10.0).collect();
    // 97.5% quantile is 9.8
    assert_eq!(calibrate_power_of_two(&many, 0.05), Some(16.0));
    assert_eq!(calibrate_power_of_two(&[0.1, f64::INFINITY], 0.5), None);
    assert_eq!(calibrate_power_of_two(&[0.1, f64::INFINITY], 1.0), Some(0.125));
}

#[test]
fn report_line_field_order() {
    let out = check_move_x(5, 20).unwrap();
    let line = out.report_line();
    let keys: Vec<&str> = line.split(' ').skip(1).map(|kv| kv.split('=').next().unwrap()).collect();
    assert_eq!(line.split(' ').next(), Some("move_x"));
    assert_eq!(
        keys,
        ["trials", "pass_fraction", "worst_margin", "calibrated_constant", "required", "skipped", "median_ratio", "status"]
    );
}

#[test]
fn outcomes_independent_of_thread_count() {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = pool.install(|| check_cov_implies_div(30, 21).unwrap());
    assert_eq!(serial, check_cov_implies_div(30, 21).unwrap());
}

#[test]
fn unknown_suite_is_invalid() {
    assert!(run_suite("nope", 1, 0).is_err());
    assert_eq!(run_suite("move_x", 3, 0).unwrap().len(), 1);
}
