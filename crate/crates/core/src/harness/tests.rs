use super::*;
use crate::taskgen::Track;

fn row(x: f64, y: f64) -> ResultRow {
    ResultRow {
        sweep_id: "s".into(),
        axis: "n1".into(),
        axis_value: x,
        seed: 0,
        method: "lowdim".into(),
        d: 1,
        k: 1,
        t: 1,
        n1: x as usize,
        n2: 1,
        sigma: 1.0,
        c: 1.0,
        er_mean: y,
        er_se: 0.0,
        rep_term: y,
        noise_term: 0.0,
        subspace_dist: 0.0,
        kappa: 1.0,
        runtime_ms: 0.0,
        error_flag: false,
    }
}

#[test]
fn slope_exact_power_laws() {
    let xs = [10.0, 20.0, 40.0, 80.0, 160.0];
    let rows: Vec<_> = xs.iter().map(|&x| row(x, 7.0 / x)).collect();
    let f = fit_scaling_slope(&rows, "axis_value", "er_mean").unwrap();
    assert!((f.slope + 1.0).abs() <= 1e-12);
    assert!((f.r_squared - 1.0).abs() <= 1e-12);
    let rows: Vec<_> = xs.iter().map(|&x| row(x, 3.0 / x.sqrt())).collect();
    let f = fit_scaling_slope(&rows, "axis_value", "er_mean").unwrap();
    assert!((f.slope + 0.5).abs() <= 1e-12);
    assert!(f.stderr >= 0.0 && f.stderr <= 1e-12);
}

#[test]
fn slope_constant_y_is_degenerate() {
    let rows: Vec<_> = [1.0, 2.0, 4.0].iter().map(|&x| row(x, 0.3)).collect();
    let f = fit_scaling_slope(&rows, "axis_value", "er_mean").unwrap();
    assert_eq!(f.slope, 0.0);
    assert_eq!(f.r_squared, 0.0);
}

#[test]
fn slope_uses_medians_and_rejects_bad_input() {
    let mut rows = Vec::new();
    for &x in &[1.0, 2.0, 4.0] {
        rows.push(row(x, 1.0 / x));
        rows.push(row(x, 1.0 / x));
        rows.push(row(x, 1e9)); // outlier, ignored by the median
    }
    let f = fit_scaling_slope(&rows, "axis_value", "er_mean").unwrap();
    assert!((f.slope + 1.0).abs() <= 1e-12);
    assert!(fit_scaling_slope(&rows[..6], "axis_value", "er_mean").is_err());
    let neg = vec![row(1.0, 1.0), row(2.0, -1.0), row(3.0, 1.0)];
    assert!(matches!(fit_scaling_slope(&neg, "axis_value", "er_mean"), Err(Error::InvalidInput(_))));
    assert!(fit_scaling_slope(&neg, "axis_value", "nope").is_err());
}

fn small_config() -> SweepConfig {
    let mut base = EnsembleSpec::new(Track::Lowdim, 8, 2, 4, 20, 10);
    base.master_seed = 3;
    SweepConfig {
        base_spec: base,
        sweep_id: "test".into(),
        axis: Axis::N1,
        values: vec![20.0, 30.0, 40.0, 60.0],
        seeds_per_point: 3,
        methods: vec![Method::BaselineRidge, Method::Lowdim],
        nu_draws: 3,
        output_path: "out.csv".into(),
        record_runtime: false,
        settings: MethodSettings::default(),
    }
}

#[test]
fn sweep_cardinality_and_order() {
    let rows = run_sweep(&small_config()).unwrap();
    assert_eq!(rows.len(), 24);
    let keys: Vec<_> = rows.iter().map(|r| (r.axis_value, r.seed, r.method.clone())).collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(Method::from_str(&a.2).unwrap().cmp(&Method::from_str(&b.2).unwrap())));
    assert_eq!(keys, sorted);
    assert!(rows.iter().all(|r| !r.error_flag));
}

#[test]
fn sweep_is_deterministic_across_thread_counts() {
    let cfg = small_config();
    let a = rows_to_csv(&run_sweep(&cfg).unwrap()).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = rows_to_csv(&pool.install(|| run_sweep(&cfg)).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn infeasible_point_is_flagged() {
    let mut cfg = small_config();
    cfg.axis = Axis::K;
    // 2k <= min(d, T) fails at k = 3
    cfg.values = vec![1.0, 2.0, 3.0];
    cfg.methods = vec![Method::Lowdim];
    let rows = run_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().filter(|r| r.k == 3).all(|r| r.error_flag && r.er_mean.is_nan()));
    assert!(rows.iter().filter(|r| r.k < 3).all(|r| !r.error_flag));
}

#[test]
fn csv_roundtrip_and_schema() {
    let rows = run_sweep(&SweepConfig { values: vec![20.0], ..small_config() }).unwrap();
    let text = rows_to_csv(&rows).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema=1"));
    assert_eq!(lines.next(), Some(CSV_COLUMNS.join(",").as_str()));
    assert_eq!(parse_csv(&text).unwrap(), rows);
    assert!(parse_csv(&text.replacen("# schema=1\n", "", 1)).is_err());
    // 17 significant digits
    let er = text.lines().nth(2).unwrap().split(',').nth(12).unwrap();
    assert_eq!(er.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
}

#[test]
fn nan_rows_roundtrip() {
    let mut r = row(1.0, f64::NAN);
    r.error_flag = true;
    let back = parse_csv(&rows_to_csv(std::slice::from_ref(&r)).unwrap()).unwrap();
    assert!(back[0].er_mean.is_nan() && back[0].error_flag);
}

#[test]
fn every_method_runs_on_its_track() {
    let spec = EnsembleSpec::new(Track::Highdim, 10, 2, 4, 30, 10).with_seed(5);
    for m in [Method::Nuclear, Method::BaselineRidge, Method::Lowdim] {
        let (_, r) = evaluate_method(m, &spec, &MethodSettings::default(), 2).unwrap();
        assert!(r.er_mean.is_finite(), "{m}");
    }
    let spec = EnsembleSpec::new(Track::Relu, 5, 3, 3, 40, 15).with_seed(6);
    let settings = MethodSettings { relu_width: 4, max_iter: 50, ..Default::default() };
    for m in [Method::Relu, Method::BaselineNnScratch] {
        let (_, r) = evaluate_method(m, &spec, &settings, 2).unwrap();
        assert!(r.er_mean.is_finite(), "{m}");
    }
}

#[test]
fn lambda_rule_parsing() {
    assert_eq!("oracle".parse::<LambdaRule>().unwrap(), LambdaRule::Oracle);
    assert_eq!("0.5".parse::<LambdaRule>().unwrap(), LambdaRule::Fixed(0.5));
    assert!("-1".parse::<LambdaRule>().is_err());
    assert_eq!("T".parse::<Axis>().unwrap(), Axis::T);
}
