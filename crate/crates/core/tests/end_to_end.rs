use std::path::PathBuf;

use imsmc_core::harness::{
    compute_metrics, example1_config, export_csv, import_csv, metric_options, run_experiment,
    run_setup, sweep, verify, ControllerKind, ExperimentConfig,
};

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::from_path(path).unwrap()
}

#[test]
fn shipped_configs_validate_and_run() {
    for name in ["example1_case1.toml", "example1_case2.toml", "example2.toml"] {
        let cfg = config(name);
        let setup = cfg.validate().unwrap();
        let log = run_experiment(&cfg).unwrap();
        assert_eq!(log.len(), setup.horizon, "{name}");
        assert!(log.rows.iter().all(|r| r.x.iter().all(|v| v.is_finite())), "{name}");
    }
}

#[test]
fn case1_config_matches_builtin() {
    assert_eq!(config("example1_case1.toml"), example1_config(0.8, true));
}

#[test]
fn imsmc_settles_before_robust_on_every_config() {
    for name in ["example1_case1.toml", "example1_case2.toml", "example2.toml"] {
        let setup = config(name).validate().unwrap();
        let opts = metric_options(&setup);
        let robust = compute_metrics(&run_setup(&setup, ControllerKind::Robust).unwrap(), &opts);
        let imsmc = compute_metrics(&run_setup(&setup, ControllerKind::Imsmc).unwrap(), &opts);
        assert!(imsmc.settling_time < robust.settling_time, "{name}");
    }
}

#[test]
fn example2_output_converges() {
    let setup = config("example2.toml").validate().unwrap();
    let log = run_setup(&setup, ControllerKind::Imsmc).unwrap();
    let y_end = log.rows.last().unwrap().y.unwrap();
    assert!(y_end.abs() < 1e-2);
}

#[test]
fn verify_passes_on_every_config() {
    for name in ["example1_case1.toml", "example1_case2.toml", "example2.toml"] {
        let report = verify(&config(name)).unwrap();
        let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed).map(|c| &c.name).collect();
        assert!(failed.is_empty(), "{name}: {failed:?}");
    }
}

#[test]
fn csv_file_round_trip() {
    let log = run_experiment(&config("example2.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    export_csv(&log, &path).unwrap();
    assert_eq!(import_csv(&path).unwrap(), log);
}

#[test]
fn sweep_matches_individual_runs() {
    let cfg = config("example1_case1.toml");
    let values = [toml::Value::Float(0.4), toml::Value::Float(2.0)];
    let points = sweep(&cfg, "plant.delta", &values);
    for (p, v) in points.iter().zip(&values) {
        let single = cfg.with_value("plant.delta", v.clone()).unwrap();
        let setup = single.validate().unwrap();
        let m = compute_metrics(&run_experiment(&single).unwrap(), &metric_options(&setup));
        assert_eq!(p.result.as_ref().unwrap(), &m);
    }
}
