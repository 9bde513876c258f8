use std::path::PathBuf;
use std::process::{Command, Output};

fn imsmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imsmc"))
        .args(args)
        .output()
        .expect("spawn imsmc")
}

fn config(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let o = imsmc(&["run", &config("example1_case1.toml"), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 151);
    assert!(text.starts_with("k,x_0,x_1,x_2,u_0,"));
    assert!(stdout(&o).contains("settling_time"));
}

#[test]
fn robust_override_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("robust.csv");
    let o = imsmc(&[
        "run",
        &config("example2.toml"),
        "--out",
        out.to_str().unwrap(),
        "--controller",
        "robust",
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().next().unwrap().ends_with(",y"));
}

#[test]
fn malformed_config_exits_two_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[plant]\na = [[1.0, 2.0], [3.0]]\nb = [[1.0], [1.0]]\n").unwrap();
    let o = imsmc(&["run", bad.to_str().unwrap(), "--out", dir.path().join("x.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("config error"), "{err}");
}

#[test]
fn out_of_range_parameter_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    let text = std::fs::read_to_string(config("example1_case1.toml"))
        .unwrap()
        .replace("mu0_init = 0.1", "mu0_init = 1.5");
    std::fs::write(&path, text).unwrap();
    let o = imsmc(&["design-g", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("controller.mu0_init"));
}

#[test]
fn missing_file_is_not_a_config_error() {
    let o = imsmc(&["design-g", "/nonexistent/cfg.toml"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn design_g_reports_a_negative_certificate() {
    let o = imsmc(&["design-g", &config("example1_case1.toml")]);
    assert!(o.status.success());
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("lmi_max_eigenvalue")).unwrap();
    let v: f64 = line.split('=').nth(1).unwrap().trim().parse().unwrap();
    assert!(v < -1e-7);
}

#[test]
fn verify_passes() {
    let o = imsmc(&["verify", &config("example1_case1.toml")]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("18/18 checks passed"));
}

#[test]
fn compare_prints_both_controllers() {
    let o = imsmc(&["compare", &config("example1_case1.toml")]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("robust")));
    assert!(text.lines().any(|l| l.starts_with("imsmc")));
}

#[test]
fn sweep_keeps_input_order() {
    let o = imsmc(&[
        "sweep",
        &config("example1_case1.toml"),
        "--param",
        "plant.delta",
        "--values",
        "2.0, 0.4, 0.8",
    ]);
    assert!(o.status.success());
    let firsts: Vec<String> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().next().unwrap().to_string())
        .collect();
    assert_eq!(firsts, ["2.0", "0.4", "0.8"]);
}

#[test]
fn plot_writes_svg() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let svg = dir.path().join("t.svg");
    assert!(imsmc(&["run", &config("example2.toml"), "--out", csv.to_str().unwrap()])
        .status
        .success());
    let o = imsmc(&[
        "plot",
        csv.to_str().unwrap(),
        "--out",
        svg.to_str().unwrap(),
        "--columns",
        "s_0,u_0",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<polyline").count(), 2);
}
