use std::path::Path;
use std::process::{Command, Output};

use cqcd::cli::output::csv_body;
use cqcd::cli::{EXIT_CONFIG, EXIT_INVALID_RUN, EXIT_OK};

fn cqcd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqcd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).expect("output file")
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn rerun_from_csv_header_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.csv");
    let second = dir.path().join("second.csv");
    let out = cqcd(&[
        "sweep-alpha", "--alphas", "0.05,0.01", "--trials", "1500", "--seed", "9", "--threads", "1", "-o", s(&first),
    ]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    let out = cqcd(&["sweep-alpha", "--config", s(&first), "--threads", "3", "-o", s(&second)]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    let (a, b) = (read(&first), read(&second));
    assert_eq!(csv_body(&a), csv_body(&b));
    assert_eq!(csv_body(&a).lines().count(), 3);

    // a different seed changes the data
    let third = dir.path().join("third.csv");
    cqcd(&["sweep-alpha", "--config", s(&first), "--seed", "10", "-o", s(&third)]);
    assert_ne!(csv_body(&a), csv_body(&read(&third)));
}

#[test]
fn json_mirror_reruns_too() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("gamma.json");
    let out = cqcd(&[
        "sweep-gamma", "--gammas", "0.25,1.0", "--trials", "800", "--format", "json", "-o", s(&json),
    ]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&read(&json)).unwrap();
    assert_eq!(v["command"], "sweep-gamma");
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert_eq!(v["rows"][1]["m"], 100);

    let csv = dir.path().join("gamma.csv");
    let out = cqcd(&["sweep-gamma", "--config", s(&json), "--format", "csv", "-o", s(&csv)]);
    assert_eq!(code(&out), EXIT_OK);
    let body = csv_body(&read(&csv));
    let add_col = body.lines().next().unwrap().split(',').position(|c| c == "add_hat").unwrap();
    let adds: Vec<f64> = body.lines().skip(1).map(|l| l.split(',').nth(add_col).unwrap().parse().unwrap()).collect();
    let json_adds: Vec<f64> = v["rows"].as_array().unwrap().iter().map(|r| r["add_hat"].as_f64().unwrap()).collect();
    assert_eq!(adds, json_adds);
}

#[test]
fn toml_config_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "[problem]\nn = 60\nsnr_db = 25.0\n\n[theory]\ndelta = 0.2\n\n[sweep]\nn_grid = [100, 1000]\n",
    )
    .unwrap();
    let out = cqcd(&["plan", "--config", s(&cfg), "--delta", "0.5"]);
    assert_eq!(code(&out), EXIT_OK);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"delta\":0.5"));
    assert!(text.contains("\"snr_db\":25.0"));
    assert!(text.contains("# crossover_n: "));
    assert_eq!(csv_body(&text).lines().count(), 3);
}

#[test]
fn configuration_errors_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[problem]\nsize = 3\n").unwrap();
    assert_eq!(code(&cqcd(&["bounds", "--config", s(&cfg)])), EXIT_CONFIG);
    assert_eq!(code(&cqcd(&["bounds", "--construction", "circulant"])), EXIT_CONFIG);
    assert_eq!(code(&cqcd(&["bounds", "--rho", "0"])), EXIT_CONFIG);
    assert_eq!(code(&cqcd(&["plan", "--r0", "1"])), EXIT_CONFIG);
    assert_eq!(code(&cqcd(&["bounds", "--gammas", "0.5"])), EXIT_CONFIG);
    assert_eq!(code(&cqcd(&["sweep-gamma", "--gammas", "0.001", "--trials", "10"])), EXIT_CONFIG);
    assert_eq!(code(&cqcd(&["simulate", "--m", "3", "--gamma", "0.1"])), EXIT_CONFIG);

    // an output of one command is not a config for another
    let plan = dir.path().join("plan.csv");
    assert_eq!(code(&cqcd(&["plan", "-o", s(&plan)])), EXIT_OK);
    assert_eq!(code(&cqcd(&["bounds", "--config", s(&plan)])), EXIT_CONFIG);
}

#[test]
fn invalid_runs_still_write_output() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("single.csv");
    let out = cqcd(&["plan", "--n-grid", "100", "-o", s(&plan)]);
    assert_eq!(code(&out), EXIT_INVALID_RUN);
    let text = read(&plan);
    assert!(text.contains("# invalid: "));
    assert!(csv_body(&text).lines().nth(1).unwrap().ends_with("false"));

    // a horizon of 2 samples censors most trials
    let sim = dir.path().join("censored.csv");
    let out = cqcd(&["simulate", "--horizon", "2", "--trials", "500", "-o", s(&sim)]);
    assert_eq!(code(&out), EXIT_INVALID_RUN);
    assert!(read(&sim).contains("censored fraction"));
}

#[test]
fn simulate_logs_every_trial() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("trials.csv");
    let out = cqcd(&["simulate", "--trials", "300", "--model", "vector", "--outcomes", s(&log)]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(&log);
    assert_eq!(text.lines().count(), 301);
    assert!(text.starts_with("trial_index,lambda,tau,delay,false_alarm,censored"));
}

#[test]
fn thin_wrappers() {
    let out = cqcd(&["bounds", "--delta", "0", "--gamma", "1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# add: "));

    let out = cqcd(&["ratio", "--delta", "0", "--gamma", "1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(csv_body(&text).ends_with(",1,1\n"));

    let out = cqcd(&["bounds", "--construction", "gaussian-toeplitz", "--m", "40"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("toeplitz_add_upper"));

    let out = cqcd(&["concentration", "--n", "200", "--m", "20", "--draws", "300", "--format", "json"]);
    assert_eq!(code(&out), EXIT_OK);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let row = &v["rows"][0];
    assert_eq!(row["n_draws"], 300);
    assert!(row["theoretical_floor"].as_f64().unwrap() < row["empirical_prob"].as_f64().unwrap());
}
