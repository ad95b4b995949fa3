use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mcdstat::instances::{scaled_relu, square_chain};
use serde_json::Value;
use tempfile::TempDir;

fn mcdstat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcdstat"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    let v: Value = serde_json::from_slice(&out.stdout).expect("json on stdout");
    v["report"].clone()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn chain(dir: &TempDir) -> PathBuf {
    let p = square_chain::<f64>().with_beta(vec![1.0, 0.6]).unwrap();
    write(dir, "chain.json", &p.to_canonical_string())
}

fn origin(dir: &TempDir) -> PathBuf {
    write(dir, "origin.json", r#"{"theta": [0.0], "u": [[0.0], [0.0]]}"#)
}

#[test]
fn canonical_eval_round_trips_byte_identically() {
    let dir = TempDir::new().unwrap();
    let path = chain(&dir);
    let first = mcdstat(&["eval", "--problem", s(&path), "--canonical"]);
    assert!(first.status.success());
    let again = write(&dir, "again.json", std::str::from_utf8(&first.stdout).unwrap());
    let second = mcdstat(&["eval", "--problem", s(&again), "--canonical"]);
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(fs::read_to_string(&path).unwrap() + "\n", String::from_utf8(first.stdout).unwrap());
}

#[test]
fn eval_reports_values_and_manifest() {
    let dir = TempDir::new().unwrap();
    let path = chain(&dir);
    let out = mcdstat(&["eval", "--problem", s(&path), "--theta", "0.5"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["manifest"]["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    let r = &v["report"];
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["feasible"], true);
    assert!((r["gamma_bar"].as_f64().unwrap() - 1e-4).abs() < 1e-15);
}

#[test]
fn malformed_input_exits_with_validation_code() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", "{ not json");
    let out = mcdstat(&["eval", "--problem", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json"));
    let out = mcdstat(&["eval", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn expect_stationary_maps_verdict_to_exit_code() {
    let dir = TempDir::new().unwrap();
    let (p, z) = (chain(&dir), origin(&dir));
    let args = |order| {
        mcdstat(&[
            "check", "--problem", s(&p), "--point", s(&z), "--target", "p1", "--order", order, "--certified", "--expect",
            "stationary",
        ])
    };
    let first = args("1");
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(report(&first)["verdict"], "stationary");
    let second = args("2");
    assert_eq!(second.status.code(), Some(3));
    let r = report(&second);
    assert_eq!(r["verdict"], "not_stationary");
    let w = &r["witness"]["direction"];
    let t = w["theta"][0].as_f64().unwrap();
    assert!((r["witness"]["second"].as_f64().unwrap() + 0.78 * t * t).abs() < 1e-9);
}

#[test]
fn compare_and_sufficient_modes() {
    let dir = TempDir::new().unwrap();
    let (p, z) = (chain(&dir), origin(&dir));
    let out = mcdstat(&["check", "--problem", s(&p), "--point", s(&z), "--compare", "--eps", "1e-6"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["sd0"], "stationary");
    assert_eq!(r["sd1"], "not_stationary");
    assert_eq!(r["implications_hold"], true);
    let out = mcdstat(&["check", "--problem", s(&p), "--point", s(&z), "--sufficient", "--eps", "1e-6"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn box_mode_finds_negative_curvature() {
    let dir = TempDir::new().unwrap();
    let (f, _, _) = mcdstat::instances::max_product::<f64>();
    let e = write(&dir, "f.json", &f.to_json().to_string());
    let out = mcdstat(&[
        "check", "--expr", s(&e), "--x", "0,0", "--lower=-1,-1", "--upper", "1,1", "--order", "2", "--expect",
        "stationary",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!((report(&out)["witness"]["second"].as_f64().unwrap() + 1.6).abs() < 1e-9);
}

#[test]
fn dderiv_with_oracle() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "relu.json", &scaled_relu::<f64>(0.5).unwrap().to_canonical_string());
    let out = mcdstat(&["dderiv", "--problem", s(&p), "--of", "reduced", "--x", "0,0", "--d", "1,0", "--oracle"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["derivative"]["first"].as_f64(), Some(-2.0));
    assert!((r["oracle"]["first"]["value"].as_f64().unwrap() + 2.0).abs() < 1e-5);
    let out = mcdstat(&["dderiv", "--problem", s(&p), "--of", "penalized"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cone_check_reports_tangent_and_radial() {
    let dir = TempDir::new().unwrap();
    let (p, z) = (chain(&dir), origin(&dir));
    let d = write(&dir, "d.json", r#"{"theta": [1.0], "u": [[1.0], [0.0]]}"#);
    let out = mcdstat(&["cone", "check", "--problem", s(&p), "--point", s(&z), "--direction", s(&d), "--radial"]);
    assert!(out.status.success());
    let r = report(&out);
    assert_eq!(r["tangent"]["tangent"], true);
    assert_eq!(r["radial"]["member"], false);
}

#[test]
fn thresholds_certify_the_chain() {
    let dir = TempDir::new().unwrap();
    let p = chain(&dir);
    let out = mcdstat(&["thresholds", "--problem", s(&p), "--eps", "1e-6"]);
    assert!(out.status.success());
    let r = report(&out);
    assert_eq!(r["certified"], true);
    assert!(r["k_g"].as_f64().unwrap() <= 0.5386);
}

#[test]
fn solve_writes_trace_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let p = chain(&dir);
    let start = write(&dir, "start.json", r#"{"theta": [0.05]}"#);
    let trace = dir.path().join("trace.csv");
    let run = || {
        mcdstat(&[
            "solve", "--problem", s(&p), "--init", "file", "--init-file", s(&start), "--seed", "3", "--trace", s(&trace),
        ])
    };
    let a = run();
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let csv = fs::read_to_string(&trace).unwrap();
    assert!(csv.starts_with("iter,objective,theta,max_residual,step"));
    let b = run();
    assert_eq!(report(&a), report(&b));
    assert_eq!(report(&a)["converged"], true);
}

#[test]
fn repro_lists_and_runs_scenarios() {
    let out = mcdstat(&["repro", "--list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["max-product", "square-chain", "scaled-relu", "cubic-gap", "rnn-desk"] {
        assert!(text.contains(name));
    }
    let out = mcdstat(&["repro", "scaled-relu"]);
    assert!(out.status.success());
    assert_eq!(report(&out)["pass"], true);
    let out = mcdstat(&["repro", "nonexistent"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rnn_commands_on_csv_data() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    fs::write(
        data.join("seq0.csv"),
        "t,x0,x1,y0\n2,0.3,-0.2,0.5\n1,0.1,0.4,-0.3\n3,-0.6,0.2,0.9\n",
    )
    .unwrap();
    let base = ["--data", s(&data), "--n0", "2", "--n1", "3", "--n2", "1", "--t", "3", "--lambda", "0.01"];
    let built = mcdstat(&[&["rnn", "build"][..], &base].concat());
    assert!(built.status.success(), "{}", String::from_utf8_lossy(&built.stderr));
    let problem: Value = serde_json::from_slice(&built.stdout).unwrap();
    assert_eq!(problem["dims"]["N"].as_array().unwrap().len(), 8);
    let th = mcdstat(&[&["rnn", "thresholds"][..], &base].concat());
    assert!(th.status.success());
    let r = report(&th);
    let gamma_y = (0.25 + 0.09 + 0.81) / 6.0;
    assert!((r["gamma_y"].as_f64().unwrap() - gamma_y).abs() < 1e-15);
    assert!((r["t2"].as_f64().unwrap() - (2.0 * gamma_y / 3.0f64).sqrt()).abs() < 1e-12);
    let trace = dir.path().join("trace.csv");
    let out = dir.path().join("report.json");
    let trained = mcdstat(&[&["rnn", "train"][..], &base, &["--trace", s(&trace), "--out", s(&out)]].concat());
    assert!(trained.status.success(), "{}", String::from_utf8_lossy(&trained.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["report"]["penalty"]["certified"], true);
    assert!(v["report"]["solve"]["max_residual"].as_f64().unwrap() <= 1e-5);
    assert!(fs::read_to_string(&trace).unwrap().lines().count() > 1);
}
