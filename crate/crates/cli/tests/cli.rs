use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const TC1: &str = r#"{"dim":1,"periods":[1.0],"potential":{"type":"fourier","modes":[{"k":[1],"re":0.05,"im":0.0}]},"metric":[[1.0]],"drift":[0.0],"alpha":5.0}"#;
const FLAT: &str = r#"{"dim":1,"periods":[1.0],"potential":{"type":"fourier","modes":[{"k":[0],"re":0.3,"im":0.0}]},"metric":[[2.0]],"drift":[0.25],"alpha":2.0}"#;

fn dhj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dhj"))
        .args(args)
        .env("DHJ_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn analyze_tc1() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "p.json", TC1);
    let out = dir.path().join("r.json");
    let o = dhj(&["analyze", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&out);
    let pi = std::f64::consts::PI;
    assert!((r["r"].as_f64().unwrap() - 0.4 * pi * pi).abs() < 1e-6);
    assert_eq!(r["regime"], "Subcritical");
    let s_exact = (1.0 - 1.6 * pi * pi / 25.0).sqrt();
    assert!((r["s"].as_f64().unwrap() - s_exact).abs() < 1e-6);
    assert_eq!(r["k_cap"], 5);
    assert_eq!(r["exponents"].as_array().unwrap().len(), 2);
    assert!((r["argmax_q"][0].as_f64().unwrap() - 0.5).abs() < 1e-6);
}

#[test]
fn config_errors_name_the_field_and_exit_1() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r.json");
    let cases = [
        (TC1.replace("[[1.0]]", "[[1.0,2.0],[2.0,1.0]]").replace(r#""dim":1,"periods":[1.0]"#, r#""dim":2,"periods":[1.0,1.0]"#).replace(r#""k":[1]"#, r#""k":[1,0]"#).replace(r#""drift":[0.0]"#, r#""drift":[0.0,0.0]"#), "metric"),
        (TC1.replace(r#""alpha":5.0"#, r#""alpha":0.0"#), "alpha"),
        (TC1.replace(r#"{"k":[1],"re":0.05,"im":0.0}"#, r#"{"k":[1],"re":0.05,"im":0.0},{"k":[-1],"re":0.05,"im":0.0}"#), "potential.modes[1].k"),
        ("not json".to_string(), "config"),
    ];
    for (text, field) in cases {
        let cfg = write(&dir, "bad.json", &text);
        let o = dhj(&["analyze", "--config", s(&cfg), "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(1), "{text}");
        assert!(stderr(&o).contains(&format!("`{field}`")), "{}", stderr(&o));
    }
}

#[test]
fn usage_errors_exit_1() {
    let o = dhj(&["solve", "--config"]);
    assert_eq!(o.status.code(), Some(1));
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "p.json", TC1);
    let o = dhj(&["solve", "--config", s(&cfg), "--method", "fd", "--out", "x.csv"]);
    assert_eq!(o.status.code(), Some(1));
    let o = dhj(&["verify", "--config", s(&cfg), "--field", "missing.csv", "--out", "v.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`field`"));
}

#[test]
fn solve_verify_evolve_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "p.json", TC1);
    let field = dir.path().join("f.csv");
    let stats = dir.path().join("s.json");
    let o = dhj(&[
        "solve", "--config", s(&cfg), "--method", "sl", "--grid", "128", "--tol", "1e-8", "--out", s(&field), "--stats",
        s(&stats),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let st = json(&stats);
    assert_eq!(st["method"], "sl");
    assert!(st["residual_inf"].as_f64().unwrap() < 1e-2);
    let text = fs::read_to_string(&field).unwrap();
    assert!(text.starts_with("q_1,u,du_1\n"));
    assert_eq!(text.lines().count(), 129);

    let report = dir.path().join("v.json");
    let o = dhj(&[
        "verify", "--config", s(&cfg), "--field", s(&field), "--checks", "residual,oracle,bh", "--out", s(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&report);
    assert_eq!(v["passed"], true);
    let checks = v["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 3);
    let points = checks[1]["points"].as_array().unwrap();
    assert_eq!(points.len(), 3);
    for key in ["q", "u_sl", "u_oracle", "gap", "tail_bound", "convention"] {
        assert!(points[0].get(key).is_some(), "{key}");
    }

    let trace = dir.path().join("t.csv");
    let rate = dir.path().join("rate.json");
    let o = dhj(&[
        "evolve", "--config", s(&cfg), "--field", s(&field), "--perturb", "const:0.01", "--T", "2.0", "--out", s(&trace),
        "--rate", s(&rate),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(&trace).unwrap().starts_with("t,value_error,grad_error\n"));
    let r = json(&rate);
    let fitted = r["value"]["rate"].as_f64().unwrap();
    assert!((fitted - 5.0).abs() <= 0.25, "rate {fitted}");
}

#[test]
fn lf_solve_writes_sigma() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "p.json", TC1);
    let field = dir.path().join("f.csv");
    let stats = dir.path().join("s.json");
    let o = dhj(&[
        "solve", "--config", s(&cfg), "--method", "lf", "--grid", "64", "--out", s(&field), "--stats", s(&stats),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let st = json(&stats);
    assert_eq!(st["method"], "lf");
    assert!(st["sigma"][0].as_f64().unwrap() > 0.0);
}

#[test]
fn verify_constant_problem_all_checks() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "p.json", FLAT);
    let field = dir.path().join("f.csv");
    let o = dhj(&["solve", "--config", s(&cfg), "--grid", "32", "--out", s(&field)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = dir.path().join("v.json");
    let o = dhj(&["verify", "--config", s(&cfg), "--field", s(&field), "--out", s(&report)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&report);
    let residual = &v["checks"][0];
    assert_eq!(residual["name"], "residual");
    assert!(residual["value"].as_f64().unwrap() <= 1e-6);
    assert_eq!(v["checks"].as_array().unwrap().len(), 5);
}

#[test]
fn failed_check_exits_3_and_still_writes_the_report() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "p.json", TC1);
    // a field of zeros is far from the solution
    let mut csv = String::from("q_1,u,du_1\n");
    for i in 0..32 {
        csv.push_str(&format!("{},0,0\n", i as f64 / 32.0));
    }
    let field = write(&dir, "zero.csv", &csv);
    let report = dir.path().join("v.json");
    let o = dhj(&["verify", "--config", s(&cfg), "--field", s(&field), "--checks", "residual", "--out", s(&report)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("residual"));
    assert_eq!(json(&report)["passed"], false);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "p.json", TC1);
    let field = dir.path().join("f.csv");
    assert!(dhj(&["solve", "--config", s(&cfg), "--grid", "64", "--out", s(&field)]).status.success());
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_dhj"))
            .args(["verify", "--config", s(&cfg), "--field", s(&field), "--checks", "oracle,invariance", "--out", s(&out)])
            .env("DHJ_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.code().is_some());
        fs::read(out).unwrap()
    };
    assert_eq!(run("a.json", "1"), run("b.json", "3"));
    let analyze = |name: &str| {
        let out = dir.path().join(name);
        assert!(dhj(&["analyze", "--config", s(&cfg), "--out", s(&out)]).status.success());
        fs::read(out).unwrap()
    };
    assert_eq!(analyze("r1.json"), analyze("r2.json"));
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_dhj"))
        .args(["analyze", "--config", "p.json", "--out", "r.json"])
        .env("DHJ_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("DHJ_THREADS"));
}
