//! End-to-end runs of the `asyncbcd` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_asyncbcd"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn bounded_preset_passes_its_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["solve", "--preset", "bounded", "--out", "b"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&tmp.path().join("b/summary.json"));
    assert_eq!(s["pathwise_pass"], true);
    for seed in s["seeds"].as_array().unwrap() {
        assert!(tmp.path().join(format!("b/run_seed{seed}.csv")).exists());
        assert!(tmp.path().join(format!("b/lyap_xi_seed{seed}.csv")).exists());
    }
}

#[test]
fn oversized_step_is_infeasible() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["solve", "--preset", "oversized", "--out", "o"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible"));
    assert!(!tmp.path().join("o/summary.json").exists());
}

#[test]
fn adaptive_spiky_keeps_h_descent() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["solve", "--preset", "adaptive-spiky", "--out", "a"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&tmp.path().join("a/summary.json"));
    let h = &s["runs"][0]["lyapunov"][0];
    assert_eq!(h["pathwise_pass"], true);
    assert_eq!(s["runs"][0]["max_delay"], 50);
    let r = run_in(tmp.path(), &["report", "a", "--out", "r"]);
    assert_eq!(code(&r), 0);
    let rep = json(&tmp.path().join("r/report.json"));
    let row = rep["criteria"].as_array().unwrap().iter().find(|c| c["criterion"] == 2).unwrap();
    assert_eq!(row["pass"], true);
}

#[test]
fn example1_reports_unreachable_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["simulate", "--preset", "example1", "--out", "e"]);
    assert_eq!(code(&o), 0);
    let e = json(&tmp.path().join("e/example1.json"));
    assert_eq!(e["unreachable_emitted"], 0);
    let unreachable: Vec<Value> = e["report"]["unreachable"].as_array().unwrap().clone();
    assert_eq!(unreachable.len(), 3);
    for pair in ["2,1", "3,1", "3,2"] {
        assert!(e["emitted"].get(pair).is_none());
    }
}

#[test]
fn geometric_delays_have_unit_mean() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["simulate", "--preset", "geometric", "--out", "g"]);
    assert_eq!(code(&o), 0);
    let runs = json(&tmp.path().join("g/simulate_summary.json"));
    let runs = runs.as_array().unwrap();
    let total: f64 = runs.iter().map(|r| r["mean_delay"].as_f64().unwrap() * r["records"].as_f64().unwrap()).sum();
    let n: f64 = runs.iter().map(|r| r["records"].as_f64().unwrap()).sum();
    // q = ½ has mean q/(1 − q) = 1; early k clamp j(k) ≤ k only slightly.
    let mean = total / n;
    assert!((mean - 1.0).abs() <= 0.05, "mean delay {mean}");
}

#[test]
fn single_worker_parallel_has_zero_delays() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["parallel", "--preset", "parallel-single", "--out", "p"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stats = json(&tmp.path().join("p/delay_stats_seed0.json"));
    for b in stats.as_array().unwrap() {
        assert_eq!(b["max"], 0);
    }
    assert!(tmp.path().join("p/measured_seed0.csv").exists());
}

#[test]
fn zero_update_budget_is_an_empty_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "problem": {"kind": "random_quadratic", "dim": 4, "eig_min": 1.0, "eig_max": 2.0, "blocks": 2},
        "schedule": {"kind": "parallel"},
        "policy": {"kind": "fixed", "gamma": 0.1},
        "seeds": [0],
        "runtime": {"n_workers": 2, "budget": {"kind": "updates", "count": 0}}
    }"#;
    fs::write(tmp.path().join("zero.json"), cfg).unwrap();
    let o = run_in(tmp.path(), &["parallel", "--config", "zero.json", "--out", "z"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn report_recovers_the_convex_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["solve", "--preset", "convex", "--out", "c"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = run_in(tmp.path(), &["report", "c", "--out", "r"]);
    assert_eq!(code(&r), 0);
    let rep = json(&tmp.path().join("r/report.json"));
    let slope = rep["groups"][0]["rates"]["loglog"]["slope"].as_f64().unwrap();
    assert!(slope <= -0.9, "slope {slope}");
    let row = rep["criteria"].as_array().unwrap().iter().find(|c| c["criterion"] == 4).unwrap();
    assert_eq!(row["pass"], true);
}

#[test]
fn report_on_empty_directory_fails() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir(tmp.path().join("empty")).unwrap();
    let o = run_in(tmp.path(), &["report", "empty"]);
    assert_ne!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("summary.json"));
}

#[test]
fn saved_config_reproduces_byte_identical_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["solve", "--preset", "bounded", "--seeds", "3,4", "--out", "first"]);
    assert_eq!(code(&o), 0);
    let s = json(&tmp.path().join("first/summary.json"));
    assert_eq!(s["seeds"], serde_json::json!([3, 4]));
    fs::write(tmp.path().join("saved.json"), serde_json::to_string_pretty(&s["config"]).unwrap()).unwrap();
    let o = run_in(tmp.path(), &["solve", "--config", "saved.json", "--out", "second"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for file in ["run_seed3.csv", "run_seed4.csv", "trace_seed4.csv", "lyap_xi_seed3.csv", "summary.json"] {
        let a = fs::read(tmp.path().join("first").join(file)).unwrap();
        let b = fs::read(tmp.path().join("second").join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
}

#[test]
fn schema_errors_name_the_offending_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "problem": {"kind": "random_quadratic", "dim": 4, "eig_min": 1.0, "eig_max": 2.0, "blocks": 2},
        "schedule": {"kind": "injected", "delay": {"kind": "bounded", "tau": 2, "lwa": "max"}},
        "seeds": [0]
    }"#;
    fs::write(tmp.path().join("bad.json"), cfg).unwrap();
    let typed = r#"{"schedule": {"kind": "example1"}, "seeds": [0], "x0": {"kind": "constant", "value": 1.0}, "horizon": "ten"}"#;
    fs::write(tmp.path().join("typed.json"), typed).unwrap();
    let o = run_in(tmp.path(), &["simulate", "--config", "typed.json"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("`horizon`"));
    let o = run_in(tmp.path(), &["solve", "--config", "bad.json"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    // Internally tagged sections report the path down to the tagged value.
    assert!(err.contains("`schedule`") && err.contains("lwa"), "{err}");
}

#[test]
fn selftest_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["selftest", "--trials", "2000", "--out", "s"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let rows = json(&tmp.path().join("s/selftest.json"));
    assert!(rows.as_array().unwrap().iter().all(|r| r["pass"] == true));
}
