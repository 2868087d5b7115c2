use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn shormps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shormps"))
        .args(args)
        .env_remove("SHORMPS_N")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

fn scratch_file(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("shormps-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn without_timings(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timings");
    v
}

#[test]
fn factor_fifteen() {
    let o = shormps(&["factor", "--n", "15", "--x", "7", "--seed", "1"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["factors"], serde_json::json!([3, 5]));
    assert_eq!(v["order_found"], 4);
    for key in ["t_u", "t_meas", "t_qft", "t_total"] {
        assert!(v["timings"][key].is_f64());
    }
}

#[test]
fn trivial_root_exits_two() {
    let o = shormps(&["factor", "--n", "65", "--x", "64"]);
    assert_eq!(code(&o), 2);
    assert_eq!(stdout_json(&o)["failure"]["kind"], "trivial_root");
}

#[test]
fn rejected_instance_exits_two() {
    let o = shormps(&["factor", "--n", "16", "--x", "3"]);
    assert_eq!(code(&o), 2);
    assert_eq!(stdout_json(&o)["rejected"]["kind"], "even");
    let o = shormps(&["factor", "--n", "15", "--x", "5"]);
    assert_eq!(code(&o), 2);
    assert_eq!(stdout_json(&o)["rejected"]["factor"], 5);
}

#[test]
fn capacity_exits_three() {
    let o = shormps(&["factor", "--n", "15", "--x", "7", "--memory-cap-bytes", "1000"]);
    assert_eq!(code(&o), 3);
    let o = shormps(&["compare", "--n", "511", "--x", "2"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cap"));
}

#[test]
fn usage_errors_exit_sixty_four() {
    assert_eq!(code(&shormps(&["factor", "--bogus"])), 64);
    assert_eq!(code(&shormps(&["factor", "--n", "15", "--nproc", "3"])), 64);
    assert_eq!(code(&shormps(&["factor", "--n", "15", "--order", "sideways"])), 64);
    assert_eq!(code(&shormps(&["factor"])), 64);
    assert_eq!(code(&shormps(&["bench", "--n", "15", "--sweep", "1,3"])), 64);
    assert_eq!(code(&shormps(&["--help"])), 0);
}

#[test]
fn compare_passes_and_catches_corruption() {
    for (n, x) in [("15", "7"), ("21", "2")] {
        let o = shormps(&["compare", "--n", n, "--x", x]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let v = stdout_json(&o);
        assert!(v["max_deviation"].as_f64().unwrap() < 1e-9);
    }
    let o = shormps(&["compare", "--n", "15", "--x", "7", "--debug-corrupt"]);
    assert_eq!(code(&o), 1);
    assert!(stdout_json(&o)["max_deviation"].as_f64().unwrap() > 1e-9);
}

#[test]
fn trace_is_byte_stable() {
    let args = ["trace", "--n", "65", "--x", "2", "--order", "decreasing", "--format", "csv"];
    let a = shormps(&args);
    let b = shormps(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let plan = shormps(&[&args[..], &["--plan-only"]].concat());
    assert_eq!(plan.stdout, a.stdout);
    let o = shormps(&["trace", "--n", "15", "--x", "14", "--format", "csv"]);
    let text = String::from_utf8(o.stdout).unwrap();
    let last: Vec<&str> = text.lines().last().unwrap().split(',').collect();
    assert_eq!(last[last.len() - 2], "2");
}

#[test]
fn reports_are_deterministic() {
    let args = ["factor", "--n", "35", "--seed", "3", "--nproc", "2"];
    let a = without_timings(stdout_json(&shormps(&args)));
    let b = without_timings(stdout_json(&shormps(&args)));
    assert_eq!(a, b);
    assert!(a["cluster"]["transfers"]["bytes"].as_u64().unwrap() > 0);
    assert_eq!(a["cluster"]["qft_local_gate_bytes"], 0);
}

#[test]
fn bench_reports_stage_columns() {
    let o = shormps(&["bench", "--n", "21", "--x", "2", "--sweep", "1,2", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "l,N,x,n_proc,t_U,t_meas,t_QFT,t_total");
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    assert_eq!(rows.len(), 2);
    for (row, p) in rows.iter().zip(["1", "2"]) {
        assert_eq!(row[3], p);
        let t: Vec<f64> = row[4..].iter().map(|s| s.parse().unwrap()).collect();
        assert!((t[3] - (t[0] + t[1] + t[2])).abs() < 1e-6);
    }
    let o = shormps(&["bench", "--n", "15", "--x", "7"]);
    let v = stdout_json(&o);
    assert_eq!(v.as_array().unwrap().len(), 1);
    assert!(v[0]["t_QFT"].is_f64());
}

#[test]
fn config_file_environment_and_out() {
    let cfg = scratch_file("run.json");
    std::fs::write(&cfg, r#"{"n": 21, "x": 2, "qft": "nn", "seed": 5}"#).unwrap();
    let out = scratch_file("report.json");
    let o = shormps(&["factor", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!((v["n"].as_u64(), v["qft"].as_str(), v["seed"].as_u64()), (Some(21), Some("nn"), Some(5)));

    // Flags win over the file.
    let o = shormps(&["factor", "--config", cfg.to_str().unwrap(), "--seed", "8"]);
    assert_eq!(stdout_json(&o)["seed"], 8);

    let o = Command::new(env!("CARGO_BIN_EXE_shormps"))
        .args(["factor", "--x", "7"])
        .env("SHORMPS_N", "15")
        .env("SHORMPS_FORMAT", "csv")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("n,x,r,m,factor_a,factor_b,failure\n15,7,4,"));

    std::fs::write(&cfg, r#"{"n": 21, "colour": "blue"}"#).unwrap();
    assert_eq!(code(&shormps(&["factor", "--config", cfg.to_str().unwrap()])), 64);
}
