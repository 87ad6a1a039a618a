use std::path::Path;
use std::process::{Command, Output};

fn mbg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbg"))
        .args(args)
        .env_remove("MBG_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn run_small(dir: &Path, name: &str, extra: &[&str]) -> Output {
    let out = dir.join(name);
    let mut args = vec![
        "run", "--game", "cournot", "--algo", "barrier", "--N", "4", "--a", "10", "--b", "0.1", "--T",
        "300", "--trials", "2", "--seed", "5", "--out",
    ];
    args.push(out.to_str().unwrap());
    args.extend_from_slice(extra);
    mbg(&args)
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_small(dir.path(), "c.csv", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert!(csv.starts_with("trial,t,dist_sq_played,dist_sq_pivot,warnings\n"));
    assert!(!csv.contains('\r'));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("c.json")).unwrap()).unwrap();
    assert_eq!(summary["T"], 300);
    assert_eq!(summary["trials"], 2);
    assert_eq!(summary["seed"], 5);
    assert_eq!(summary["game"]["family"], "cournot");
}

#[test]
fn same_invocation_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    run_small(dir.path(), "a.csv", &[]);
    run_small(dir.path(), "b.csv", &["--workers", "2"]);
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn missing_game_is_a_usage_error() {
    let o = mbg(&["run", "--algo", "barrier"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--game"));
}

#[test]
fn invalid_values_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_small(dir.path(), "x.csv", &["--trials", "0"]).status.code(), Some(2));
    assert_eq!(run_small(dir.path(), "x.csv", &["--b", "-1"]).status.code(), Some(2));
    assert_eq!(mbg(&["run", "--game", "cournot", "--algo", "barrier", "--bogus", "1"]).status.code(), Some(2));
    let o = mbg(&["run", "--game", "logistic", "--algo", "fkm", "--T", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--data"));
}

#[test]
fn solve_ne_symmetric_cournot() {
    let o = mbg(&["solve-ne", "--game", "cournot", "--a", "2", "--b", "1", "--costs", "0.5,0.5", "--capacities", "10,10"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for x in v["x_star"].as_array().unwrap() {
        assert!((x[0].as_f64().unwrap() - 0.5).abs() < 1e-9);
    }
    assert!(v["residual"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn solve_ne_single_kelly_bidder() {
    let o = mbg(&[
        "solve-ne", "--game", "kelly", "--gains", "1", "--quantities", "1", "--entry", "0.25", "--budgets", "1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    // √(g q d) - d = 0.5 - 0.25.
    assert!((v["x_star"][0][0].as_f64().unwrap() - 0.25).abs() < 1e-8);
}

#[test]
fn solve_ne_rejects_nonpositive_tol() {
    let o = mbg(&["solve-ne", "--game", "cournot", "--tol", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("cfg.csv");
    std::fs::write(
        &cfg,
        format!("# small run\ngame=cournot\nalgo=fkm\nN=3\nT=400\ntrials=1\nout={}\n", out.display()),
    )
    .unwrap();
    let o = mbg(&["run", "--config", cfg.to_str().unwrap(), "--T", "50"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cfg.json")).unwrap()).unwrap();
    assert_eq!(summary["T"], 50);
    assert_eq!(summary["algorithm"], "fkm");

    std::fs::write(&cfg, "game=cournot\nunknown_key=1\n").unwrap();
    assert_eq!(mbg(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env.csv");
    let o = Command::new(env!("CARGO_BIN_EXE_mbg"))
        .args(["run", "--game", "cournot", "--algo", "fkm", "--N", "2", "--T", "20", "--trials", "1", "--out"])
        .arg(&out)
        .env("MBG_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("env.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 77);
}

#[test]
fn inspect_data_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.libsvm");
    std::fs::write(&path, "+1 1:0.5 3:1\n-1 2:1\n-1 1:-1\n").unwrap();
    let o = mbg(&["inspect-data", "--data", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!((v["samples"].as_u64(), v["features"].as_u64(), v["positives"].as_u64()), (Some(3), Some(3), Some(1)));

    let empty = dir.path().join("empty.libsvm");
    std::fs::write(&empty, "").unwrap();
    let o = mbg(&["inspect-data", "--data", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["samples"], 0);

    std::fs::write(&path, "+1 1:0.5\n+1 oops\n").unwrap();
    let o = mbg(&["inspect-data", "--data", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"));

    let o = mbg(&["inspect-data", "--data", "synthetic:1000x60"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!((v["samples"].as_u64(), v["features"].as_u64()), (Some(1000), Some(60)));
}

#[test]
fn regret_prints_per_horizon_means() {
    let o = mbg(&["regret", "--horizons", "50,200", "--trials", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "T,regret_mean,regret_std");
    assert!(lines[1].starts_with("50,") && lines[2].starts_with("200,"));
    assert_eq!(mbg(&["regret", "--adversary", "constant"]).status.code(), Some(2));
}

#[test]
fn table_over_small_cells() {
    let o = mbg(&["table", "--family", "kelly", "--max-N", "10", "--T", "50", "--trials", "2", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("N,S,dbar,barrier_mean,barrier_std,fkm_mean,fkm_std"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn help_lists_flags_with_defaults() {
    for sub in ["run", "solve-ne", "regret", "table", "inspect-data"] {
        let o = mbg(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        let text = stdout(&o);
        assert!(text.contains("--config"), "{sub}");
        assert!(text.contains("--seed"), "{sub}");
    }
    let run = stdout(&mbg(&["run", "--help"]));
    assert!(run.contains("[default: 10000]"));
    assert!(run.contains("[env: MBG_SEED="));
}
