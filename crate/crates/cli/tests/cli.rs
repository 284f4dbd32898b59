use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_conic-synth"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("spawn")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const LAG: &str = r#"{"A": [[-1.0]], "B": [[1.0]], "C": [[1.0]]}"#;

const SCALAR_PLANT: &str = r#"{
  "A": [[-1.0]], "B1": [[1.0, 0.0]], "B2": [[1.0]],
  "C1": [[1.0], [0.0]], "C2": [[1.0]],
  "D12": [[0.0], [1.0]], "D21": [[0.0, 1.0]]
}"#;

#[test]
fn analyze_cone_certifies_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "lag.json", LAG);
    let out = run(&["analyze-cone", "--sys", "lag.json", "--cone", "-1", "2", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["in_cone"], true);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/cone_report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["command"], "analyze-cone");
    assert!(report["certificate"]["P"].is_array());
}

#[test]
fn analyze_cone_reports_violation_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "lag.json", LAG);
    let out = run(&["analyze-cone", "--sys", "lag.json", "--cone", "-0.1", "0.1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = stdout_json(&out);
    assert_eq!(err["error"], "not-in-cone");
    assert!(err["details"]["frequency"]["worst_omega"].is_number());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(&["synthesize", "--plant", "nope.json", "--cone", "-1", "1"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(stdout_json(&missing)["error"], "usage");
    assert_eq!(run(&["synthesize", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&[], dir.path()).status.code(), Some(2));

    write(dir.path(), "plant.json", SCALAR_PLANT);
    let no_cone = run(&["init", "--plant", "plant.json"], dir.path());
    assert_eq!(no_cone.status.code(), Some(2));
    let no_ctrl = run(&["init", "--plant", "plant.json", "--cone", "-1", "1", "--init", "arbitrary"], dir.path());
    assert_eq!(no_ctrl.status.code(), Some(2));
    let bad_eps = run(&["synthesize", "--plant", "plant.json", "--cone", "-1", "1", "--epsilon", "0"], dir.path());
    assert_eq!(bad_eps.status.code(), Some(2));
    write(dir.path(), "bad.toml", "no_such_key = 1\n");
    let bad_cfg = run(&["analyze-cone", "--config", "bad.toml"], dir.path());
    assert_eq!(bad_cfg.status.code(), Some(2));
}

#[test]
fn flags_override_config_files() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "lag.json", LAG);
    write(dir.path(), "run.toml", "sys = \"lag.json\"\ncone = [-0.1, 0.1]\n");
    assert_eq!(run(&["analyze-cone", "--config", "run.toml"], dir.path()).status.code(), Some(1));
    let out = run(&["analyze-cone", "--config", "run.toml", "--cone", "-1", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    write(dir.path(), "run.json", r#"{"sys": "lag.json", "cone": [-1, 2], "form": 3}"#);
    let out = run(&["analyze-cone", "--config", "run.json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["form"], 3);
}

#[test]
fn synthesis_artifacts_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "plant.json", SCALAR_PLANT);
    let args = |out: &'static str| {
        vec!["synthesize", "--plant", "plant.json", "--controller-cone", "-0.05", "0.05", "--init", "conicc", "--out", out]
    };
    let a = run(&args("a"), dir.path());
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stdout));
    let b = run(&args("b"), dir.path());
    assert_eq!(b.status.code(), Some(0));
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/history.csv"), read("b/history.csv"));
    let history = String::from_utf8(read("a/history.csv")).unwrap();
    let mut lines = history.lines();
    assert!(lines.next().unwrap().starts_with("# config: {"));
    assert_eq!(lines.next().unwrap(), "iter,Jprime,Jtrue,lyap_residual,conic_residual");
    let ctrl: Value = serde_json::from_slice(&read("a/controller.json")).unwrap();
    assert_eq!(ctrl["in_cone"], true);
    assert!(ctrl["Ahat"].is_array() && ctrl["config"]["nc"] == 1);
    // leftover temporary files would show up here
    let names: Vec<_> = std::fs::read_dir(dir.path().join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 3, "{names:?}");
}

#[test]
fn init_emits_a_feasible_point() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "plant.json", SCALAR_PLANT);
    let out = run(&["init", "--plant", "plant.json", "--controller-cone", "-0.05", "0.05", "--init", "ico", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let init: Value = serde_json::from_slice(&std::fs::read(dir.path().join("o/init.json")).unwrap()).unwrap();
    assert_eq!(init["method"], "ico");
    assert!(init["Q0"].is_array() && init["P0"].is_array());
}

#[test]
fn benchmark_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let go = |out: &str, threads: &str| {
        bin()
            .args(["benchmark", "--designs", "h2", "--samples", "12", "--seed", "5", "--out", out])
            .env("CONIC_SYNTH_THREADS", threads)
            .current_dir(dir.path())
            .output()
            .unwrap()
    };
    assert_eq!(go("a", "1").status.code(), Some(0));
    assert_eq!(go("b", "3").status.code(), Some(0));
    for f in ["table1.csv", "histogram_cost.csv", "histogram_regret.csv", "design_curves.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    assert_eq!(go("c", "many").status.code(), Some(2));
}
