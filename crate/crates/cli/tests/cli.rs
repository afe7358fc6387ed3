use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "seed": 5,
  "cascade": { "n_trees": 3, "max_layers": 2 },
  "sweeps": [
    { "axis": "precision", "values": [2, 3], "trials": 2 },
    { "axis": "sigma", "values": [0.0, 0.05], "trials": 2 },
    { "axis": "trees", "values": [1, 2], "trials": 1 }
  ]
}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acam-drf"))
        .args(args)
        .arg("--config")
        .arg(dir.join("config.json"))
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn setup(config: &str) -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("config.json"), config).unwrap();
    tmp
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let tmp = setup(SMALL);
    for cmd in ["train", "compile", "simulate", "sweep", "cost", "report"] {
        let o = run(tmp.path(), &[cmd]);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let out = tmp.path().join("out");
    for f in [
        "model.json",
        "plan.json",
        "plan-report.csv",
        "results.csv",
        "cost.json",
        "cost.csv",
        "report.md",
        "accuracy-vs-bits.svg",
        "accuracy-vs-sigma.svg",
        "accuracy-vs-trees.svg",
        "energy-vs-latency.svg",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(results.starts_with("# results; tool=acam-drf"));
    assert_eq!(results.lines().count(), 3);
    let report = std::fs::read_to_string(out.join("report.md")).unwrap();
    assert!(report.contains("Calibrated technology files"));
}

#[test]
fn simulate_before_compile_names_the_missing_step() {
    let tmp = setup(SMALL);
    assert!(run(tmp.path(), &["train"]).status.success());
    let o = run(tmp.path(), &["simulate"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("acam-drf compile"), "{}", stderr(&o));
}

#[test]
fn stale_model_is_treated_as_missing() {
    let tmp = setup(SMALL);
    assert!(run(tmp.path(), &["train"]).status.success());
    std::fs::write(
        tmp.path().join("config.json"),
        SMALL.replace("\"seed\": 5", "\"seed\": 6"),
    )
    .unwrap();
    let o = run(tmp.path(), &["compile"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("acam-drf train"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2_with_a_line() {
    let tmp = setup("{\n  \"seed\": 1,\n  \"test_fraction\": 1.5\n}");
    let o = run(tmp.path(), &["train"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let tmp = setup("{\n  \"seed\": 1,\n  \"cascad\": {}\n}");
    let o = run(tmp.path(), &["train"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let tmp = setup("{ \"cascade\": {} }");
    assert_eq!(run(tmp.path(), &["train"]).status.code(), Some(2));
}

#[test]
fn unknown_flag_exits_2() {
    let tmp = setup(SMALL);
    assert_eq!(run(tmp.path(), &["train", "--bogus"]).status.code(), Some(2));
}

#[test]
fn seed_override_changes_the_model() {
    let tmp = setup(SMALL);
    assert!(run(tmp.path(), &["train"]).status.success());
    let a = std::fs::read(tmp.path().join("out/model.json")).unwrap();
    assert!(run(tmp.path(), &["train", "--seed", "9"]).status.success());
    let b = std::fs::read(tmp.path().join("out/model.json")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn report_without_inputs_is_a_missing_artifact() {
    let tmp = setup(SMALL);
    let o = run(tmp.path(), &["report"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn synth_semg_writes_a_table() {
    let tmp = setup(SMALL);
    let o = run(tmp.path(), &["synth-semg"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("out/semg.csv")).unwrap();
    assert!(csv.lines().next().unwrap().ends_with("label"));
    assert_eq!(csv.lines().count(), 1801);
}
