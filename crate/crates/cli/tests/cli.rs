use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> PathBuf {
    root().join("configs").join(name)
}

fn fixture() -> PathBuf {
    root().join("crates/core/tests/fixtures/point_a_plan.csv")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spacelog")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn empty_demand_solves_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.lp");
    let out = run(&["solve", "--config", s(&config("empty-demand.json")), "--out", s(dir.path()), "--dump-model", s(&model)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "optimal");
    assert_eq!(report["objective"], 0.0);
    assert!(dir.path().join("solution.json").exists());
    assert!(dir.path().join("solution.csv").exists());
    let text = fs::read_to_string(&model).unwrap();
    assert!(text.starts_with("\\ model") && text.contains("Subject To"));
}

#[test]
fn baseline_solves() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve", "--config", s(&config("baseline.json")), "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let obj = report["objective"].as_f64().unwrap();
    assert!((obj / 372_671.0 - 1.0).abs() <= 0.005, "{obj}");
    assert_eq!(report["crew_days"].as_f64().map(|d| d <= 21.0 + 1e-6), Some(true));
}

#[test]
fn infeasible_crew_time_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve", "--config", s(&config("infeasible-time.json")), "--out", s(dir.path())]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{ "crew_days": -3 }"#).unwrap();
    let out = run(&["solve", "--config", s(&bad), "--out", s(dir.path())]);
    assert_eq!(code(&out), 1);
    fs::write(&bad, r#"{ "crew_dayz": 3 }"#).unwrap();
    assert_eq!(code(&run(&["solve", "--config", s(&bad), "--out", s(dir.path())])), 1);
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&run(&["validate", "--plan", s(&fixture()), "--config", s(&missing)])), 1);
}

#[test]
fn fixture_validates() {
    let out = run(&["validate", "--plan", s(&fixture()), "--config", s(&config("point-a.json"))]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn fixture_fails_with_small_tug() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(config("point-a.json")).unwrap()).unwrap();
    cfg["fleet"] = serde_json::json!({ "capacity_kg": { "tug2": 5000.0 } });
    let path = dir.path().join("small.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let out = run(&["validate", "--plan", s(&fixture()), "--config", s(&path)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("tug2"));
}

#[test]
fn solves_lp_text() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.lp");
    fs::write(
        &model,
        "Minimize\n obj: - 5 x - 4 y\nSubject To\n c1: + 6 x + 4 y <= 24\n c2: + 1 x + 2 y <= 6\nBounds\n 0 <= x <= 10\n 0 <= y <= 10\nGeneral\n x\n y\nEnd\n",
    )
    .unwrap();
    let values = dir.path().join("x.json");
    let out = run(&["solve-lp", s(&model), "--out", s(&values)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["objective"], -20.0);
    let x: serde_json::Value = serde_json::from_str(&fs::read_to_string(values).unwrap()).unwrap();
    assert_eq!((x["x"].as_f64(), x["y"].as_f64()), (Some(4.0), Some(0.0)));

    fs::write(&model, "Minimize\n obj: + 1 x\nSubject To\n c: + 1 x >= 5\nBounds\n 0 <= x <= 2\nEnd\n").unwrap();
    assert_eq!(code(&run(&["solve-lp", s(&model)])), 2);
    fs::write(&model, "Minimize\n obj: + 1 x\nSubject To\n c: + 1 x >=\nEnd\n").unwrap();
    assert_eq!(code(&run(&["solve-lp", s(&model)])), 1);
}

#[test]
fn sweep_writes_pareto_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["sweep", "--config", s(&config("empty-demand.json")), "--out", s(dir.path()), "--grid", "0,120x30,40"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("pareto.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["T_cargo", "T_crew", "objective_kg", "savings_pct", "status"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert_eq!(&r[4], "optimal");
        let cargo = &r[0];
        let crew = &r[1];
        assert!(dir.path().join(format!("plans/plan_{cargo}_{crew}.csv")).exists());
    }
    assert!(dir.path().join("sweep.json").exists());
}
