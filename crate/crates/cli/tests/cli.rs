use std::path::Path;
use std::process::{Command, Output};

use detloop::io::results_from_csv;
use serde_json::{json, Value};

fn detloop(args: &[&str], seed: Option<&str>) -> Output {
    detloop_in(None, args, seed)
}

fn detloop_in(cwd: Option<&Path>, args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_detloop"));
    cmd.args(args).env_remove("DETLOOP_SEED");
    if let Some(d) = cwd {
        cmd.current_dir(d);
    }
    if let Some(s) = seed {
        cmd.env("DETLOOP_SEED", s);
    }
    cmd.output().expect("binary runs")
}

/// Writes `config` into `dir` and runs it from there with output in `out/`.
fn run(dir: &Path, config: &Value, seed: Option<&str>) -> Output {
    std::fs::write(dir.join("job.json"), serde_json::to_string_pretty(config).unwrap()).unwrap();
    detloop_in(Some(dir), &["run", "job.json", "--out", "out"], seed)
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_functional_is_a_validation_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &json!({"task": "maximize", "functional": "chhs"}), None);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("functional"), "{}", stderr(&o));
}

#[test]
fn misspelled_field_is_rejected_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"task": "maximize", "functional": "chsh", "optimizer": {"restart": 4}});
    let o = run(dir.path(), &cfg, None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("optimizer"), "{}", stderr(&o));
}

#[test]
fn missing_crossing_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "task": "threshold",
        "functional": "pearl",
        "loss": {"model": "absorption", "eta": [1.0, 1.0], "sink_a": 1, "sink_b": 0},
        "optimizer": {"restarts": 4},
        "output": {"stem": "pearl"}
    });
    let o = run(dir.path(), &cfg, None);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    // the result file is still written
    let rows = results_from_csv(&read(dir.path(), "pearl.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].eta1, None);
}

#[test]
fn formulas_task_and_subcommand_agree() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &json!({"task": "formulas", "name": "ch_nsite_threshold", "args": {"n": 2}}), None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(text.contains("0.666"), "{text}");
    let sub = detloop(&["formulas", "ch_nsite_threshold", "--arg", "n=2"], None);
    assert_eq!(String::from_utf8_lossy(&sub.stdout), text);
    let bad = detloop(&["formulas", "ch_nsite_threshold", "--arg", "n=1"], None);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn threshold_results_round_trip_and_repeat_exactly() {
    let cfg = json!({
        "task": "threshold",
        "functional": "chsh",
        "params": {"branch": "lower"},
        "loss": {"model": "absorption", "eta": [1.0, 1.0], "sink_a": 1, "sink_b": 0},
        "family": {"kind": "symmetric"},
        "optimizer": {"restarts": 16},
        "output": {"stem": "chsh10"}
    });
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let oa = run(a.path(), &cfg, None);
    assert_eq!(oa.status.code(), Some(0), "{}", stderr(&oa));
    assert_eq!(run(b.path(), &cfg, None).status.code(), Some(0));

    let csv = read(a.path(), "chsh10.csv");
    let rows = results_from_csv(&csv).unwrap();
    assert_eq!(rows.len(), 1);
    let eta = rows[0].eta1.unwrap();
    assert!((eta - 0.667).abs() < 0.005, "{eta}");
    assert_eq!(rows[0].eta1, rows[0].eta2);
    assert_eq!(detloop::io::results_to_csv(&rows).unwrap(), csv);

    for name in ["chsh10.csv", "chsh10.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name} differs between runs");
    }
    let mirror: Value = serde_json::from_str(&read(a.path(), "chsh10.json")).unwrap();
    assert_eq!(mirror["config"]["functional"], "chsh");
}

#[test]
fn seed_variable_overrides_the_config() {
    let base = json!({
        "task": "maximize",
        "functional": "chsh",
        "loss": {"model": "absorption", "eta": [0.9, 0.9], "sink_a": 1, "sink_b": 0},
        "optimizer": {"restarts": 4, "seed": 11},
        "output": {"stem": "m"}
    });
    let mut other = base.clone();
    other["optimizer"]["seed"] = json!(99);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run(a.path(), &base, None).status.code(), Some(0));
    assert_eq!(run(b.path(), &other, Some("11")).status.code(), Some(0));
    assert_eq!(read(a.path(), "m.json"), read(b.path(), "m.json"));
    assert!(read(b.path(), "m.log").contains("seed"));

    let c = tempfile::tempdir().unwrap();
    let bad = run(c.path(), &base, Some("eleven"));
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn polytope_subcommand_writes_facets() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("facets.csv");
    let o = detloop(&["polytope", "bell(2,2,2,2)", "--facets", "--functional", "chsh", "--csv", csv.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(csv).unwrap();
    // header plus 24 facets
    assert_eq!(text.lines().count(), 25);
}

#[test]
fn list_functionals_shows_the_catalog() {
    let o = detloop(&["list-functionals"], None);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["chsh", "cglmp3", "i233", "s3", "ij"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}
