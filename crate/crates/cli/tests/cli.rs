use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn growlab(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_growlab"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn run_dir(stdout: &str) -> String {
    stdout.lines().last().unwrap().split('\t').nth(2).unwrap().to_string()
}

#[test]
fn minimal_merging_config_emits_tv_csv() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("m.json"), r#"{"experiment": "merging", "N": 8}"#).unwrap();
    let (code, stdout, stderr) = growlab(tmp.path(), &["run", "m.json"]);
    assert_eq!(code, 0, "{stderr}");
    let dir = tmp.path().join(run_dir(&stdout));
    let csv = fs::read_to_string(dir.join("merging.csv")).unwrap();
    assert!(csv.starts_with("t,tv,relsup\n"));
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    let r = &summary["results"];
    for key in ["N", "theta", "eta", "eps", "T_tv", "T_sup", "budget_exhausted"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert_eq!(r["N"], 8);
    assert!(dir.join("config.json").exists());
}

#[test]
fn malformed_json_exits_one_with_position() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.json"), "{\n  \"N\": 8,\n  oops\n}").unwrap();
    let (code, _, stderr) = growlab(tmp.path(), &["run", "bad.json"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("line 3"), "{stderr}");
}

#[test]
fn unknown_keys_exit_one_and_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, stderr) = growlab(tmp.path(), &["merging", "--N", "8", "--colour", "red"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("colour"), "{stderr}");
}

#[test]
fn budget_exhaustion_exits_two_and_keeps_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, stdout, _) = growlab(tmp.path(), &["merging", "--N", "8", "--t-max", "100", "--budgets.max_steps", "40"]);
    assert_eq!(code, 2);
    let csv = fs::read_to_string(tmp.path().join(run_dir(&stdout)).join("merging.csv")).unwrap();
    assert_eq!(csv.lines().count(), 42);
}

#[test]
fn rational_outputs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["evolve", "--family", "path", "--times", "[3, 7, 10]", "--exact-arithmetic", "--seed", "5"];
    let (c1, s1, _) = growlab(tmp.path(), &args);
    let a = fs::read(tmp.path().join(run_dir(&s1)).join("distribution.csv")).unwrap();
    let (c2, s2, _) = growlab(tmp.path(), &args);
    let b = fs::read(tmp.path().join(run_dir(&s2)).join("distribution.csv")).unwrap();
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(run_dir(&s1), run_dir(&s2));
    assert_eq!(a, b);
    assert!(String::from_utf8(a).unwrap().contains('/'));
}

#[test]
fn hash_changes_with_parameters_only() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, a, _) = growlab(tmp.path(), &["merging", "--N", "8", "--t-max", "50"]);
    let (_, b, _) = growlab(tmp.path(), &["merging", "--N", "8", "--t-max", "50", "--workers", "1"]);
    let (_, c, _) = growlab(tmp.path(), &["merging", "--N", "8", "--t-max", "51"]);
    assert_eq!(run_dir(&a), run_dir(&b));
    assert_ne!(run_dir(&a), run_dir(&c));
}

#[test]
fn grid_runs_every_point() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("g.json"),
        r#"{"experiment": "merging", "t_max": 200, "grid": {"N": [4, 6, 8]}, "workers": 2}"#,
    )
    .unwrap();
    let (code, stdout, stderr) = growlab(tmp.path(), &["run", "g.json"]);
    assert_eq!(code, 0, "{stderr}");
    assert_eq!(stdout.lines().count(), 3);
}

#[test]
fn seeded_simulation_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["simulate", "--family", "path", "--times", "[10]", "--replicates", "2000", "--seed", "9"];
    let (_, s1, _) = growlab(tmp.path(), &args);
    let a = fs::read(tmp.path().join(run_dir(&s1)).join("marginals.csv")).unwrap();
    let (_, s2, _) = growlab(tmp.path(), &args);
    let b = fs::read(tmp.path().join(run_dir(&s2)).join("marginals.csv")).unwrap();
    assert_eq!(a, b);
}
