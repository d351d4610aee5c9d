use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn foldcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_foldcert"))
        .args(args)
        .env_remove("FOLDCERT_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(foldcert(&["--help"]).status.code(), Some(0));
    assert_eq!(foldcert(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(foldcert(&[]).status.code(), Some(1));
    assert_eq!(foldcert(&["certify", "--bogus"]).status.code(), Some(1));
    assert_eq!(foldcert(&["certify", "--problem", "nosuch", "--point", "0,0"]).status.code(), Some(1));
    assert_eq!(foldcert(&["certify", "--problem", "fold1d", "--point", "0"]).status.code(), Some(1));
}

#[test]
fn numerical_refusals_exit_two() {
    let out = foldcert(&["limit", "--problem", "pitchfork1d", "--x-init", "0.5", "--t-span", "1,-1", "--eps-list", "0.1"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn certify_reports_the_fold() {
    let out = foldcert(&["certify", "--problem", "fold1d", "--point", "0,0"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["data"]["classification"], "TransversalSingular");
    assert_eq!(v["metadata"]["command"], "certify");
    assert_eq!(v["metadata"]["seed"], 271828);
    let out = foldcert(&["certify", "--problem", "pitchfork1d", "--point", "0,0"]);
    assert_eq!(json(&out)["data"]["classification"], "NonTransversal");
}

#[test]
fn generic_pitchfork_loses_its_degeneracy() {
    let out = foldcert(&["generic", "--problem", "pitchfork1d", "--samples", "40", "--radius", "0.1"]);
    assert_eq!(out.status.code(), Some(0));
    let d = &json(&out)["data"];
    assert_eq!(d["unperturbed_outcome"], "SomeNonTransversal");
    assert_eq!(d["samples"].as_array().unwrap().len(), 40);
    assert_eq!(d["failure_fraction"], 0.0);
    assert_eq!(d["inconclusive_fraction"], 0.0);
}

#[test]
fn stdout_only_without_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_foldcert"))
        .current_dir(dir.path())
        .args(["folds", "--problem", "cubicload", "--t-range", "-1,1"])
        .env_remove("FOLDCERT_OUTPUT_DIR")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["data"]["folds"].as_array().unwrap().len(), 2);
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_foldcert"))
        .args(["trace", "--problem", "fold1d", "--start", "1,1", "--t-range", "0,2"])
        .env("FOLDCERT_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let names: Vec<String> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert!(names.iter().any(|n| n.ends_with(".csv")), "{names:?}");
    assert!(names.iter().any(|n| n.ends_with(".json")), "{names:?}");
    let csv = names.iter().find(|n| n.ends_with(".csv")).unwrap();
    let text = fs::read_to_string(dir.path().join(csv)).unwrap();
    assert!(text.starts_with("# metadata: "));
}

#[test]
fn run_config_executes_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "command = \"certify\"\nproblem = \"cubicload\"\nseed = 7\n\n[params]\npoint = \"0.5773502691896258,-0.3849001794597505\"\n",
    );
    let out = foldcert(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["metadata"]["seed"], 7);
    assert_eq!(v["data"]["classification"], "TransversalSingular");
}

#[test]
fn run_config_rejects_unknown_keys_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let bodies = [
        format!("command = \"certify\"\nproblem = \"fold1d\"\nbogus = 1\noutput_dir = {:?}\n[params]\npoint = \"0,0\"\n", out_dir),
        format!("command = \"certify\"\nproblem = \"fold1d\"\noutput_dir = {:?}\n[params]\npoint = \"0,0\"\npiont = 3\n", out_dir),
        format!("command = \"certify\"\nproblem = \"fold1d\"\noutput_dir = {:?}\n[params]\nproblem = \"fold1d\"\npoint = \"0,0\"\n", out_dir),
        "command = \"nosuch\"\n".to_string(),
    ];
    for body in &bodies {
        let cfg = write_config(dir.path(), body);
        let out = foldcert(&["run", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(1), "{body}");
        assert!(out.stdout.is_empty());
        assert!(!out_dir.exists(), "{body}");
    }
}

#[test]
fn schema_lists_documents() {
    let out = foldcert(&["--schema"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    for key in ["envelope", "certify", "fold_record", "generic", "limit_curve", "csv"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

#[test]
fn json_format_writes_json_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = foldcert(&["--format", "json", "--output-dir", d, "section", "--problem", "cubicload", "--t", "0,0.2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for e in fs::read_dir(dir.path()).unwrap() {
        let p = e.unwrap().path();
        assert_eq!(p.extension().unwrap(), "json", "{}", p.display());
        let v: Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        assert!(v.get("metadata").is_some());
    }
}
