use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use plmforge::formats::plm_from_json;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plmforge")).args(args).env_remove("PLMFORGE_SEED").output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("plmforge-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write(name: &str, text: &str) -> String {
    let p = scratch(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["selftest", "nope"]).status.code(), Some(1));
}

#[test]
fn missing_and_malformed_inputs_exit_2() {
    assert_eq!(run(&["compile", "/nonexistent/q.txt", "/tmp/out.json"]).status.code(), Some(2));
    let bad = write("bad.txt", "qubits 1\nFOO 0\n");
    assert_eq!(run(&["compile", &bad, &write("o.json", "")]).status.code(), Some(2));
    let q = write("h.txt", "qubits 1\nH 0\n");
    assert_eq!(run(&["obf-eval", &q, "01"]).status.code(), Some(2));
    assert_eq!(run(&["obf-eval", &q, "q"]).status.code(), Some(2));
}

#[test]
fn compile_writes_loadable_program() {
    let q = write("c.txt", "qubits 2\ncin 1\nH 0\nT 0\nCNOT 0 1\ncZ 1 @0\nmeasure 0 1\n");
    let out = scratch("c.json");
    let o = run(&["compile", &q, out.to_str().unwrap(), "--check-projectivity"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("projectivity max_deviation"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let p = plm_from_json(&v).unwrap();
    assert_eq!(p.n_c, 1);
}

#[test]
fn obf_eval_is_deterministic_per_seed() {
    let q = write("t.txt", "qubits 1\nH 0\nT 0\n");
    let a = run(&["obf-eval", &q, "+", "--seed", "7", "--verbose"]);
    let b = run(&["obf-eval", &q, "+", "--seed", "7", "--verbose"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let f: f64 = text.lines().find_map(|l| l.strip_prefix("fidelity ")).unwrap().parse().unwrap();
    assert!(f > 0.999);
}

#[test]
fn insecure_dump_prints_keys() {
    let q = write("x.txt", "qubits 1\nX 0\n");
    let o = run(&["obf-eval", &q, "0", "--insecure-dump"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("\nS ") && text.contains("\nDelta "));
}

#[test]
fn selftest_report_is_reproducible() {
    let a = run(&["selftest", "f2", "--seed", "3"]);
    let b = run(&["selftest", "f2", "--seed", "3"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["suite"], "f2");
    assert!(v["wall_ms"].is_null());
    assert!(v["cases"].as_array().unwrap().iter().all(|c| c["pass"] == true));
}
