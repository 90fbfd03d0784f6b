use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qtranspile_core::linalg::circuit_fidelity;
use qtranspile_core::{qasm, GateSetConfig};

const BELL: &str = "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[2];\nsx q[0];\ncx q[0],q[1];\nrz(0.5) q[1];\n";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtranspile"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn help_lists_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for cmd in ["gen-data", "tokenize", "transpile", "sk", "train", "eval", "bench", "inspect"] {
        assert!(text.contains(cmd), "{cmd}");
    }
}

#[test]
fn oracle_transpile_writes_qasm_and_report() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.qasm"), BELL).unwrap();
    let o = run(dir.path(), &["transpile", "a.qasm", "--oracle", "--to", "heron", "--report", "r.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = qasm::parse(&stdout(&o)).unwrap();
    let heron = GateSetConfig::heron();
    assert!(out.ops.iter().all(|op| heron.contains(op.gate)));
    let src = qasm::parse(BELL).unwrap();
    assert!(circuit_fidelity(&src, &out).unwrap() > 1.0 - 1e-9);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["grammar_valid"], true);
    assert!(report["fidelity"].as_f64().unwrap() > 1.0 - 1e-9);
}

#[test]
fn tokenize_prints_one_token_per_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.qasm"), BELL).unwrap();
    let o = run(dir.path(), &["tokenize", "a.qasm"]);
    assert!(o.status.success());
    let lines: Vec<String> = stdout(&o).lines().map(str::to_owned).collect();
    assert_eq!(lines.first().unwrap(), "1\t<BOS>");
    assert_eq!(lines.last().unwrap(), "2\t<EOS>");
    assert!(lines.iter().any(|l| l.ends_with("\tPARAM_10")));
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(dir.path(), &["transpile", "nope.qasm", "--oracle"]);
    assert_eq!(missing.status.code(), Some(2));
    fs::write(dir.path().join("bad.qasm"), "OPENQASM 2.0;\nqreg q[1];\nfoo q[0];\n").unwrap();
    let bad = run(dir.path(), &["tokenize", "bad.qasm"]);
    assert_eq!(bad.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&bad.stderr).unwrap();
    assert_eq!(err["error"], "validation");
    fs::write(dir.path().join("a.qasm"), BELL).unwrap();
    let foreign = run(dir.path(), &["transpile", "a.qasm", "--oracle", "--from", "ionq"]);
    assert_eq!(foreign.status.code(), Some(1));
    let unknown = run(dir.path(), &["gen-data", "--preset", "nope", "--out", "x"]);
    assert_eq!(unknown.status.code(), Some(1));
}

#[test]
fn gen_data_echoes_a_reloadable_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["gen-data", "--preset", "eagle-to-heron", "--out", "d", "--pairs", "5", "--qubits", "1,2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = fs::read_to_string(dir.path().join("d/pairs.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 10);
    let again = run(dir.path(), &["gen-data", "--config", "d/config.toml", "--out", "e"]);
    assert!(again.status.success());
    assert_eq!(fs::read(dir.path().join("d/pairs.jsonl")).unwrap(), fs::read(dir.path().join("e/pairs.jsonl")).unwrap());
    let m = run(dir.path(), &["inspect", "d/pairs.jsonl.manifest.json"]);
    assert!(stdout(&m).contains("dataset_manifest"));
}
