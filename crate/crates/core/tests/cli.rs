use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nilsoliton"));
    cmd.env_remove("NILSOLITON_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_stdin(args: &[&str], input: &str) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn report_on_builtin_algebra_finds_soliton() {
    let out = run(&["--quiet", "report", "--corpus", "h5"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stderr.is_empty(), "quiet suppresses the summary");
    let v = json(&out);
    assert_eq!(v["verdict"]["status"], "soliton-found");
    assert_eq!(v["command"], "report");
}

#[test]
fn summary_goes_to_stderr() {
    let out = run(&["report", "--corpus", "h3"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(!out.stderr.is_empty());
    json(&out);
}

#[test]
fn document_from_stdin() {
    let doc = r#"{"dim": 3, "brackets": [{"i": 1, "j": 2, "k": 3, "c": 1}]}"#;
    let out = run_stdin(&["--quiet", "ricci", "-"], doc);
    assert_eq!(out.status.code(), Some(0));
    let c = json(&out)["ricci"]["c"].as_f64().unwrap();
    assert!((c + 1.5).abs() < 1e-10);
}

#[test]
fn parse_errors_exit_one_with_located_message() {
    let out = run_stdin(&["--quiet", "validate"], "{\"dim\": 3,\n \"brackets\": [{\"i\": 2, \"j\": 1, \"k\": 3, \"c\": 1}]}");
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["error"]["code"], "ParseError");
    assert!(v["error"]["message"].as_str().unwrap().contains("brackets[0].j"));

    let out = run_stdin(&["--quiet", "validate"], "not json");
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["error"]["code"], "ParseError");
}

#[test]
fn non_nilpotent_input_is_rejected() {
    // [e1, e2] = e2 is solvable but not nilpotent.
    let doc = r#"{"dim": 2, "brackets": [{"i": 1, "j": 2, "k": 2, "c": 1}]}"#;
    let out = run_stdin(&["--quiet", "validate"], doc);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["error"]["code"], "NotNilpotent");
}

#[test]
fn unknown_corpus_name() {
    let out = run(&["--quiet", "der", "--corpus", "nope"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["error"]["code"], "UnknownName");
}

#[test]
fn weight_of_a_direction() {
    let lambda = scratch("lambda.json");
    std::fs::write(&lambda, r#"{"dim": 4, "rows": [[0,0,0,0],[0,0,0,0],[0,0,1,0],[0,0,0,0]]}"#).unwrap();
    let out = run(&["--quiet", "nu", "--corpus", "n4", "--lambda", lambda.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["weight"]["nu"].as_f64(), Some(1.0));

    std::fs::write(&lambda, r#"{"dim": 4, "rows": [[0,1,0,0],[0,0,0,0],[0,0,1,0],[0,0,0,0]]}"#).unwrap();
    let out = run(&["--quiet", "nu", "--corpus", "n4", "--lambda", lambda.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["error"]["code"], "AsymmetricInput");
}

#[test]
fn truncated_flow_is_inconclusive() {
    let out = run(&["--quiet", "flow", "--corpus", "L7", "--max-iter", "2"]);
    assert_eq!(out.status.code(), Some(20));
    assert_eq!(json(&out)["verdict"]["status"], "inconclusive");
}

#[test]
fn invalid_flow_config() {
    let out = run(&["--quiet", "flow", "--corpus", "h3", "--tol=-1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["error"]["code"], "ConfigInvalid");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["nu", "--corpus", "h3"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn criterion_on_simple_spectrum() {
    let out = run(&["--quiet", "criterion", "--corpus", "n4"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["criterion"]["definitive"], true);
}

#[test]
fn output_is_byte_deterministic() {
    for args in [["--quiet", "report", "--corpus", "L6"], ["--quiet", "criterion", "--corpus", "h7"]] {
        let a = run(&args);
        let b = run(&args);
        assert_eq!(a.stdout, b.stdout);
    }
}

#[test]
fn seed_from_environment() {
    let explicit = run(&["--quiet", "--seed", "7", "report", "--corpus", "h5", "--start-radius", "0.5"]);
    let from_env = bin()
        .env("NILSOLITON_SEED", "7")
        .args(["--quiet", "report", "--corpus", "h5", "--start-radius", "0.5"])
        .output()
        .unwrap();
    assert_eq!(explicit.stdout, from_env.stdout);
    assert_eq!(json(&from_env)["seed"], 7);
    let default = run(&["--quiet", "report", "--corpus", "h5", "--start-radius", "0.5"]);
    assert_eq!(json(&default)["seed"], 1);
}

#[test]
fn certificate_round_trip_and_tamper() {
    let path = scratch("n4-cert.json");
    let out = run(&["--quiet", "--certificate-out", path.to_str().unwrap(), "report", "--corpus", "n4"]);
    assert_eq!(out.status.code(), Some(0));

    let out = run(&["--quiet", "certify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));

    let mut cert: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let c = cert["soliton"]["c"].as_f64().unwrap();
    cert["soliton"]["c"] = Value::from(c * 1.001);
    let tampered = scratch("n4-cert-tampered.json");
    std::fs::write(&tampered, serde_json::to_string(&cert).unwrap()).unwrap();
    let out = run(&["--quiet", "certify", tampered.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["error"]["code"], "MalformedCertificate");
}

#[test]
fn corpus_listing() {
    let out = run(&["corpus"]);
    assert_eq!(out.status.code(), Some(0));
    let names = String::from_utf8(out.stdout).unwrap();
    assert!(names.lines().any(|l| l == "h3"));
    let out = run(&["corpus", "n4"]);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["dim"], 4);
}
