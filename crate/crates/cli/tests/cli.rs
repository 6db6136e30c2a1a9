use std::path::PathBuf;
use std::process::{Command, Output};

use deployopt_cli::{EXIT_EXTERNAL_UNAVAILABLE, EXIT_INFEASIBLE, EXIT_OK, EXIT_PARSE, EXIT_TIMEOUT, EXTERNAL_SOLVER_ENV};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deployopt")).args(args).env_remove(EXTERNAL_SOLVER_ENV).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn estimate_prints_json() {
    let out = run(&["estimate", path(&fixture("oryx2.json"))]);
    assert_eq!(code(&out), EXIT_OK);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["m_upper"], 11);
}

#[test]
fn malformed_spec_exits_with_parse_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"name\": \"x\",\n  \"components\": [").unwrap();
    let out = run(&["estimate", path(&bad)]);
    assert_eq!(code(&out), EXIT_PARSE);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}

#[test]
fn unknown_flag_exits_with_parse_code() {
    assert_eq!(code(&run(&["plan", "--bogus"])), EXIT_PARSE);
}

#[test]
fn smt_backend_without_solver_is_unavailable() {
    let out = run(&["plan", path(&fixture("secure-billing.json")), path(&fixture("offers-20.json")), "--backend", "smt"]);
    assert_eq!(code(&out), EXIT_EXTERNAL_UNAVAILABLE);
}

#[test]
fn plan_then_check_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    let (spec, offers) = (fixture("wordpress.json"), fixture("offers-20.json"));
    let out = run(&["plan", path(&spec), path(&offers), "--strategy", "fvpr", "--min-wordpress-instances", "4", "--out", path(&plan)]);
    assert_eq!(code(&out), EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&plan).unwrap()).unwrap();
    assert_eq!(v["status"], "optimal");
    assert_eq!(v["check_passed"], true);
    let checked = run(&["check", path(&spec), path(&offers), path(&plan), "--min-wordpress-instances", "4"]);
    assert_eq!(code(&checked), EXIT_OK);

    let mut tampered = v.clone();
    tampered["plan"]["total_price"] = serde_json::json!(1);
    std::fs::write(&plan, tampered.to_string()).unwrap();
    assert_ne!(code(&run(&["check", path(&spec), path(&offers), path(&plan), "--min-wordpress-instances", "4"])), EXIT_OK);
}

#[test]
fn infeasible_and_timeout_codes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("pair.json");
    std::fs::write(
        &spec,
        r#"{"name":"pair","dimensions":["cpu","memory","storage"],
            "components":[{"id":1,"name":"A","requirements":{"cpu":1,"memory":1,"storage":1}},
                          {"id":2,"name":"B","requirements":{"cpu":1,"memory":1,"storage":1}}],
            "constraints":[{"kind":"conflict","i":1,"j":2}]}"#,
    )
    .unwrap();
    let offers = fixture("offers-20.json");
    assert_eq!(code(&run(&["plan", path(&spec), path(&offers), "--machines", "1"])), EXIT_INFEASIBLE);
    assert_eq!(code(&run(&["plan", path(&fixture("oryx2.json")), path(&offers), "--timeout", "0"])), EXIT_TIMEOUT);
}

#[test]
fn emit_smt_writes_a_query() {
    let dir = tempfile::tempdir().unwrap();
    let out_file = dir.path().join("wp.smt2");
    let out = run(&[
        "emit-smt",
        path(&fixture("wordpress.json")),
        path(&fixture("offers-20.json")),
        "--strategy",
        "fv",
        "--out",
        path(&out_file),
    ]);
    assert_eq!(code(&out), EXIT_OK);
    let text = std::fs::read_to_string(&out_file).unwrap();
    assert!(text.starts_with("; N=5 M=8 H=3 O=20\n"));
    assert!(text.contains("(minimize "));
    let bounded = run(&["emit-smt", path(&fixture("wordpress.json")), path(&fixture("offers-20.json")), "--no-opt", "--bound", "500000"]);
    let text = String::from_utf8(bounded.stdout).unwrap();
    assert!(text.contains("500000))") && !text.contains("minimize"));
}

#[test]
fn empty_bench_matrix_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("m.json");
    std::fs::write(&matrix, r#"{"problems":[],"offers":[],"strategies":[]}"#).unwrap();
    let csv = dir.path().join("out.csv");
    let out = run(&["bench", path(&matrix), "--out", path(&csv)]);
    assert_eq!(code(&out), EXIT_OK);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("problem,offer_count,strategy,fv_mode,status,objective"));
}

#[test]
fn bench_runs_a_small_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("m.json");
    std::fs::write(
        &matrix,
        format!(
            r#"{{"timeout_s":60,"problems":[{{"name":"billing","spec":"{}"}}],
                "offers":[{{"count":20,"file":"{}"}}],"strategies":["none","fv","fvpr"],
                "fv_modes":["full","conservative"]}}"#,
            path(&fixture("secure-billing.json")),
            path(&fixture("offers-20.json"))
        ),
    )
    .unwrap();
    let out = run(&["bench", path(&matrix), "--jobs", "2"]);
    assert_eq!(code(&out), EXIT_OK);
    let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| &r[4] == "optimal" && &r[5] == "232000"));
}
