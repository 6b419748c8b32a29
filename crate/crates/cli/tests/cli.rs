use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;
use tempfile::TempDir;

fn hirec() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hirec"));
    for var in ["HIREC_CONFIG", "HIREC_INDEX", "HIREC_KB", "HIREC_CASES", "HIREC_LOG"] {
        c.env_remove(var);
    }
    c
}

fn run(args: &[&str]) -> Output {
    hirec().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Bench {
    _dir: TempDir,
    root: PathBuf,
    kb: PathBuf,
    index: PathBuf,
    cases: PathBuf,
}

fn bench() -> Bench {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let b = Bench {
        kb: root.join("kb.jsonl"),
        index: root.join("kb.hrvx"),
        cases: root.join("cases.jsonl"),
        root,
        _dir: dir,
    };
    let out = run(&["gen-corpus", "--out", s(&b.kb), "--cases-out", s(&b.cases)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = run(&["ingest", "--kb", s(&b.kb), "--index", s(&b.index)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    b
}

#[test]
fn ingest_reports_count() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb.jsonl");
    assert_eq!(code(&run(&["gen-corpus", "--out", s(&kb)])), 0);
    let index = dir.path().join("kb.hrvx");
    let out = run(&["ingest", "--kb", s(&kb), "--index", s(&index)]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8_lossy(&out.stdout), "indexed 15 documents\n");
    assert!(index.exists());
    assert!(dir.path().join("kb.hrvx.docs.jsonl").exists());
}

#[test]
fn ingest_malformed_line_exits_1_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb.jsonl");
    assert_eq!(code(&run(&["gen-corpus", "--out", s(&kb)])), 0);
    let mut f = fs::OpenOptions::new().append(true).open(&kb).unwrap();
    writeln!(f, "{{\"id\": \"broken\"").unwrap();
    let index = dir.path().join("kb.hrvx");
    let out = run(&["ingest", "--kb", s(&kb), "--index", s(&index)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("line 16"), "{}", stderr(&out));
    assert!(stderr(&out).contains("PARSE_ERROR"));
    assert!(!index.exists(), "nothing is written on validation failure");
}

#[test]
fn ingest_unwritable_index_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb.jsonl");
    assert_eq!(code(&run(&["gen-corpus", "--out", s(&kb)])), 0);
    let out = run(&["ingest", "--kb", s(&kb), "--index", s(&dir.path().join("missing/dir/kb.hrvx"))]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn ingest_missing_kb_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["ingest", "--kb", s(&dir.path().join("nope.jsonl")), "--index", s(&dir.path().join("x"))]);
    assert_eq!(code(&out), 1);
}

#[test]
fn recommend_missing_index_exits_1() {
    let out = run(&["recommend", "--index", "/definitely/not/here.hrvx", "--symptoms", "cough"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("INDEX_NOT_FOUND"));
    assert!(out.stdout.is_empty());
}

#[test]
fn recommend_corrupt_index_exits_1() {
    let b = bench();
    let mut bytes = fs::read(&b.index).unwrap();
    bytes[40] ^= 0x10;
    fs::write(&b.index, bytes).unwrap();
    let out = run(&["recommend", "--index", s(&b.index), "--symptoms", "cough"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("CORRUPT_SNAPSHOT"));
}

#[test]
fn recommend_flags_reach_config_used() {
    let b = bench();
    let out = run(&[
        "recommend", "--index", s(&b.index), "--symptoms", "chest pain", "--no-memory", "--top-k", "3",
        "--max-departments", "2", "--json",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["config_used"]["memory_enabled"], false);
    assert_eq!(v["config_used"]["root_top_k"], 3);
    assert_eq!(v["config_used"]["dept_top_k"], 3);
    assert_eq!(v["config_used"]["max_departments"], 2);
    assert_eq!(v["memory_final"].as_array().unwrap().len(), 0);
}

#[test]
fn recommend_input_errors_exit_1() {
    let b = bench();
    for args in [
        vec!["--query-json", r#"{"symptoms":""}"#],
        vec!["--query-json", r#"{"symptoms":"x","age":-3}"#],
        vec!["--query-json", "{not json"],
        vec!["--symptoms", "cough", "--min-weight", "1.5"],
        vec!["--symptoms", "cough", "--top-k", "0"],
        vec![],
    ] {
        let mut full = vec!["recommend", "--index", s(&b.index)];
        full.extend(&args);
        let out = run(&full);
        assert_eq!(code(&out), 1, "{args:?}: {}", stderr(&out));
        assert!(out.stdout.is_empty(), "{args:?} printed to stdout after an error");
    }
}

#[test]
fn empty_result_still_exits_0() {
    let b = bench();
    let out = run(&["recommend", "--index", s(&b.index), "--symptoms", "xylophone quokka", "--explain"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["recommendations"].as_array().unwrap().len(), 0);
    assert!(stderr(&out).contains("No recommendations."));
}

#[test]
fn recommend_reads_query_from_stdin() {
    let b = bench();
    let mut child = hirec()
        .args(["recommend", "--index", s(&b.index), "--query-file", "-", "--omit-timings"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(br#"{"symptoms":"jaundice with dark urine","age":66}"#)
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["recommendations"][0]["test_id"], "liver_panel");
    assert_eq!(v["elapsed_ms"]["root"], 0.0);
}

#[test]
fn json_mode_keeps_stdout_machine_readable() {
    let b = bench();
    let gen = run(&["gen-corpus", "--out", s(&b.root.join("k2.jsonl")), "--json"]);
    assert_eq!(json(&gen)["documents"], 15);
    let ing = run(&["ingest", "--kb", s(&b.kb), "--index", s(&b.root.join("k2.hrvx")), "--json"]);
    assert_eq!(json(&ing)["indexed"], 15);
    assert!(stderr(&ing).contains("indexed 15 documents"));
    let rec = run(&["recommend", "--index", s(&b.index), "--symptoms", "chest pain", "--json", "--explain"]);
    assert!(json(&rec)["trace"].is_array());
    assert!(stderr(&rec).contains("Recommendation report"));
    let ev = run(&["evaluate", "--index", s(&b.index), "--cases", s(&b.cases), "--json"]);
    assert_eq!(json(&ev)["cases_total"], 12);
    assert!(stderr(&ev).contains("Coverage Rate"));
}

#[test]
fn evaluate_report_matches_golden() {
    let b = bench();
    let out_path = b.root.join("report.json");
    let out = run(&["evaluate", "--index", s(&b.index), "--cases", s(&b.cases), "--out", s(&out_path)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("This run"));
    let report = fs::read_to_string(&out_path).unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/evaluate.json");
    if std::env::var("UPDATE_GOLDEN").is_ok_and(|v| v == "1") {
        fs::write(&golden, &report).unwrap();
    }
    assert_eq!(report, fs::read_to_string(&golden).unwrap());
}

#[test]
fn ablate_writes_four_rows() {
    let b = bench();
    let out_path = b.root.join("ablation.json");
    let out = run(&["ablate", "--index", s(&b.index), "--cases", s(&b.cases), "--out", s(&out_path)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0]["variant"], "full");
    let stdout = String::from_utf8_lossy(&out.stdout);
    for label in ["Full system", "w/o Memory", "w/o Department Layer", "Single Knowledge Base"] {
        assert!(stdout.contains(label), "{stdout}");
    }
}

#[test]
fn bad_case_files_exit_1() {
    let b = bench();
    let empty = b.root.join("empty.jsonl");
    fs::write(&empty, "\n").unwrap();
    let out = run(&["evaluate", "--index", s(&b.index), "--cases", s(&empty)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("EMPTY_CASES"));
    let bad = b.root.join("bad.jsonl");
    fs::write(&bad, "{\"id\":\"c1\"}\n").unwrap();
    assert_eq!(code(&run(&["ablate", "--index", s(&b.index), "--cases", s(&bad)])), 1);
}

#[test]
fn config_precedence_flags_file_env() {
    let b = bench();
    let cfg = b.root.join("hirec.toml");
    fs::write(
        &cfg,
        format!("[pipeline]\nmax_recommendations = 2\n\n[paths]\nindex = \"{}\"\n", s(&b.index)),
    )
    .unwrap();
    // The file beats the environment's (broken) index path.
    let from_file = hirec()
        .args(["--config", s(&cfg), "recommend", "--symptoms", "chest pain", "--json"])
        .env("HIREC_INDEX", "/nowhere.hrvx")
        .output()
        .unwrap();
    assert_eq!(code(&from_file), 0, "{}", stderr(&from_file));
    assert_eq!(json(&from_file)["config_used"]["max_recommendations"], 2);
    // Flags beat the file.
    let flagged = hirec()
        .args(["recommend", "--symptoms", "chest pain", "--max-recommendations", "1"])
        .env("HIREC_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(code(&flagged), 0, "{}", stderr(&flagged));
    let v = json(&flagged);
    assert_eq!(v["config_used"]["max_recommendations"], 1);
    assert!(v["recommendations"].as_array().unwrap().len() <= 1);
    // The environment beats the defaults.
    let from_env = hirec()
        .args(["recommend", "--symptoms", "chest pain"])
        .env("HIREC_INDEX", &b.index)
        .output()
        .unwrap();
    assert_eq!(code(&from_env), 0, "{}", stderr(&from_env));
    assert_eq!(json(&from_env)["config_used"]["max_recommendations"], 10);
}

#[test]
fn invalid_config_exits_1() {
    let b = bench();
    let cfg = b.root.join("bad.toml");
    fs::write(&cfg, "[pipeline]\nroot_top_k = \"many\"\n").unwrap();
    let out = run(&["--config", s(&cfg), "recommend", "--index", s(&b.index), "--symptoms", "x"]);
    assert_eq!(code(&out), 1);
    let out = hirec()
        .args(["recommend", "--index", s(&b.index), "--symptoms", "x"])
        .env("HIREC_REASONER_KIND", "oracle")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn unreachable_backend_exits_3() {
    let b = bench();
    let cfg = b.root.join("remote.toml");
    fs::write(&cfg, "[weigher]\nkind = \"remote\"\nendpoint_url = \"http://127.0.0.1:9/score\"\ntimeout_ms = 500\n").unwrap();
    let out = run(&["--config", s(&cfg), "recommend", "--index", s(&b.index), "--symptoms", "chest pain"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("REMOTE_UNAVAILABLE"));
    assert!(out.stdout.is_empty());
}

#[test]
fn usage_errors_exit_1_help_exits_0() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["recommend", "--bogus"])), 1);
    assert_eq!(code(&run(&[])), 1);
}

#[test]
fn serve_answers_and_shuts_down_on_interrupt() {
    let b = bench();
    let mut child = hirec()
        .args(["serve", "--index", s(&b.index), "--bind", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let base = loop {
        let line = lines.next().expect("server printed its address").unwrap();
        if let Some(rest) = line.strip_prefix("listening on ") {
            break rest.to_string();
        }
    };
    let client = reqwest::blocking::Client::new();
    let health: Value = client.get(format!("{base}/v1/health")).send().unwrap().json().unwrap();
    assert_eq!(health["status"], "ok");
    assert_eq!(health["documents"], 15);
    let resp = client
        .post(format!("{base}/v1/recommend"))
        .body(r#"{"symptoms":""}"#)
        .send()
        .unwrap();
    assert_eq!(resp.status(), 400);
    let body: Value = resp.json().unwrap();
    assert_eq!(body["error"]["code"], "EMPTY_SYMPTOMS");

    let pid = child.id().to_string();
    assert!(Command::new("kill").args(["-INT", &pid]).status().unwrap().success());
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));
}
