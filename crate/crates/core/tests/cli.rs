mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use common::civic_path;
use concept_induction::model::{load_session_file, validate_session, TraceEvent};
use tempfile::TempDir;

fn conind(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conind")).args(args).env_remove("CONIND_CONFIG").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "exit {:?}\nstdout: {}\nstderr: {}", o.status.code(), stdout(&o), String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn script_arg() -> String {
    format!("scripted:{}", civic_path("civic_script.json").display())
}

/// Ingests the civic CSV into `dir` and returns the session path.
fn ingest(dir: &TempDir, extra: &[&str]) -> PathBuf {
    let out = dir.path().join("civic.session.json");
    let csv = civic_path("civic.csv");
    let mut args = vec!["ingest", p(&csv), "--text-col", "text", "--id-col", "id", "--out", p(&out)];
    args.extend_from_slice(&["--max-concepts", "4", "--min-cluster-size", "4", "--rng-seed", "1"]);
    args.extend_from_slice(extra);
    ok(conind(&args));
    out
}

fn induce(session: &Path, loops: &str) -> String {
    ok(conind(&["induce", p(session), "--backend", &script_arg(), "--loops", loops]))
}

#[test]
fn csv_and_jsonl_ingest_to_the_same_documents() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let report = ok(conind(&["ingest", p(&civic_path("civic.csv")), "--text-col", "text", "--id-col", "id", "-o", p(&a)]));
    assert!(report.contains("accepted 12 rows, rejected 0"), "{report}");
    ok(conind(&["ingest", p(&civic_path("civic.jsonl")), "--text-col", "text", "--id-col", "id", "-o", p(&b)]));
    let (a, b) = (load_session_file(&a).unwrap(), load_session_file(&b).unwrap());
    assert_eq!(a.documents, b.documents);
}

#[test]
fn missing_text_col_is_a_usage_error() {
    let o = conind(&["ingest", p(&civic_path("civic.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = conind(&["ingest", p(&civic_path("civic.csv")), "--text-col", "body"]);
    assert_eq!(o.status.code(), Some(3), "unknown column is a data error");
}

#[test]
fn induce_two_loops_then_export_and_validate() {
    let dir = TempDir::new().unwrap();
    let session = ingest(&dir, &[]);
    let table = induce(&session, "2");
    assert!(table.contains("outlier fraction"), "{table}");
    let s = load_session_file(&session).unwrap();
    let gens: std::collections::BTreeSet<u32> = s.concepts.iter().map(|c| c.generation).collect();
    assert_eq!(gens.into_iter().collect::<Vec<_>>(), vec![0, 1]);
    assert!(validate_session(&s).is_empty());
    assert_eq!(ok(conind(&["validate", p(&session)])).trim(), "ok");

    let matrix = ok(conind(&["export", p(&session), "--what", "matrix"]));
    let mut rows = csv::Reader::from_reader(matrix.as_bytes());
    let width = rows.headers().unwrap().len();
    let n_active = s.active_concepts().count();
    assert_eq!(width, 1 + 2 * n_active);
    assert_eq!(rows.records().count(), s.documents.len());

    let concepts = ok(conind(&["export", p(&session), "--what", "concepts"]));
    assert!(concepts.contains("Transit Costs"), "{concepts}");

    let trace_path = dir.path().join("trace.json");
    ok(conind(&["export", p(&session), "--what", "trace", "--out", p(&trace_path)]));
    let text = std::fs::read_to_string(&trace_path).unwrap();
    assert!(text.contains("\"kind\""));

    let usage = ok(conind(&["usage", p(&session)]));
    assert!(usage.contains("scoring"), "{usage}");
    let usage_json: serde_json::Value = serde_json::from_str(&ok(conind(&["usage", p(&session), "--json"]))).unwrap();
    assert!(usage_json["totals"]["calls"].as_u64().unwrap() > 0);
}

#[test]
fn seed_term_reaches_prompts() {
    let dir = TempDir::new().unwrap();
    let session = ingest(&dir, &["--seed-term", "public transit"]);
    induce(&session, "1");
    let s = load_session_file(&session).unwrap();
    let prompts: Vec<&str> = s
        .trace
        .iter()
        .filter_map(|e| match &e.event {
            TraceEvent::LlmCall(c) if c.template_id.is_some() => Some(c.prompt.as_str()),
            _ => None,
        })
        .collect();
    assert!(!prompts.is_empty());
    assert!(prompts.iter().any(|p| p.contains("related to public transit")));
}

#[test]
fn export_without_concepts_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let session = ingest(&dir, &[]);
    for what in ["matrix", "concepts"] {
        let o = conind(&["export", p(&session), "--what", what]);
        assert_eq!(o.status.code(), Some(3));
        assert!(String::from_utf8_lossy(&o.stderr).contains("no concepts"));
    }
}

#[test]
fn threshold_rescore_needs_no_backend() {
    let dir = TempDir::new().unwrap();
    let session = ingest(&dir, &[]);
    induce(&session, "1");
    ok(conind(&["score", p(&session), "--threshold", "1.0"]));
    let s = load_session_file(&session).unwrap();
    assert_eq!(s.config.score_threshold, 1.0);
    assert!(s.matrix.columns.values().flatten().all(|e| e.label == (e.score >= 1.0)));
    assert_eq!(conind(&["score", p(&session), "--threshold", "1.5"]).status.code(), Some(3));
}

#[test]
fn eval_metrics_and_kappa() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    // Table (tp 3, fp 1, fn 2, tn 4).
    std::fs::write(&a, "1\n1\n1\n1\n0\n0\n0\n0\n0\n0\n").unwrap();
    std::fs::write(&b, "1\n1\n1\n0\n1\n1\n0\n0\n0\n0\n").unwrap();
    let m = ok(conind(&["eval", "metrics", p(&a), p(&b)]));
    assert!(m.contains("accuracy 0.7"), "{m}");
    let k = ok(conind(&["eval", "kappa", p(&a), p(&b)]));
    let kappa: f64 = k.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((kappa - 0.4).abs() < 1e-12, "{k}");
    std::fs::write(&b, "1\n0\n").unwrap();
    assert_eq!(conind(&["eval", "kappa", p(&a), p(&b)]).status.code(), Some(3));
}

#[test]
fn eval_coverage_with_scripted_matcher() {
    let dir = TempDir::new().unwrap();
    let gt = dir.path().join("gt.json");
    let gen = dir.path().join("gen.json");
    let script = dir.path().join("script.json");
    std::fs::write(&gt, r#"["Transit", "Parks", "Libraries", "Housing"]"#).unwrap();
    std::fs::write(&gen, r#"["Bus fares", "Green space", "Reading rooms"]"#).unwrap();
    let reply = serde_json::json!({"concept_matches": [
        {"concept_id": "1", "item_id": "1", "rationale": "r"},
        {"concept_id": "2", "item_id": "2", "rationale": "r"},
        {"concept_id": "3", "item_id": "3", "rationale": "r"},
        {"concept_id": "4", "item_id": "NONE", "rationale": "r"}
    ]});
    let file = serde_json::json!({"fallback": {"coverage_match": [reply.to_string()]}});
    std::fs::write(&script, file.to_string()).unwrap();
    let backend = format!("scripted:{}", script.display());
    let out = ok(conind(&["eval", "coverage", "--ground-truth", p(&gt), "--generated", p(&gen), "--backend", &backend]));
    assert!(out.contains("coverage 0.75 (3/4)"), "{out}");
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[session]\nscore_threshold = 3.0\n").unwrap();
    let o = conind(&["--config", p(&cfg), "config", "print"]);
    assert_eq!(o.status.code(), Some(2));
    let printed = ok(conind(&["--config", p(&civic_path("civic.toml")), "config", "print"]));
    assert!(printed.contains("max_concepts = 4"), "{printed}");
}

#[test]
fn live_backend_without_models_fails_before_any_call() {
    let dir = TempDir::new().unwrap();
    let session = ingest(&dir, &[]);
    let o = conind(&["induce", p(&session)]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(load_session_file(&session).unwrap().concepts.is_empty());
}

#[test]
fn serve_answers_health() {
    let dir = TempDir::new().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_conind"))
        .args(["serve", "--port", "0", "--host", "127.0.0.1", "--session-dir", p(dir.path()), "--backend", &script_arg()])
        .env_remove("CONIND_CONFIG")
        .stderr(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    while !line.contains("listening on") {
        line.clear();
        assert!(stderr.read_line(&mut line).unwrap() > 0, "server exited early");
    }
    let addr = line.trim().rsplit("http://").next().unwrap().to_string();
    let mut stream = std::net::TcpStream::connect(&addr).unwrap();
    write!(stream, "GET /api/health HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    stream.read_to_string(&mut resp).unwrap();
    child.kill().ok();
    child.wait().ok();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"status\":\"ok\""), "{resp}");
}
