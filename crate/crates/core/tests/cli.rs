mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use vcpa::catalog::Catalog;
use vcpa::pipeline::{read_json, PipelineManifest};
use vcpa::profiles::ProfileDocument;
use vcpa::simulate::{truth_consistency, SessionTruth};

fn vcpa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vcpa"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = vcpa(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Runs every pipeline stage into `dir` under one manifest.
fn pipeline(dir: &Path) -> PipelineManifest {
    let f = common::fixture;
    let m = dir.join("manifest.json");
    let survey = dir.join("survey.json");
    ok(&["ingest", "--input", s(&f("survey.csv")), "--output", s(&survey), "--manifest", s(&m)]);
    ok(&["correlate", "--input", s(&survey), "--output", s(&dir.join("correlations.csv")), "--manifest", s(&m)]);
    ok(&["cluster", "--input", s(&survey), "--output", s(&dir.join("clusters.json")), "--k", "3", "--manifest", s(&m)]);
    ok(&[
        "profiles", "--input", s(&survey), "--output", s(&dir.join("profiles.json")),
        "--templates", s(&f("personas.json")), "--manifest", s(&m),
    ]);
    ok(&[
        "catalog", "--input", s(&f("catalog_source.json")), "--exclusions", s(&f("exclusions.json")),
        "--config", s(&f("catalog.toml")), "--output", s(&dir.join("catalog.json")), "--manifest", s(&m),
    ]);
    read_json(&m).unwrap()
}

fn output_hashes(m: &PipelineManifest) -> BTreeMap<String, String> {
    m.artifacts
        .iter()
        .filter(|(_, e)| !e.path.starts_with(".."))
        .map(|(role, e)| (role.clone(), e.sha256.clone()))
        .collect()
}

#[test]
fn full_pipeline_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = pipeline(a.path());
    let mb = pipeline(b.path());
    for name in ["survey.json", "correlations.csv", "clusters.json", "profiles.json", "catalog.json"] {
        assert!(a.path().join(name).exists(), "{name} missing");
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between runs");
    }
    assert_eq!(output_hashes(&ma), output_hashes(&mb));
    assert!(output_hashes(&ma).len() >= 5);
    let doc: ProfileDocument = read_json(&a.path().join("profiles.json")).unwrap();
    assert!(doc.get("achiever").is_some());
}

#[test]
fn tampered_input_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let survey = dir.path().join("survey.json");
    let mut text = std::fs::read_to_string(&survey).unwrap();
    text.push('\n');
    std::fs::write(&survey, text).unwrap();
    let out = vcpa(&[
        "cluster", "--input", s(&survey), "--output", s(&dir.path().join("c2.json")),
        "--manifest", s(&dir.path().join("manifest.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("survey.json"), "{err}");
    assert!(err.to_lowercase().contains("hash"), "{err}");
}

#[test]
fn simulate_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| -> Vec<Vec<u8>> {
        let p: PathBuf = dir.path().join(format!("pop-{tag}.csv"));
        let c = dir.path().join(format!("cat-{tag}.json"));
        let e = dir.path().join(format!("ex-{tag}.json"));
        ok(&["simulate", "population", "--seed", "42", "--per-cluster", "20", "--output", s(&p)]);
        ok(&["simulate", "catalog", "--seed", "42", "--output", s(&c), "--exclusions", s(&e)]);
        [p, c, e].iter().map(|f| std::fs::read(f).unwrap()).collect()
    };
    assert_eq!(run("a"), run("b"));
    let other = dir.path().join("pop-other.csv");
    ok(&["simulate", "population", "--seed", "43", "--per-cluster", "20", "--output", s(&other)]);
    assert_ne!(std::fs::read(other).unwrap(), run("c")[0]);
}

#[test]
fn usage_errors_exit_one() {
    let out = vcpa(&["ingest", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    let out = vcpa(&["nonsense"]);
    assert_eq!(out.status.code(), Some(1));
    let out = vcpa(&["cluster", "--input", "/no/such/file.json", "--output", "/tmp/x.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/file.json"));
    let out = vcpa(&["serve", "--red-threshold", "0.9", "--catalog", "/no/such/catalog.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unwritable_output_is_internal_error() {
    let dir = tempfile::tempdir().unwrap();
    // parent is a regular file, so the directory cannot be created
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "x").unwrap();
    let target = blocker.join("out.json");
    let out = vcpa(&["ingest", "--input", s(&common::fixture("survey.csv")), "--output", s(&target)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn every_subcommand_has_help() {
    for sub in [
        vec!["ingest"], vec!["correlate"], vec!["cluster"], vec!["profiles"], vec!["catalog"],
        vec!["serve"], vec!["report"], vec!["simulate", "population"], vec!["simulate", "catalog"],
        vec!["simulate", "sessions"],
    ] {
        let mut args = sub.clone();
        args.push("--help");
        let text = ok(&args);
        assert!(text.contains("Usage"), "{sub:?}");
    }
    assert!(ok(&["--version"]).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn serve_answers_over_http() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let listen = format!("127.0.0.1:{port}");
    let mut child = Command::new(env!("CARGO_BIN_EXE_vcpa"))
        .args([
            "serve", "--catalog", s(&dir.path().join("catalog.json")),
            "--profiles", s(&dir.path().join("profiles.json")),
            "--log", s(&dir.path().join("events.jsonl")), "--listen", &listen,
        ])
        .spawn()
        .unwrap();
    let store = vcpa::client::HttpStore::new(format!("http://{listen}"));
    let start = Instant::now();
    let body = loop {
        match store.document("/catalog") {
            Ok(b) => break b,
            Err(_) if start.elapsed() < Duration::from_secs(10) => std::thread::sleep(Duration::from_millis(50)),
            Err(e) => panic!("service never came up: {e}"),
        }
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(body, std::fs::read_to_string(dir.path().join("catalog.json")).unwrap());
}

#[test]
fn report_matches_simulated_truth() {
    let dataset = vcpa::pipeline::load_dataset(&common::fixture("survey.csv")).unwrap();
    let store = common::start_store(&dataset.responses);
    let dir = store.dir.path();
    let truth_path = dir.join("truth.json");
    ok(&[
        "simulate", "sessions", "--seed", "5", "--sessions", "12", "--url", &store.service.base_url(),
        "--input", s(&store.profiles_path), "--output", s(&truth_path),
    ]);
    let csv_path = dir.join("report.csv");
    let summary = ok(&[
        "report", "--input", s(&store.log_path), "--catalog", s(&store.catalog_path),
        "--profiles", s(&store.profiles_path), "--output", s(&csv_path),
    ]);
    assert!(summary.contains("sessions in log: 12"), "{summary}");

    let truth: Vec<SessionTruth> = read_json(&truth_path).unwrap();
    let profiles: ProfileDocument = read_json(&store.profiles_path).unwrap();
    let catalog: Catalog = read_json(&store.catalog_path).unwrap();
    let mut rows = csv::Reader::from_path(&csv_path).unwrap();
    let got: BTreeMap<String, (u32, u32, u32, u32)> = rows
        .records()
        .map(|r| {
            let r = r.unwrap();
            let n = |i: usize| r[i].parse::<u32>().unwrap();
            (r[0].to_string(), (n(3), n(2), n(5), n(6)))
        })
        .collect();
    for t in truth.iter().filter(|t| !t.phone.is_empty()) {
        let (c, n) = truth_consistency(t, &dataset.responses, &profiles, &catalog.apps, 0.1);
        assert_eq!(got[&t.session_id], (c, n, t.selective_notices, t.clicks), "{}", t.session_id);
    }
    assert_eq!(got.len(), truth.iter().filter(|t| !t.phone.is_empty()).count());
}
