use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_tunekg");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../fixtures/{name}"))
}

fn tunekg(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn ingest_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("kg.jsonl");
    let trace = fixture("favorable.trace.jsonl");
    let o = tunekg(&["ingest", "--trace", p(&trace), "--store", p(&store)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "60 queries, 5 arms");
    assert!(store.is_file());
}

#[test]
fn ingest_missing_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = tunekg(&[
        "ingest",
        "--trace",
        p(&dir.path().join("absent.jsonl")),
        "--store",
        p(&dir.path().join("kg.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ingest_bad_plan_names_the_query() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("favorable.trace.jsonl")).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let i = lines
        .iter()
        .position(|l| l.contains("\"query_id\":\"q007\""))
        .unwrap();
    let at = lines[i].find("\"cost\":").unwrap() + "\"cost\":".len();
    lines[i].insert(at, '-');
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, lines.join("\n")).unwrap();
    let o = tunekg(&[
        "ingest",
        "--trace",
        p(&bad),
        "--store",
        p(&dir.path().join("kg.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("q007"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "batch_size = 20\nlearning_rat = 0.1\n").unwrap();
    let trace = fixture("favorable.trace.jsonl");
    let o = tunekg(&[
        "run",
        "--trace",
        p(&trace),
        "--config",
        p(&cfg),
        "--out",
        p(&dir.path().join("run")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("learning_rat"));
}

#[test]
fn print_config_round_trips_through_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = tunekg(&["run", "--print-config", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("seed = 7"));
    let cfg = dir.path().join("dump.conf");
    std::fs::write(&cfg, &text).unwrap();
    let again = tunekg(&["run", "--print-config", "--config", p(&cfg)]);
    assert_eq!(stdout(&again), text);
}

#[test]
fn run_then_report_reconstructs_the_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let trace = fixture("favorable.trace.jsonl");
    let o = tunekg(&[
        "run",
        "--trace",
        p(&trace),
        "--out",
        p(&out),
        "--seed",
        "42",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in [
        "config.txt",
        "curve.tsv",
        "summary.json",
        "decisions.jsonl",
        "checkpoint.json",
        "triples.tsv",
        "store.jsonl",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let base = summary["baseline_total_ms"].as_f64().unwrap();
    let learned = summary["learned_total_ms"].as_f64().unwrap();
    assert!(learned < base, "learned {learned} vs baseline {base}");

    let r = tunekg(&["report", "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    let original = std::fs::read(out.join("curve.tsv")).unwrap();
    let rebuilt = std::fs::read(out.join("report/curve.tsv")).unwrap();
    assert_eq!(original, rebuilt);
    let header = String::from_utf8(rebuilt).unwrap();
    assert_eq!(header.lines().next().unwrap().split('\t').count(), 3);
}

#[test]
fn report_of_baseline_only_run_has_one_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let trace = fixture("favorable.trace.jsonl");
    let o = tunekg(&[
        "run",
        "--trace",
        p(&trace),
        "--out",
        p(&out),
        "--baseline-only",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = tunekg(&["report", "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    let tsv = std::fs::read_to_string(out.join("report/curve.tsv")).unwrap();
    assert!(tsv.lines().all(|l| l.split('\t').count() == 2));
    assert_eq!(tsv.lines().count(), 101);
}

#[test]
fn report_of_empty_dir_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = tunekg(&["report", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_passes_and_counts_injected_failures() {
    let o = tunekg(&["check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(
        stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(),
        4
    );

    let f = tunekg(&["check", "--inject-fault", "gradient"]);
    assert_eq!(f.status.code(), Some(1));
    let failed: Vec<String> = stdout(&f)
        .lines()
        .filter(|l| l.starts_with("FAIL"))
        .map(str::to_string)
        .collect();
    assert_eq!(failed.len(), 1);
    assert!(failed[0].starts_with("FAIL gradient check"));
}

#[test]
fn generate_matches_packaged_fixtures() {
    for name in ["favorable", "adversarial", "unseen_arm"] {
        let o = tunekg(&["generate", "--fixture", name]);
        assert_eq!(o.status.code(), Some(0));
        let packaged = std::fs::read(fixture(&format!("{name}.trace.jsonl"))).unwrap();
        assert_eq!(o.stdout, packaged, "{name}");
    }
    assert_eq!(
        tunekg(&["generate", "--fixture", "nope"]).status.code(),
        Some(1)
    );
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    assert_eq!(tunekg(&[]).status.code(), Some(1));
    assert_eq!(tunekg(&["run"]).status.code(), Some(1));
    assert_eq!(tunekg(&["--help"]).status.code(), Some(0));
}
