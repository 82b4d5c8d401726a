use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use repengine::cli::ModelBundle;
use repengine::corpus::{load_corpus, read_corpus};
use repengine::embeddings::{post_vector, read_vectors};
use repengine::ensemble::Verdict;
use repengine::evaluation::EvaluationReport;
use repengine::Label;

fn repengine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repengine"))
        .args(args)
        .env_remove("REDDIT_BEARER_TOKEN")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = repengine(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn code(args: &[&str]) -> i32 {
    repengine(args).status.code().expect("exit code")
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn synth(posts: usize) -> Self {
        let ws = Workspace {
            dir: tempfile::tempdir().unwrap(),
        };
        ok(&[
            "synth",
            "--out-dir",
            &ws.p(""),
            "--posts",
            &posts.to_string(),
        ]);
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn inputs(&self) -> Vec<String> {
        [
            "--corpus",
            &self.p("corpus.jsonl"),
            "--annotations",
            &self.p("annotations.csv"),
            "--embeddings",
            &self.p("embeddings.txt"),
            "--wot",
            &self.p("wot.tsv"),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }

    fn train(&self, bundle: &str) {
        let mut args = vec!["train".to_string()];
        args.extend(self.inputs());
        args.extend(["--out-bundle".into(), self.p(bundle)]);
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    }
}

fn verdicts(bytes: &[u8]) -> Vec<Verdict> {
    String::from_utf8(bytes.to_vec())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn ingest_replays_a_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("corpus.jsonl");
    let args = [
        "ingest",
        "--subreddits",
        "netsec",
        "--tabs",
        "new",
        "--limit",
        "2",
        "--base-url",
        "https://api.test",
        "--snapshot-utc",
        "1712000000",
        "--replay",
        &fixture("netsec_transcript.json"),
    ];
    let stdout = ok(&args);
    let corpus = read_corpus(stdout.as_slice()).unwrap();
    assert_eq!(corpus.len(), 2);
    assert_eq!(corpus.authors.len(), 2);
    assert_eq!(corpus.snapshot_utc, 1_712_000_000);
    assert!(corpus.post("abc2").unwrap().url.is_none());

    let mut with_out = args.to_vec();
    let out_s = out.to_string_lossy().into_owned();
    with_out.extend(["--out", &out_s]);
    assert!(ok(&with_out).is_empty());
    assert_eq!(load_corpus(&out).unwrap(), corpus);
}

#[test]
fn ingest_failures_exit_2() {
    assert_eq!(code(&["ingest", "--subreddits", "netsec"]), 2);
    // a request the transcript cannot answer
    let args = [
        "ingest",
        "--subreddits",
        "netsec",
        "--tabs",
        "hot",
        "--base-url",
        "https://api.test",
        "--replay",
        &fixture("netsec_transcript.json"),
    ];
    assert_eq!(code(&args), 2);
}

#[test]
fn ingest_limit_zero_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "[]").unwrap();
    let out = ok(&[
        "ingest",
        "--subreddits",
        "netsec",
        "--limit",
        "0",
        "--snapshot-utc",
        "5",
        "--replay",
        &empty.to_string_lossy(),
    ]);
    let corpus = read_corpus(out.as_slice()).unwrap();
    assert!(corpus.is_empty());
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["score", "--bundle", "x.json"]), 1);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn train_failures_exit_3() {
    let ws = Workspace::synth(40);
    let mut args = vec!["train".to_string()];
    args.extend(ws.inputs());
    args[6] = ws.p("missing.txt");
    args.extend(["--out-bundle".into(), ws.p("b.json")]);
    let out = repengine(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.txt"));
    assert!(!ws.path("b.json").exists());
}

#[test]
fn train_then_score() {
    let ws = Workspace::synth(60);
    ws.train("a.json");
    ws.train("b.json");
    let a = std::fs::read(ws.path("a.json")).unwrap();
    assert_eq!(a, std::fs::read(ws.path("b.json")).unwrap());
    let bundle = ModelBundle::load(ws.path("a.json")).unwrap();
    assert_eq!(
        bundle.training.n_credible + bundle.training.n_non_credible,
        60
    );
    assert_eq!(ModelBundle::from_json(&bundle.to_json()).unwrap(), bundle);

    let score = |extra: &[&str]| {
        let mut args = vec![
            "score".to_string(),
            "--bundle".into(),
            ws.p("a.json"),
            "--corpus".into(),
            ws.p("corpus.jsonl"),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        verdicts(&ok(&args.iter().map(String::as_str).collect::<Vec<_>>()))
    };
    let base = score(&[]);
    assert_eq!(base.len(), 60);
    for v in &base {
        assert!((0.0..=1.0).contains(&v.pf) && !v.no_signal);
        assert_eq!(v.s_c, v.pe);
        assert_eq!(v.label, Label::from_credible(v.pf > bundle.model.threshold));
    }

    let strict = score(&["--threshold", "0.99"]);
    for (x, y) in base.iter().zip(&strict) {
        assert_eq!(x.pf, y.pf);
        assert_eq!(y.label, Label::from_credible(y.pf > 0.99));
    }
    assert!(base.iter().zip(&strict).any(|(x, y)| x.label != y.label));

    let out = ws.p("verdicts.jsonl");
    ok(&[
        "score",
        "--bundle",
        &ws.p("a.json"),
        "--corpus",
        &ws.p("corpus.jsonl"),
        "--out",
        &out,
    ]);
    assert_eq!(verdicts(&std::fs::read(&out).unwrap()), base);
}

#[test]
fn score_failures_exit_4() {
    let ws = Workspace::synth(30);
    std::fs::write(ws.path("bad.json"), "{}").unwrap();
    let args = [
        "score",
        "--bundle",
        &ws.p("bad.json"),
        "--corpus",
        &ws.p("corpus.jsonl"),
    ];
    assert_eq!(code(&args), 4);
    ws.train("b.json");
    let args = [
        "score",
        "--bundle",
        &ws.p("b.json"),
        "--corpus",
        &ws.p("nope.jsonl"),
    ];
    assert_eq!(code(&args), 4);
    let args = [
        "score",
        "--bundle",
        &ws.p("b.json"),
        "--corpus",
        &ws.p("corpus.jsonl"),
        "--threshold",
        "1.5",
    ];
    assert_eq!(code(&args), 4);
}

#[test]
fn score_empty_corpus() {
    let ws = Workspace::synth(30);
    ws.train("b.json");
    std::fs::write(
        ws.path("empty.jsonl"),
        "{\"kind\":\"meta\",\"snapshot_utc\":1700000000}\n",
    )
    .unwrap();
    let out = ok(&[
        "score",
        "--bundle",
        &ws.p("b.json"),
        "--corpus",
        &ws.p("empty.jsonl"),
    ]);
    assert!(out.is_empty());
}

#[test]
fn evaluate_reports_three_columns() {
    let ws = Workspace::synth(80);
    let mut args = vec!["evaluate".to_string()];
    args.extend(ws.inputs());
    args.extend([
        "--k".into(),
        "2".into(),
        "--verdicts-out".into(),
        ws.p("held.jsonl"),
    ]);
    let out = ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let report: EvaluationReport = serde_json::from_slice(&out).unwrap();
    assert_eq!(report.folds.len(), 2);
    for col in [&report.ensemble, &report.embedding, &report.svm] {
        assert_eq!(col.confusion.total(), 80);
    }
    let json: serde_json::Value = serde_json::from_slice(&out).unwrap();
    assert!(json["embedding"]["confusion"]["fn"].is_u64());
    let held = std::fs::read_to_string(ws.path("held.jsonl")).unwrap();
    assert_eq!(held.lines().count(), 80);

    args.push("--balanced".into());
    let out = ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let balanced: EvaluationReport = serde_json::from_slice(&out).unwrap();
    let minority = report.n_credible.min(report.n_non_credible);
    assert_eq!(balanced.n_examples, 2 * minority);
    assert_eq!(balanced.n_credible, balanced.n_non_credible);
}

#[test]
fn export_vectors_round_trip() {
    let ws = Workspace::synth(25);
    ws.train("b.json");
    let out = ok(&[
        "export-vectors",
        "--bundle",
        &ws.p("b.json"),
        "--corpus",
        &ws.p("corpus.jsonl"),
        "--annotations",
        &ws.p("annotations.csv"),
    ]);
    let rows = read_vectors(out.as_slice()).unwrap();
    let bundle = ModelBundle::load(ws.path("b.json")).unwrap();
    let parts = bundle.scoring_parts().unwrap();
    let corpus = load_corpus(ws.path("corpus.jsonl")).unwrap();
    assert_eq!(rows.len(), corpus.len());
    for (row, post) in rows.iter().zip(&corpus.posts) {
        let e = post_vector(post, &parts.lexicon, &parts.store, parts.vectors);
        assert_eq!(row.post_id, post.id);
        assert_eq!(row.vector, e.vector);
        assert!(row.label.is_some());
    }
}
