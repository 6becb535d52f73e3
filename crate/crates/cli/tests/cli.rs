use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dcarec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcarec"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = dcarec(args);
    assert!(
        out.status.success(),
        "dcarec {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/ten_sessions.csv")
}

#[test]
fn prepare_writes_a_loadable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("prepared");
    let stdout = ok(&["prepare", "--input", s(&fixture()), "--out", s(&out)]);
    assert!(stdout.contains("3 items, 2 categories"), "{stdout}");
    assert!(stdout.contains("4/2/2"), "{stdout}");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["train"]["instances"], 8);
    for f in ["items.tsv", "categories.tsv", "train.tsv", "validation.tsv", "test.tsv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn synth_train_evaluate_rerank_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&[
        "synth", "--out", s(&data), "--items", "40", "--categories", "4", "--sessions", "300",
        "--seed", "3",
    ]);
    assert!(data.join("raw_log.tsv").is_file());

    let run = dir.path().join("run");
    ok(&[
        "train", "--data", s(&data), "--out", s(&run), "--lambda", "0.5", "--attention",
        "category-aware", "--embedding-dim", "8", "--hidden-dim", "8", "--epochs", "2",
    ]);
    let log = fs::read_to_string(run.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);

    let eval = dir.path().join("eval");
    let scores = dir.path().join("scores.tsv");
    let table = ok(&[
        "evaluate",
        "--data",
        s(&data),
        "--checkpoint",
        s(&run.join("checkpoint.json")),
        "--out",
        s(&eval),
        "--cutoffs",
        "5,10",
        "--scores-out",
        s(&scores),
    ]);
    assert!(table.contains("HR") && table.contains("@10"));
    assert!(eval.join("report.json").is_file());

    let recs = dir.path().join("recs.tsv");
    let stdout = ok(&[
        "rerank", "--scores", s(&scores), "--data", s(&data), "--out", s(&recs), "--pool", "20",
        "-n", "5",
    ]);
    assert!(stdout.starts_with("re-ranked"));
    let rows = fs::read_to_string(&recs).unwrap();
    let score_rows = fs::read_to_string(&scores).unwrap().lines().count() - 1;
    assert_eq!(rows.lines().count() - 1, 5 * score_rows);

    let rendered = ok(&["report", s(&eval)]);
    assert!(rendered.contains("accuracy") && rendered.contains('*'));
}

#[test]
fn run_and_sweep_accept_overrides_and_seed_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(
        &cfg,
        "name = \"cli\"\nvariants = [\"baseline\", \"dl\"]\ncutoffs = [5, 10]\n\
         synthetic.item_count = 40\nsynthetic.category_count = 4\nsynthetic.session_count = 300\n\
         model.embedding_dim = 8\nmodel.hidden_dim = 8\nloss.epochs = 3\nmmr.pool_size = 20\n",
    )
    .unwrap();
    let out = dir.path().join("ablation");
    let status = Command::new(env!("CARGO_BIN_EXE_dcarec"))
        .args(["run", "--config", s(&cfg), "--out", s(&out), "--set", "loss.epochs=1"])
        .env("SEED", "42")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let stdout = String::from_utf8(status.stdout).unwrap();
    assert!(stdout.contains("+DL vs base"), "{stdout}");
    let written = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(written.contains("seed = 42"), "{written}");
    assert!(written.contains("loss.epochs = 1"), "{written}");

    let sweep_dir = dir.path().join("sweep");
    let stdout = ok(&[
        "sweep", "--config", s(&cfg), "--out", s(&sweep_dir), "--set", "sweep.lambdas=[0.0, 1.0]",
        "--set", "loss.epochs=1",
    ]);
    assert!(stdout.contains("Spearman"), "{stdout}");
    assert!(sweep_dir.join("sweep.json").is_file());
}

#[test]
fn failures_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec!["report".into(), s(dir.path()).into()],
        vec![
            "prepare".into(),
            "--input".into(),
            s(&dir.path().join("missing.csv")).into(),
            "--out".into(),
            s(&dir.path().join("x")).into(),
        ],
        vec![
            "run".into(),
            "--out".into(),
            s(&dir.path().join("r")).into(),
            "--set".into(),
            "variants=[]".into(),
        ],
        vec![
            "run".into(),
            "--out".into(),
            s(&dir.path().join("r")).into(),
            "--set".into(),
            "model.depth=3".into(),
        ],
    ];
    for args in cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = dcarec(&args);
        assert!(!out.status.success(), "{args:?} succeeded");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.lines().any(|l| l.starts_with("error: ")), "{args:?}: {stderr}");
    }
}
