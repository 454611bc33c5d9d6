//! End-to-end tests of the `qtraits` binary on small synthetic data.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qtraits"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const FAST: [&str; 10] = [
    "--max-rounds",
    "5",
    "--models",
    "lr,dt",
    "--encoding",
    "question-only",
    "--n-w",
    "50",
    "--k-folds",
    "3",
];

fn simulate(tmp: &TempDir) -> PathBuf {
    let dir = tmp.path().join("data");
    ok(&[
        "simulate",
        "--out",
        s(&dir),
        "--planted",
        "2",
        "--n-items",
        "40",
        "--n-students",
        "60",
        "--answers-per-item",
        "20",
        "--seed",
        "4",
    ]);
    dir
}

fn pipeline(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let (inter, quest) = (data.join("interactions.csv"), data.join("questions.jsonl"));
    let mut args = vec![
        "pipeline",
        "--interactions",
        s(&inter),
        "--questions",
        s(&quest),
        "--out",
        s(out),
        "--seed",
        "2",
    ];
    args.extend(FAST);
    args.extend(extra);
    run(&args)
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn simulate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let a = simulate(&tmp);
    let b = tmp.path().join("again");
    ok(&[
        "simulate",
        "--out",
        s(&b),
        "--planted",
        "2",
        "--n-items",
        "40",
        "--n-students",
        "60",
        "--answers-per-item",
        "20",
        "--seed",
        "4",
    ]);
    for f in [
        "interactions.csv",
        "questions.jsonl",
        "truth.json",
        "synth_config.json",
    ] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    let truth: serde_json::Value = serde_json::from_slice(&read(&a.join("truth.json"))).unwrap();
    assert_eq!(truth["items"].as_object().unwrap().len(), 40);
    assert_eq!(truth["students"].as_object().unwrap().len(), 60);
}

#[test]
fn stages_compose_to_the_pipeline() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(&tmp);
    let run_dir = tmp.path().join("run");
    let out = pipeline(&data, &run_dir, &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let st = tmp.path().join("staged");
    let q = data.join("questions.jsonl");
    let cfg_flags = |mut v: Vec<String>| {
        v.extend(["--seed", "2"].iter().map(|x| x.to_string()));
        v.extend(FAST.iter().map(|x| x.to_string()));
        v
    };
    let go = |args: Vec<String>| {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        ok(&refs);
    };
    let p = |rel: &str| st.join(rel).to_str().unwrap().to_string();
    go(vec![
        "filter".into(),
        "--interactions".into(),
        s(&data.join("interactions.csv")).into(),
        "--out".into(),
        p("filtered.csv"),
    ]);
    go(cfg_flags(vec![
        "split".into(),
        "--interactions".into(),
        p("filtered.csv"),
        "--questions".into(),
        s(&q).into(),
        "--out".into(),
        p(""),
    ]));
    go(cfg_flags(vec![
        "calibrate".into(),
        "--interactions".into(),
        p("ds_gte.csv"),
        "--out".into(),
        p("calibration.json"),
    ]));
    for target in ["difficulty", "discrimination"] {
        go(cfg_flags(vec![
            "select-model".into(),
            "--questions".into(),
            s(&q).into(),
            "--calibration".into(),
            p("calibration.json"),
            "--split".into(),
            p("split.json"),
            "--target".into(),
            target.into(),
            "--out".into(),
            p(&format!("{target}/grid.csv")),
        ]));
        go(cfg_flags(vec![
            "train".into(),
            "--questions".into(),
            s(&q).into(),
            "--calibration".into(),
            p("calibration.json"),
            "--split".into(),
            p("split.json"),
            "--target".into(),
            target.into(),
            "--grid".into(),
            p(&format!("{target}/grid.csv")),
            "--out".into(),
            p(target),
        ]));
    }
    go(cfg_flags(vec![
        "estimate".into(),
        "--questions".into(),
        s(&q).into(),
        "--split".into(),
        p("split.json"),
        "--difficulty-model".into(),
        p("difficulty"),
        "--discrimination-model".into(),
        p("discrimination"),
        "--out".into(),
        p("estimated_traits.json"),
    ]));
    go(cfg_flags(vec![
        "predict".into(),
        "--interactions".into(),
        p("ds_val.csv"),
        "--split".into(),
        p("split.json"),
        "--calibration".into(),
        p("calibration.json"),
        "--estimated".into(),
        p("estimated_traits.json"),
        "--experiment".into(),
        "mixed".into(),
        "--out".into(),
        p("traces/mixed_text.csv"),
    ]));
    go(cfg_flags(vec![
        "predict".into(),
        "--interactions".into(),
        p("ds_val.csv"),
        "--split".into(),
        p("split.json"),
        "--calibration".into(),
        p("calibration.json"),
        "--majority-from".into(),
        p("ds_gte.csv"),
        "--out".into(),
        p("traces/test_only_majority.csv"),
    ]));
    go(cfg_flags(vec![
        "report".into(),
        "--estimated".into(),
        p("estimated_traits.json"),
        "--calibration".into(),
        p("calibration.json"),
        "--out".into(),
        p("regression_metrics.json"),
    ]));

    for f in [
        "ds_gte.csv",
        "ds_val.csv",
        "split.json",
        "calibration.json",
        "difficulty/grid.csv",
        "difficulty/model.json",
        "difficulty/vocabulary.json",
        "discrimination/grid.csv",
        "discrimination/model.json",
        "estimated_traits.json",
        "traces/mixed_text.csv",
        "traces/test_only_majority.csv",
        "regression_metrics.json",
    ] {
        assert_eq!(read(&run_dir.join(f)), read(&st.join(f)), "{f}");
    }
    assert_eq!(
        read(&run_dir.join("interactions_filtered.csv")),
        read(&st.join("filtered.csv"))
    );

    let rep = ok(&["report", "--trace", &p("traces/mixed_text.csv")]);
    let from_cli: serde_json::Value = serde_json::from_slice(&rep.stdout).unwrap();
    let report: serde_json::Value =
        serde_json::from_slice(&read(&run_dir.join("report.json"))).unwrap();
    assert_eq!(from_cli, report["performance"]["mixed"]["text"]);
}

#[test]
fn threshold_changes_only_the_prediction_stage() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(&tmp);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(pipeline(&data, &a, &["--threshold", "0.5"])
        .status
        .success());
    assert!(pipeline(&data, &b, &["--threshold", "0.9"])
        .status
        .success());
    assert_eq!(
        read(&a.join("calibration.json")),
        read(&b.join("calibration.json"))
    );
    assert_eq!(
        read(&a.join("estimated_traits.json")),
        read(&b.join("estimated_traits.json"))
    );
    let report = |d: &Path| -> serde_json::Value {
        serde_json::from_slice(&read(&d.join("report.json"))).unwrap()
    };
    assert_ne!(report(&a)["performance"], report(&b)["performance"]);
}

#[test]
fn config_file_with_flag_overrides() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(&tmp);
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"interactions": {:?}, "questions": {:?}, "threshold": 0.7, "k_folds": 4}}"#,
            s(&data.join("interactions.csv")),
            s(&data.join("questions.jsonl"))
        ),
    )
    .unwrap();
    let out = tmp.path().join("run");
    let mut args = vec![
        "pipeline",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--threshold",
        "0.6",
    ];
    args.extend([
        "--max-rounds",
        "5",
        "--models",
        "lr",
        "--n-w",
        "30",
        "--encoding",
        "question-full",
    ]);
    ok(&args);
    let snap: serde_json::Value = serde_json::from_slice(&read(&out.join("config.json"))).unwrap();
    assert_eq!(snap["threshold"], 0.6);
    assert_eq!(snap["k_folds"], 4);
    assert_eq!(snap["n_w"], 30);
    assert_eq!(snap["encoding"], "question_full");
}

#[test]
fn exit_codes_and_cleanup() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(&tmp);

    // Usage errors.
    assert_eq!(run(&["calibrate", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        run(&["pipeline", "--threshold", "2"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let busy = tmp.path().join("busy");
    fs::create_dir(&busy).unwrap();
    fs::write(busy.join("x"), "").unwrap();
    assert_eq!(pipeline(&data, &busy, &[]).status.code(), Some(1));

    // Data errors; the partial run directory is removed.
    let bad = tmp.path().join("bad.csv");
    fs::write(
        &bad,
        "student_id,item_id,correct,timestamp\ns1,unknown,1,0\n",
    )
    .unwrap();
    let out = tmp.path().join("failed");
    let res = run(&[
        "pipeline",
        "--interactions",
        s(&bad),
        "--questions",
        s(&data.join("questions.jsonl")),
        "--out",
        s(&out),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());

    fs::write(&bad, "student_id,item_id,correct,timestamp\ns1,q1,yes,0\n").unwrap();
    let cal = tmp.path().join("cal.json");
    assert_eq!(
        run(&["calibrate", "--interactions", s(&bad), "--out", s(&cal)])
            .status
            .code(),
        Some(2)
    );
    assert!(!cal.exists());
}
