mod common;

use common::{cli, run_ok};
use scene_factory::synthetic::{random_scenes, SyntheticSpec};

fn s(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eval_qa_prints_score() {
    let preds = common::fixture("em_preds.jsonl");
    let refs = common::fixture("em_refs.jsonl");
    let out = run_ok(&[
        "eval-qa",
        "--protocol",
        "refined",
        "--preds",
        s(&preds),
        "--refs",
        s(&refs),
    ]);
    assert_eq!(out.trim(), "EM@1: 1.0000");
    let out = run_ok(&[
        "eval-qa",
        "--protocol",
        "strict",
        "--preds",
        s(&preds),
        "--refs",
        s(&refs),
    ]);
    assert_eq!(out.trim(), "EM@1: 0.0000");
}

#[test]
fn usage_errors_exit_two_and_runtime_errors_one() {
    let st = cli().args(["eval-qa", "--protocol", "fuzzy"]).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    let st = cli().arg("no-such-command").output().unwrap();
    assert_eq!(st.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    common::write_scenes(dir.path(), &[common::load("scenes/bedroom_4chairs.json")]);
    let missing = dir.path().join("none.jsonl");
    let st = cli()
        .args([
            "generate",
            "--scenes",
            s(dir.path()),
            "--task",
            "qa",
            "--backend",
            "replay",
            "--store",
            s(&missing),
        ])
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stderr).contains("error:"));
}

#[test]
fn sample_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    common::write_scenes(&scenes, &random_scenes("c", 3, SyntheticSpec::default(), 4));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        run_ok(&["sample", "--scenes", s(&scenes), "--seed", "7", "--out", s(out)]);
    }
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for n in &names {
        let seed: u64 = n
            .to_str()
            .unwrap()
            .rsplit_once("~s")
            .unwrap()
            .1
            .trim_end_matches(".json")
            .parse()
            .unwrap();
        assert!((7..11).contains(&seed), "{n:?}");
        assert_eq!(std::fs::read(a.join(n)).unwrap(), std::fs::read(b.join(n)).unwrap());
    }
}

#[test]
fn actions_round_trip_through_the_cli() {
    let enc = run_ok(&["actions", "encode", "--pose", "-0.2734", "0.65", "5.5"]);
    let dec = run_ok(&["actions", "decode", enc.trim()]);
    let v: serde_json::Value = serde_json::from_str(&dec).unwrap();
    assert!((v["x"].as_f64().unwrap() + 0.2734).abs() <= 1.0 / 640.0 + 1e-9);
    assert!((v["rot"].as_f64().unwrap() - 5.5).abs() <= std::f64::consts::PI / 36.0);
    assert_eq!(
        run_ok(&["actions", "encode", "--nav", "move-forward"]).trim(),
        "<31999>"
    );
}

#[test]
fn ingest_and_balance_eval() {
    let dir = tempfile::tempdir().unwrap();
    common::write_scenes(dir.path(), &random_scenes("e", 10, SyntheticSpec::default(), 2));
    let summary: serde_json::Value = serde_json::from_str(&run_ok(&["ingest", "--scenes", s(dir.path())])).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 10);
    let eval = run_ok(&["balance", "eval", "--scenes", s(dir.path()), "--n", "20"]);
    assert_eq!(eval.lines().count(), 60);
}
