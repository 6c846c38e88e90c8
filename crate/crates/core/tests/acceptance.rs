//! Acceptance criteria, one line each. Runs without the libtest harness so
//! the verdict lines always reach the test log.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use scene_factory::actions::{decode_nav, decode_pose, encode_nav, encode_pose, ActionSpaceConfig, NavAction};
use scene_factory::balancer::{augment_negatives, build_existence_eval, default_distractors, is_no_answer, EvalSubset};
use scene_factory::lexicon::Lexicon;
use scene_factory::mock::{MockBackend, MockConfig};
use scene_factory::question::NumberStyle;
use scene_factory::refiner::{RefineAction, Refiner};
use scene_factory::rng::SplitMix64;
use scene_factory::sampler::{sample_subgraph, SamplingPolicy};
use scene_factory::synthetic::{random_graph, random_scenes, SyntheticSpec};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn mock_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

fn accuracy(report: &serde_json::Value, cat: &str) -> (u64, Option<f64>) {
    let c = &report["accuracy"][cat];
    (c["count"].as_u64().unwrap_or(0), c["accuracy"].as_f64())
}

fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn refined_em_fixture() -> Outcome {
    let start = Instant::now();
    let preds = common::fixture("em_preds.jsonl");
    let refs = common::fixture("em_refs.jsonl");
    let refined = common::run_ok(&[
        "eval-qa",
        "--protocol",
        "refined",
        "--preds",
        p(&preds),
        "--refs",
        p(&refs),
    ]);
    let strict = common::run_ok(&[
        "eval-qa",
        "--protocol",
        "strict",
        "--preds",
        p(&preds),
        "--refs",
        p(&refs),
    ]);
    let elapsed = start.elapsed();
    let rows = fs::read_to_string(&preds).unwrap().lines().count();
    check(
        rows == 13
            && refined.trim() == "EM@1: 1.0000"
            && strict.trim() == "EM@1: 0.0000"
            && elapsed < Duration::from_secs(1),
        format!(
            "{rows} rows, refined {}, strict {}, {elapsed:.2?}",
            refined.trim(),
            strict.trim()
        ),
    )
}

fn refinement_soundness() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    common::write_scenes(&scenes, &random_scenes("sound", 60, SyntheticSpec::default(), 21));
    let cfg = mock_config(
        dir.path(),
        "[mock]\nseed = 5\ncounting_error_rate = 0.3\nexistence_error_rate = 0.2\n",
    );
    let raw = dir.path().join("raw.jsonl");
    let refined = dir.path().join("refined.jsonl");
    let s = p(&scenes);
    let c = p(&cfg);
    common::run_ok(&[
        "generate",
        "--scenes",
        s,
        "--task",
        "qa",
        "--backend",
        "mock",
        "--config",
        c,
        "--out",
        p(&raw),
    ]);
    common::run_ok(&[
        "refine",
        "--scenes",
        s,
        "--input",
        p(&raw),
        "--config",
        c,
        "--out",
        p(&refined),
    ]);
    let before: serde_json::Value =
        serde_json::from_str(&common::run_ok(&["assess", "--scenes", s, "--input", p(&raw)])).unwrap();
    let after: serde_json::Value =
        serde_json::from_str(&common::run_ok(&["assess", "--scenes", s, "--input", p(&refined)])).unwrap();
    let elapsed = start.elapsed();
    let mut ok = elapsed < Duration::from_secs(10);
    let mut parts = Vec::new();
    for cat in ["counting", "existence", "non_existence"] {
        let (n0, a0) = accuracy(&before, cat);
        let (n1, a1) = accuracy(&after, cat);
        ok &= n1 > 0 && a1 == Some(1.0);
        parts.push(format!(
            "{cat} {:.3}->{:.3} (n={n0}->{n1})",
            a0.unwrap_or(f64::NAN),
            a1.unwrap_or(f64::NAN)
        ));
    }
    check(ok, format!("{}, {elapsed:.2?}", parts.join(", ")))
}

fn pre_refinement_tracks_injection() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    common::write_scenes(&scenes, &random_scenes("inj", 90, SyntheticSpec::default(), 33));
    let cfg = mock_config(dir.path(), "[mock]\nseed = 8\ncounting_error_rate = 0.2\n");
    let raw = dir.path().join("raw.jsonl");
    let s = p(&scenes);
    common::run_ok(&[
        "generate",
        "--scenes",
        s,
        "--task",
        "qa",
        "--backend",
        "mock",
        "--config",
        p(&cfg),
        "--out",
        p(&raw),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&common::run_ok(&["assess", "--scenes", s, "--input", p(&raw)])).unwrap();
    let (n, acc) = accuracy(&report, "counting");
    let acc = acc.unwrap_or(f64::NAN);
    check(
        n >= 500 && (acc - 0.80).abs() <= 0.05,
        format!("counting accuracy {acc:.3} over {n} pairs (target 0.80 +/- 0.05)"),
    )
}

/// Records mock traffic for every task, then runs the whole chain again from
/// the recording alone. Returns the emitted dataset directory.
fn replay_pipeline(work: &Path, scenes: &Path, jobs: &str) -> PathBuf {
    let store = work.join("store.jsonl");
    let cfg = mock_config(
        work,
        "[mock]\nseed = 3\ncounting_error_rate = 0.3\nexistence_error_rate = 0.2\nid_leak_rate = 0.4\n",
    );
    let (s, c) = (p(scenes), p(&cfg));
    let mut refined = Vec::new();
    for task in ["scene-caption", "object-caption", "qa", "dialogue", "planning"] {
        let rec = work.join(format!("{task}.rec.jsonl"));
        let gen = work.join(format!("{task}.gen.jsonl"));
        let out = work.join(format!("{task}.refined.jsonl"));
        let verdicts = work.join(format!("{task}.verdicts.jsonl"));
        common::run_ok(&[
            "generate",
            "--scenes",
            s,
            "--task",
            task,
            "--backend",
            "mock",
            "--record",
            p(&store),
            "--config",
            c,
            "--out",
            p(&rec),
        ]);
        common::run_ok(&[
            "refine",
            "--scenes",
            s,
            "--input",
            p(&rec),
            "--backend",
            "mock",
            "--record",
            p(&store),
            "--config",
            c,
            "--out",
            p(&out),
        ]);
        common::run_ok(&[
            "generate",
            "--scenes",
            s,
            "--task",
            task,
            "--backend",
            "replay",
            "--store",
            p(&store),
            "--jobs",
            jobs,
            "--config",
            c,
            "--out",
            p(&gen),
        ]);
        assert_eq!(
            fs::read(&rec).unwrap(),
            fs::read(&gen).unwrap(),
            "replayed {task} generation differs"
        );
        common::run_ok(&[
            "refine",
            "--scenes",
            s,
            "--input",
            p(&gen),
            "--backend",
            "replay",
            "--store",
            p(&store),
            "--jobs",
            jobs,
            "--verdicts",
            p(&verdicts),
            "--config",
            c,
            "--out",
            p(&out),
        ]);
        refined.push(fs::read_to_string(&out).unwrap());
    }
    let all = work.join("refined.jsonl");
    fs::write(&all, refined.concat()).unwrap();
    let dataset = work.join("dataset");
    common::run_ok(&[
        "emit",
        "--input",
        p(&all),
        "--shard-size",
        "50",
        "--config",
        c,
        "--out",
        p(&dataset),
    ]);
    dataset
}

fn scaffolding_sweep() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    let spec = SyntheticSpec {
        min_nodes: 10,
        max_nodes: 30,
        ..SyntheticSpec::default()
    };
    common::write_scenes(&scenes, &random_scenes("sweep", 12, spec, 4));
    let work = dir.path().join("work");
    fs::create_dir_all(&work).unwrap();
    let dataset = replay_pipeline(&work, &scenes, "2");
    let records = scene_factory::emitter::read_dataset(&dataset).unwrap();
    let mut tasks: BTreeMap<String, usize> = BTreeMap::new();
    let (mut ids, mut thoughts) = (0, 0);
    for r in &records {
        *tasks.entry(r.task.as_str().to_string()).or_default() += 1;
        for text in [&r.instruction, &r.response] {
            ids += usize::from(common::oracle_has_id(text));
            thoughts += text.matches("Thoughts:").count();
        }
    }
    for (_, bytes) in snapshot(&dataset) {
        thoughts += String::from_utf8_lossy(&bytes).matches("Thoughts:").count();
    }
    check(
        ids == 0 && thoughts == 0 && tasks.len() == 5,
        format!(
            "{} records over {tasks:?}; id matches {ids}, Thoughts fields {thoughts}",
            records.len()
        ),
    )
}

fn subgraph_sampling() -> Outcome {
    let policy = SamplingPolicy::default();
    let table: [(usize, &[f64]); 7] = [
        (15, &[0.8, 0.9]),
        (25, &[0.7, 0.8, 0.9]),
        (35, &[0.6, 0.7, 0.8, 0.9]),
        (45, &[0.6, 0.7, 0.8, 0.9]),
        (55, &[0.5, 0.6, 0.7, 0.8, 0.9]),
        (65, &[0.5, 0.6, 0.7, 0.8, 0.9]),
        (75, &[0.4, 0.5, 0.6, 0.7, 0.8, 0.9]),
    ];
    let mut bad_rates = Vec::new();
    for (n, rates) in table {
        if policy.rates_for(n) != rates {
            bad_rates.push(n);
        }
    }
    let mut rng = SplitMix64::new(77);
    let mut violations = 0;
    for i in 0..1000 {
        let n = 1 + (rng.next_u64() % 90) as usize;
        let spec = SyntheticSpec {
            min_nodes: n,
            max_nodes: n,
            ..SyntheticSpec::default()
        };
        let g = random_graph("c", spec, i);
        let rate = (1 + rng.next_u64() % 10) as f64 / 10.0;
        let sub = sample_subgraph(&g, rate, rng.next_u64());
        let kept: std::collections::BTreeSet<u32> = sub.nodes().iter().map(|x| x.id).collect();
        let closure: Vec<_> = g
            .relations()
            .iter()
            .filter(|r| kept.contains(&r.subject_id) && kept.contains(&r.object_id))
            .cloned()
            .collect();
        if sub.nodes().len() != common::oracle_preserved(rate, n) || sub.relations() != closure.as_slice() {
            violations += 1;
        }
    }
    check(
        bad_rates.is_empty() && violations == 0,
        format!("rate-list mismatches at {bad_rates:?}; {violations}/1000 graphs violate closure or size"),
    )
}

fn action_codec() -> Outcome {
    let start = Instant::now();
    let cfg = ActionSpaceConfig::default();
    let ws = cfg.workspace;
    let (hx, hy, hr) = ((ws.x_max - ws.x_min) / 640.0, (ws.y_max - ws.y_min) / 320.0, PI / 36.0);
    let mut rng = SplitMix64::new(9);
    let (mut ex, mut ey, mut er) = (0f64, 0f64, 0f64);
    for _ in 0..10_000 {
        let x = ws.x_min + (ws.x_max - ws.x_min) * rng.unit();
        let y = ws.y_min + (ws.y_max - ws.y_min) * rng.unit();
        let r = TAU * rng.unit();
        let (dx, dy, dr) = decode_pose(encode_pose(x, y, r, &cfg).unwrap(), &cfg).unwrap();
        ex = ex.max((dx - x).abs());
        ey = ey.max((dy - y).abs());
        er = er.max((dr - r).abs());
    }
    let tokens: std::collections::BTreeSet<_> = NavAction::ALL.iter().map(|a| encode_nav(*a, &cfg)).collect();
    let nav_ok = tokens.len() == 4
        && NavAction::ALL
            .iter()
            .all(|a| decode_nav(encode_nav(*a, &cfg), &cfg).ok() == Some(*a));
    let elapsed = start.elapsed();
    let tol = 1e-12;
    check(
        ex <= hx + tol && ey <= hy + tol && er <= hr + tol && nav_ok && elapsed < Duration::from_secs(1),
        format!("max error x {ex:.5}/{hx:.5}, y {ey:.5}/{hy:.5}, rot {er:.5}/{hr:.5}; nav bijective {nav_ok}; {elapsed:.2?}"),
    )
}

fn balancing() -> Outcome {
    let (scenes, records) = common::yes_corpus();
    let dir = tempfile::tempdir().unwrap();
    let scene_dir = dir.path().join("scenes");
    common::write_scenes(&scene_dir, &scenes.values().cloned().collect::<Vec<_>>());
    let input = dir.path().join("yes.jsonl");
    scene_factory::emitter::write_jsonl(&input, &records).unwrap();
    let out = dir.path().join("balanced");
    common::run_ok(&[
        "balance",
        "augment",
        "--scenes",
        p(&scene_dir),
        "--input",
        p(&input),
        "--ratio",
        "0.5",
        "--out",
        p(&out),
    ]);
    let balanced = scene_factory::emitter::read_dataset(&out).unwrap();
    let lex = Lexicon::default();
    let no = balanced.iter().filter(|r| is_no_answer(&lex, &r.response)).count();
    let frac = no as f64 / balanced.len() as f64;
    let present = balanced[records.len()..]
        .iter()
        .filter(|r| {
            let label = common::asked_label(r.user_text()).unwrap_or_default();
            label.is_empty() || common::oracle_count(&scenes[&r.scene_id], &label) > 0
        })
        .count();
    assert_eq!(
        augment_negatives(&records, &scenes, 0.5, 0).unwrap().len(),
        balanced.len()
    );

    let eval = build_existence_eval(&scenes, 50, &default_distractors(), 1).unwrap();
    let keys: std::collections::BTreeSet<_> = eval.iter().map(|q| (&q.scene_id, &q.label)).collect();
    let per: Vec<usize> = [EvalSubset::Yes, EvalSubset::No1, EvalSubset::No2]
        .iter()
        .map(|s| eval.iter().filter(|q| q.subset == *s).count())
        .collect();
    check(
        records.len() == 200 && (0.48..=0.52).contains(&frac) && present == 0 && eval.len() == 150 && keys.len() == 150 && per == [50, 50, 50],
        format!(
            "no fraction {frac:.3} over {} records, {present} negatives name present objects; eval {} questions split {per:?}",
            balanced.len(),
            eval.len()
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    let spec = SyntheticSpec {
        min_nodes: 10,
        max_nodes: 40,
        ..SyntheticSpec::default()
    };
    common::write_scenes(&scenes, &random_scenes("det", 8, spec, 12));
    let mut snaps = Vec::new();
    for (run, jobs) in [("a", "1"), ("b", "4")] {
        let work = dir.path().join(run);
        fs::create_dir_all(&work).unwrap();
        common::run_ok(&[
            "sample",
            "--scenes",
            p(&scenes),
            "--seed",
            "7",
            "--out",
            p(&work.join("sampled")),
        ]);
        replay_pipeline(&work, &scenes, jobs);
        snaps.push(snapshot(&work));
    }
    let differing: Vec<&String> = snaps[0]
        .iter()
        .filter(|(k, v)| snaps[1].get(*k) != Some(v))
        .map(|(k, _)| k)
        .collect();
    check(
        differing.is_empty() && snaps[0].len() == snaps[1].len(),
        format!(
            "{} files compared, {} differ {differing:?}",
            snaps[0].len(),
            differing.len()
        ),
    )
}

fn worked_examples() -> Outcome {
    let r = Refiner::default();
    let mock = MockBackend::new(MockConfig::default());
    let bedroom = common::load("scenes/bedroom_4chairs.json");
    let bathroom = common::load("refine/bathroom_no_mirror.json");
    let dining = common::load("refine/dining_room.json");
    let laundry = common::load("refine/laundry_bathroom.json");
    let mut failures = Vec::new();
    let mut expect = |name: &str, got: Option<String>, want: Option<&str>| {
        if got.as_deref() != want {
            failures.push(format!("{name}: {got:?}"));
        }
    };

    let v = r
        .refine(
            "How many chairs are in the room?",
            "3",
            &bedroom,
            None,
            NumberStyle::Words,
        )
        .unwrap();
    expect("qa counting", v.final_text().map(str::to_string), Some("four"));
    let v = r
        .refine(
            "Is there a mirror in the room?",
            "yes",
            &bathroom,
            None,
            NumberStyle::Words,
        )
        .unwrap();
    expect("qa existence", v.final_text().map(str::to_string), Some("no"));
    let v = r
        .refine(
            "What is the material of the bathtub?",
            "unknown",
            &bathroom,
            None,
            NumberStyle::Words,
        )
        .unwrap();
    expect(
        "qa negative",
        (v.action != RefineAction::Dropped).then(|| "kept".into()),
        None,
    );
    let backpack = "You can place your backpack on the floor, to the left of the dining table-33. As for your bag, you can place it on the floor, to the left of the bed-10.";
    let v = r
        .refine_dialogue(
            &[("Where should I put my things?".into(), backpack.into())],
            &dining,
            Some(&mock),
        )
        .unwrap();
    expect(
        "dialogue id",
        v[0].final_text().map(str::to_string),
        Some("You can place your backpack on the floor, to the left of the dining table. As for your bag, you can place it on the floor, to the left of the bed."),
    );
    let turn = (
        "How many washing machines are in the bathroom?".to_string(),
        "I see there are two washing machines in the bathroom.".to_string(),
    );
    let v = r.refine_dialogue(&[turn], &laundry, None).unwrap();
    expect(
        "dialogue counting",
        v[0].final_text().map(str::to_string),
        Some("I see there are 4 washing machines in the bathroom."),
    );
    check(
        failures.is_empty(),
        if failures.is_empty() {
            "5/5 pairs reproduce".into()
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("refined-em fixture", refined_em_fixture),
        ("refinement soundness", refinement_soundness),
        (
            "pre-refinement accuracy tracks injection",
            pre_refinement_tracks_injection,
        ),
        ("scaffolding sweep", scaffolding_sweep),
        ("subgraph sampling", subgraph_sampling),
        ("action codec round trip", action_codec),
        ("balancing", balancing),
        ("determinism", determinism),
        ("worked refinement examples", worked_examples),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(d) => println!("criterion {}: PASS {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {d}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
