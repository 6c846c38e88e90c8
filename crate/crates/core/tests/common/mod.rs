#![allow(dead_code)]

use std::path::PathBuf;

use scene_factory::scene_graph::{load_scene_graph, GraphFormat, SceneGraph};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

pub fn load(rel: &str) -> SceneGraph {
    load_scene_graph(&fixture(rel), GraphFormat::CanonicalJson).expect("fixture graph loads")
}

/// Preserved node count computed in tenths with integer arithmetic, for rates
/// that are multiples of 0.1.
pub fn oracle_preserved(rate: f64, n: usize) -> usize {
    let tenths = (rate * 10.0).round() as usize;
    (tenths * n / 10).clamp(1, n.max(1))
}

/// Label count by a straight scan that does not go through the graph API.
pub fn oracle_count(g: &SceneGraph, singular: &str) -> usize {
    g.nodes()
        .iter()
        .filter(|n| {
            let l = n.label.to_lowercase();
            l == singular || l == format!("{singular}s") || l == format!("{singular}es")
        })
        .count()
}

/// Count stated in an answer, read independently of the library parser.
pub fn oracle_stated_count(answer: &str) -> Option<u64> {
    const WORDS: [&str; 11] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    ];
    for raw in answer.split_whitespace() {
        let w: String = raw
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        if let Ok(n) = w.parse::<u64>() {
            return Some(n);
        }
        if let Some(i) = WORDS.iter().position(|x| *x == w) {
            return Some(i as u64);
        }
    }
    None
}

/// `label-digits` tokens, scanned by hand.
pub fn oracle_has_id(text: &str) -> bool {
    let b = text.as_bytes();
    for i in 1..b.len() {
        if b[i] == b'-' && b[i - 1].is_ascii_alphabetic() && i + 1 < b.len() && b[i + 1].is_ascii_digit() {
            let mut j = i + 1;
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            if j == b.len() || !b[j].is_ascii_alphanumeric() {
                return true;
            }
        }
    }
    false
}

/// Twenty synthetic scenes with ten "yes" existence records each.
pub fn yes_corpus() -> (
    scene_factory::scene_graph::SceneSet,
    Vec<scene_factory::emitter::GenRecord>,
) {
    use scene_factory::balancer::existence_question;
    use scene_factory::emitter::{make_record, RecordMeta, RecordTask};
    use scene_factory::synthetic::{random_scenes, SyntheticSpec};

    let spec = SyntheticSpec {
        min_nodes: 12,
        max_nodes: 30,
        ..SyntheticSpec::default()
    };
    let graphs = random_scenes("yes", 20, spec, 99);
    let mut records = Vec::new();
    for g in &graphs {
        let mut labels: Vec<String> = g.nodes().iter().map(|n| n.label.clone()).collect();
        labels.sort();
        labels.dedup();
        for i in 0..10 {
            let label = &labels[i % labels.len()];
            let q = existence_question(label);
            let a = format!(
                "Yes, there is {} {label} in the room.",
                scene_factory::scene_graph::indefinite_article(label)
            );
            records.push(make_record(RecordTask::Qa, g.scene_id(), &q, &a, RecordMeta::default()).unwrap());
        }
    }
    (scene_factory::scene_graph::index_scenes(graphs), records)
}

/// Noun of an "Is there a/an X in the room?" question.
pub fn asked_label(question: &str) -> Option<String> {
    let rest = question.trim().strip_prefix("Is there ")?;
    let rest = rest.strip_prefix("an ").or_else(|| rest.strip_prefix("a "))?;
    Some(rest.strip_suffix(" in the room?")?.to_string())
}

/// Writes each graph to `{dir}/{scene_id}.json`.
pub fn write_scenes(dir: &std::path::Path, graphs: &[SceneGraph]) {
    std::fs::create_dir_all(dir).unwrap();
    for g in graphs {
        std::fs::write(dir.join(format!("{}.json", g.scene_id())), g.to_json_string()).unwrap();
    }
}

pub fn cli() -> std::process::Command {
    let mut c = std::process::Command::new(env!("CARGO_BIN_EXE_scene-factory"));
    c.env("RUST_LOG", "warn");
    c
}

/// Runs the binary and returns stdout, panicking with stderr on failure.
pub fn run_ok(args: &[&str]) -> String {
    let out = cli().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}
