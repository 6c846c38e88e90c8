//! Ground-truth accuracy of generated QA and corpus word statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::emitter::{GenRecord, RecordTask};
use crate::lexicon::{Lexicon, Polarity};
use crate::question::{extract_count, parse_question, queried_label, ShapeKind};
use crate::scene_graph::{SceneGraph, SceneSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionCategory {
    Counting,
    Existence,
    NonExistence,
    Other,
}

pub fn categorize_question(question: &str, graph: &SceneGraph) -> QuestionCategory {
    match parse_question(question) {
        Some(s) if s.kind == ShapeKind::Counting => QuestionCategory::Counting,
        Some(s) if graph.exists(&queried_label(&s.noun)) => QuestionCategory::Existence,
        Some(_) => QuestionCategory::NonExistence,
        None => QuestionCategory::Other,
    }
}

/// Whether an answer agrees with the graph. `None` for uncheckable categories.
pub fn is_consistent(question: &str, answer: &str, graph: &SceneGraph, lexicon: &Lexicon) -> Option<bool> {
    let shape = parse_question(question)?;
    let label = queried_label(&shape.noun);
    Some(match shape.kind {
        ShapeKind::Counting => extract_count(answer) == Some(graph.count_by_label(&label) as u64),
        ShapeKind::Existence => {
            let expected = if graph.exists(&label) {
                Polarity::Affirmative
            } else {
                Polarity::Negative
            };
            lexicon.polarity(answer) == Some(expected)
        }
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub count: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub counting: CategoryStats,
    pub existence: CategoryStats,
    pub non_existence: CategoryStats,
    pub other: usize,
    pub unknown_scene: usize,
}

impl AccuracyReport {
    pub fn get(&self, c: QuestionCategory) -> Option<&CategoryStats> {
        match c {
            QuestionCategory::Counting => Some(&self.counting),
            QuestionCategory::Existence => Some(&self.existence),
            QuestionCategory::NonExistence => Some(&self.non_existence),
            QuestionCategory::Other => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
    pub scene_id: String,
}

pub fn accuracy_report(pairs: &[QaPair], scenes: &SceneSet, lexicon: &Lexicon) -> AccuracyReport {
    let mut r = AccuracyReport::default();
    for p in pairs {
        let Some(graph) = scenes.get(&p.scene_id) else {
            r.unknown_scene += 1;
            continue;
        };
        let stats = match categorize_question(&p.question, graph) {
            QuestionCategory::Counting => &mut r.counting,
            QuestionCategory::Existence => &mut r.existence,
            QuestionCategory::NonExistence => &mut r.non_existence,
            QuestionCategory::Other => {
                r.other += 1;
                continue;
            }
        };
        stats.count += 1;
        if is_consistent(&p.question, &p.answer, graph, lexicon) == Some(true) {
            stats.correct += 1;
        }
    }
    for s in [&mut r.counting, &mut r.existence, &mut r.non_existence] {
        s.accuracy = (s.count > 0).then(|| s.correct as f64 / s.count as f64);
    }
    r
}

const SKIP_WORDS: &[&str] = &["is", "are", "the", "a", "an", "of", "do", "does"];

fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// `(first word, next content word)`; function words are skipped for the
/// second slot.
pub fn question_type(question: &str) -> Option<(String, String)> {
    let w = words(question);
    let first = w.first()?.clone();
    let second = w[1..]
        .iter()
        .find(|x| !SKIP_WORDS.contains(&x.as_str()))
        .or_else(|| w.get(1))
        .cloned()
        .unwrap_or_default();
    Some((first, second))
}

fn leading_bigram(text: &str) -> Option<String> {
    let w = words(text);
    match w.as_slice() {
        [] => None,
        [a] => Some(a.clone()),
        [a, b, ..] => Some(format!("{a} {b}")),
    }
}

fn distribution(keys: impl Iterator<Item = String>) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut total = 0usize;
    for k in keys {
        *counts.entry(k).or_default() += 1;
        total += 1;
    }
    counts.into_iter().map(|(k, c)| (k, c as f64 / total as f64)).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub records: usize,
    pub questions: usize,
    pub first_word: BTreeMap<String, f64>,
    pub question_type: BTreeMap<String, f64>,
    pub instruction_bigram: BTreeMap<String, f64>,
    pub response_bigram: BTreeMap<String, f64>,
}

pub fn corpus_stats(records: &[GenRecord]) -> CorpusStats {
    let questions: Vec<&str> = records
        .iter()
        .filter(|r| matches!(r.task, RecordTask::Qa | RecordTask::Dialogue))
        .map(GenRecord::user_text)
        .collect();
    let types: Vec<(String, String)> = questions.iter().filter_map(|q| question_type(q)).collect();
    CorpusStats {
        records: records.len(),
        questions: types.len(),
        first_word: distribution(types.iter().map(|(f, _)| f.clone())),
        question_type: distribution(types.iter().map(|(f, s)| format!("{f} {s}"))),
        instruction_bigram: distribution(records.iter().filter_map(|r| leading_bigram(r.user_text()))),
        response_bigram: distribution(records.iter().filter_map(|r| leading_bigram(&r.response))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_graph::{index_scenes, ObjectNode};

    fn graph() -> SceneGraph {
        let nodes = ["chair", "chair", "table"]
            .iter()
            .enumerate()
            .map(|(i, l)| ObjectNode {
                id: i as u32 + 1,
                label: l.to_string(),
                attributes: vec![],
            })
            .collect();
        SceneGraph::new("s", None, nodes, vec![]).unwrap()
    }

    #[test]
    fn categories() {
        let g = graph();
        assert_eq!(
            categorize_question("How many chairs are in the room?", &g),
            QuestionCategory::Counting
        );
        assert_eq!(
            categorize_question("Is there a table in the room?", &g),
            QuestionCategory::Existence
        );
        assert_eq!(
            categorize_question("Is there an ironing board in the room?", &g),
            QuestionCategory::NonExistence
        );
        assert_eq!(
            categorize_question("What color is the chair?", &g),
            QuestionCategory::Other
        );
    }

    #[test]
    fn three_of_four() {
        let scenes = index_scenes([graph()]);
        let p = |q: &str, a: &str| QaPair {
            question: q.into(),
            answer: a.into(),
            scene_id: "s".into(),
        };
        let pairs = vec![
            p("How many chairs are in the room?", "two"),
            p("How many chairs are in the room?", "2"),
            p("How many tables are in the room?", "one"),
            p("How many chairs are in the room?", "three"),
        ];
        let r = accuracy_report(&pairs, &scenes, &Lexicon::default());
        assert_eq!(r.counting.accuracy, Some(0.75));
        assert_eq!(r.existence.count, 0);
        assert_eq!(r.existence.accuracy, None);
    }

    #[test]
    fn question_types_skip_function_words() {
        assert_eq!(
            question_type("What is the color of the bed?"),
            Some(("what".into(), "color".into()))
        );
        assert_eq!(
            question_type("Where is the lamp?"),
            Some(("where".into(), "lamp".into()))
        );
        assert_eq!(question_type("Is it a lamp?"), Some(("is".into(), "it".into())));
        assert_eq!(question_type("Is there a lamp?"), Some(("is".into(), "there".into())));
        assert_eq!(question_type("How many chairs?"), Some(("how".into(), "many".into())));
        assert_eq!(question_type(""), None);
    }
}
