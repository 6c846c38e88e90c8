//! Negative-sample augmentation for existence QA and the Yes / No-1 / No-2
//! existence evaluation split.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emitter::{make_record, EmitError, GenRecord, Provenance, RecordMeta, RecordTask, SlotKind};
use crate::lexicon::{Lexicon, Polarity};
use crate::rng::SplitMix64;
use crate::scene_graph::{indefinite_article, normalize_label, SceneSet};

pub const DEFAULT_RATIO: f64 = 0.5;

static DISTRACTORS_JSON: &str = include_str!("../data/distractors.json");

#[derive(Debug, Error)]
pub enum BalanceError {
    #[error("no absent labels are available for negative sampling")]
    EmptyVocabulary,
    #[error("subset {subset} needs {wanted} questions but only {available} candidates exist")]
    InsufficientLabels {
        subset: EvalSubset,
        wanted: usize,
        available: usize,
    },
    #[error("record refers to unknown scene {0:?}")]
    UnknownScene(String),
    #[error("ratio {0} outside [0, 1)")]
    BadRatio(f64),
    #[error(transparent)]
    Emit(#[from] EmitError),
}

/// Normalized labels across all scenes and per scene.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    pub global_labels: BTreeSet<String>,
    pub per_scene: BTreeMap<String, BTreeSet<String>>,
}

impl Vocabulary {
    pub fn from_scenes(scenes: &SceneSet) -> Self {
        let mut v = Vocabulary::default();
        for (id, g) in scenes {
            let labels: BTreeSet<String> = g.label_counts().into_keys().collect();
            v.global_labels.extend(labels.iter().cloned());
            v.per_scene.insert(id.clone(), labels);
        }
        v
    }

    /// Labels present in some scene but absent from `scene_id`.
    pub fn absent_from(&self, scene_id: &str) -> Vec<&str> {
        let here = self.per_scene.get(scene_id);
        self.global_labels
            .iter()
            .filter(|l| here.is_none_or(|h| !h.contains(*l)))
            .map(String::as_str)
            .collect()
    }
}

pub fn default_distractors() -> Vec<String> {
    serde_json::from_str(DISTRACTORS_JSON).expect("embedded distractor list parses")
}

pub fn existence_question(label: &str) -> String {
    format!("Is there {} {label} in the room?", indefinite_article(label))
}

pub fn negative_answer(label: &str) -> String {
    format!("No, there is no {label} in the room.")
}

pub fn is_no_answer(lexicon: &Lexicon, response: &str) -> bool {
    lexicon.polarity(response) == Some(Polarity::Negative)
}

fn slot_count(r: &GenRecord, kind: SlotKind) -> u32 {
    r.visual_slots.iter().find(|s| s.kind == kind).map_or(0, |s| s.count)
}

/// Appends absent-object "no" questions until the no-answer fraction reaches
/// `ratio` or every scene's absent labels are used up.
pub fn augment_negatives(
    records: &[GenRecord],
    scenes: &SceneSet,
    ratio: f64,
    seed: u64,
) -> Result<Vec<GenRecord>, BalanceError> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(BalanceError::BadRatio(ratio));
    }
    let lexicon = Lexicon::default();
    let mut out = records.to_vec();
    let n = records.len() as f64;
    let no0 = records.iter().filter(|r| is_no_answer(&lexicon, &r.response)).count() as f64;
    let wanted = ((ratio * n - no0) / (1.0 - ratio)).round();
    if wanted <= 0.0 || records.is_empty() {
        return Ok(out);
    }
    let wanted = wanted as usize;

    let vocab = Vocabulary::from_scenes(scenes);
    let mut pools: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut rng = SplitMix64::new(seed);
    for r in records {
        if !scenes.contains_key(&r.scene_id) {
            return Err(BalanceError::UnknownScene(r.scene_id.clone()));
        }
        pools.entry(r.scene_id.as_str()).or_insert_with(|| {
            let mut asked: BTreeSet<String> = BTreeSet::new();
            for q in records.iter().filter(|q| q.scene_id == r.scene_id) {
                if let Some(shape) = crate::question::parse_question(q.user_text()) {
                    asked.insert(normalize_label(&shape.noun));
                }
            }
            let mut pool: Vec<&str> = vocab
                .absent_from(&r.scene_id)
                .into_iter()
                .filter(|l| !asked.contains(*l))
                .collect();
            rng.shuffle(&mut pool);
            pool
        });
    }
    if pools.values().all(Vec::is_empty) {
        return Err(BalanceError::EmptyVocabulary);
    }

    let mut order: Vec<usize> = (0..records.len()).collect();
    rng.shuffle(&mut order);
    let mut added = 0;
    'outer: while added < wanted {
        let mut progressed = false;
        for &i in &order {
            if added == wanted {
                break 'outer;
            }
            let src = &records[i];
            let Some(label) = pools.get_mut(src.scene_id.as_str()).and_then(Vec::pop) else {
                continue;
            };
            let meta = RecordMeta {
                image_tokens: slot_count(src, SlotKind::Image),
                object_tokens: slot_count(src, SlotKind::Objects),
                provenance: Provenance {
                    seeds: vec![seed],
                    ..Provenance::default()
                },
            };
            out.push(make_record(
                RecordTask::Qa,
                &src.scene_id,
                &existence_question(label),
                &negative_answer(label),
                meta,
            )?);
            added += 1;
            progressed = true;
        }
        if !progressed {
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EvalSubset {
    #[serde(rename = "yes")]
    Yes,
    #[serde(rename = "no-1")]
    No1,
    #[serde(rename = "no-2")]
    No2,
}

impl std::fmt::Display for EvalSubset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EvalSubset::Yes => "Yes",
            EvalSubset::No1 => "No-1",
            EvalSubset::No2 => "No-2",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalQuestion {
    pub subset: EvalSubset,
    pub scene_id: String,
    pub label: String,
    pub question: String,
    pub answer: String,
}

fn pick(
    subset: EvalSubset,
    mut pool: Vec<(String, String)>,
    n: usize,
    rng: &mut SplitMix64,
) -> Result<Vec<EvalQuestion>, BalanceError> {
    if pool.len() < n {
        return Err(BalanceError::InsufficientLabels {
            subset,
            wanted: n,
            available: pool.len(),
        });
    }
    let idx = rng.choose_indices(pool.len(), n);
    let answer = if subset == EvalSubset::Yes { "yes" } else { "no" };
    let mut chosen: Vec<(String, String)> = idx.into_iter().map(|i| std::mem::take(&mut pool[i])).collect();
    chosen.sort();
    Ok(chosen
        .into_iter()
        .map(|(scene_id, label)| EvalQuestion {
            subset,
            question: existence_question(&label),
            answer: answer.to_string(),
            scene_id,
            label,
        })
        .collect())
}

/// `n_per_subset` questions for each of Yes, No-1 and No-2.
pub fn build_existence_eval(
    scenes: &SceneSet,
    n_per_subset: usize,
    distractors: &[String],
    seed: u64,
) -> Result<Vec<EvalQuestion>, BalanceError> {
    let vocab = Vocabulary::from_scenes(scenes);
    let unseen: BTreeSet<String> = distractors
        .iter()
        .map(|d| normalize_label(d))
        .filter(|d| !d.is_empty() && !vocab.global_labels.contains(d))
        .collect();
    let mut yes = Vec::new();
    let mut no1 = Vec::new();
    let mut no2 = Vec::new();
    for (scene, labels) in &vocab.per_scene {
        yes.extend(labels.iter().map(|l| (scene.clone(), l.clone())));
        no1.extend(
            vocab
                .absent_from(scene)
                .into_iter()
                .map(|l| (scene.clone(), l.to_string())),
        );
        no2.extend(unseen.iter().map(|l| (scene.clone(), l.clone())));
    }
    let mut rng = SplitMix64::new(seed);
    let mut out = pick(EvalSubset::Yes, yes, n_per_subset, &mut rng)?;
    out.extend(pick(EvalSubset::No1, no1, n_per_subset, &mut rng)?);
    out.extend(pick(EvalSubset::No2, no2, n_per_subset, &mut rng)?);
    Ok(out)
}
