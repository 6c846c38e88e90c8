//! Strict and refined exact-match scoring for open-ended QA.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emitter::{read_jsonl, write_jsonl, EmitError};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error(transparent)]
    Io(#[from] EmitError),
    #[error("id mismatch at row {row}: prediction {pred:?}, reference {reference:?}")]
    IdMismatch {
        row: usize,
        pred: String,
        reference: String,
    },
    #[error("prediction count {preds} differs from reference count {refs}")]
    LengthMismatch { preds: usize, refs: usize },
    #[error("reference {0:?} has no answers")]
    EmptyReference(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Strict,
    #[default]
    Refined,
}

/// Lowercase and trim before matching. Disable for raw string comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Normalization {
    pub lowercase: bool,
    pub trim: bool,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            lowercase: true,
            trim: true,
        }
    }
}

impl Normalization {
    pub const RAW: Normalization = Normalization {
        lowercase: false,
        trim: false,
    };

    fn apply(self, s: &str) -> String {
        let s = if self.trim { s.trim() } else { s };
        if self.lowercase {
            s.to_lowercase()
        } else {
            s.to_string()
        }
    }
}

fn squeeze(s: &str) -> String {
    s.split_whitespace().collect()
}

pub fn strict_em_with<S: AsRef<str>>(pred: &str, gts: &[S], norm: Normalization) -> bool {
    let pred = norm.apply(pred);
    gts.iter().any(|gt| norm.apply(gt.as_ref()) == pred)
}

pub fn refined_em_with<S: AsRef<str>>(pred: &str, gts: &[S], norm: Normalization) -> bool {
    let pred = norm.apply(pred);
    let sp = squeeze(&pred);
    gts.iter().any(|gt| {
        let gt = norm.apply(gt.as_ref());
        if gt == pred {
            return true;
        }
        let sg = squeeze(&gt);
        sg.contains(&sp) || sp.contains(&sg)
    })
}

pub fn strict_em<S: AsRef<str>>(pred: &str, gts: &[S]) -> bool {
    strict_em_with(pred, gts, Normalization::default())
}

pub fn refined_em<S: AsRef<str>>(pred: &str, gts: &[S]) -> bool {
    refined_em_with(pred, gts, Normalization::default())
}

pub fn em(protocol: Protocol, pred: &str, gts: &[String], norm: Normalization) -> bool {
    match protocol {
        Protocol::Strict => strict_em_with(pred, gts, norm),
        Protocol::Refined => refined_em_with(pred, gts, norm),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub id: String,
    pub answers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemVerdict {
    pub id: String,
    pub prediction: String,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub protocol: Protocol,
    pub em_at_1: f64,
    pub verdicts: Vec<ItemVerdict>,
}

pub fn score(
    preds: &[Prediction],
    refs: &[Reference],
    protocol: Protocol,
    norm: Normalization,
) -> Result<ScoreReport, MatchError> {
    if preds.len() != refs.len() {
        return Err(MatchError::LengthMismatch {
            preds: preds.len(),
            refs: refs.len(),
        });
    }
    let mut verdicts = Vec::with_capacity(preds.len());
    for (row, (p, r)) in preds.iter().zip(refs).enumerate() {
        if p.id != r.id {
            return Err(MatchError::IdMismatch {
                row: row + 1,
                pred: p.id.clone(),
                reference: r.id.clone(),
            });
        }
        if r.answers.is_empty() {
            return Err(MatchError::EmptyReference(r.id.clone()));
        }
        verdicts.push(ItemVerdict {
            id: p.id.clone(),
            prediction: p.answer.clone(),
            correct: em(protocol, &p.answer, &r.answers, norm),
        });
    }
    let em_at_1 = if verdicts.is_empty() {
        0.0
    } else {
        verdicts.iter().filter(|v| v.correct).count() as f64 / verdicts.len() as f64
    };
    Ok(ScoreReport {
        protocol,
        em_at_1,
        verdicts,
    })
}

/// Scores aligned JSONL files and optionally writes per-item verdicts.
pub fn score_file(
    preds: &Path,
    refs: &Path,
    protocol: Protocol,
    norm: Normalization,
    verdict_out: Option<&Path>,
) -> Result<ScoreReport, MatchError> {
    let p: Vec<Prediction> = read_jsonl(preds)?;
    let r: Vec<Reference> = read_jsonl(refs)?;
    let report = score(&p, &r, protocol, norm)?;
    if let Some(out) = verdict_out {
        write_jsonl(out, &report.verdicts)?;
    }
    Ok(report)
}
