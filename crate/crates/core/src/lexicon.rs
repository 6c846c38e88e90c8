//! Pattern lexicons for affirmative, negative and refusal answers.
//!
//! Defaults cover every raw response in the bundled dialogue and QA
//! refinement examples. Each list can be replaced from a JSON file of
//! case-insensitive regular expressions.

use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("failed to read lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed lexicon file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("bad lexicon pattern {pattern:?}: {source}")]
    Pattern {
        pattern: String,
        #[source]
        source: regex::Error,
    },
}

/// Serialized lexicon: `{"affirmative": [..], "negative": [..], "refusal": [..]}`.
/// Missing keys keep their defaults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LexiconSpec {
    pub affirmative: Vec<String>,
    pub negative: Vec<String>,
    pub refusal: Vec<String>,
}

impl Default for LexiconSpec {
    fn default() -> Self {
        let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Self {
            affirmative: owned(&[
                r"^\W*yes\b",
                r"\bthere (?:is|are) (?:a|an|some|one|two|three|several|many|\d+)\b",
                r"\bi (?:found|see|can see|notice)\b",
                r"\b(?:is|are) (?:present|available)\b",
            ]),
            negative: owned(&[
                r"^\W*no\b",
                r"\bthere (?:is|are) no\b",
                r"\bthere (?:isn't|aren't|is not|are not)\b",
                r"\b(?:couldn't|could not|can't|cannot|didn't|did not) (?:find|see|locate)\b",
                r"\b(?:don't|do not) see\b",
                r"\bnot (?:present|found)\b",
                r"\bno mention\b",
            ]),
            refusal: owned(&[
                r"\bunknown\b",
                r"\bno mention of\b",
                r"\bscene graph\b",
                r"\bnothing else (?:is )?mentioned\b",
                r"\bnot (?:mentioned|specified|provided|given)\b",
                r"\b(?:cannot|can't|can not) (?:be )?(?:determined|determine|tell|answer)\b",
                r"\bno information\b",
                r"\bi'?m sorry, but (?:i|there) (?:do not|don't|does not|doesn't) have\b",
            ]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Affirmative,
    Negative,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    affirmative: Vec<Regex>,
    negative: Vec<Regex>,
    refusal: Vec<Regex>,
}

fn compile(patterns: &[String]) -> Result<Vec<Regex>, LexiconError> {
    patterns
        .iter()
        .map(|p| {
            RegexBuilder::new(p)
                .case_insensitive(true)
                .build()
                .map_err(|source| LexiconError::Pattern {
                    pattern: p.clone(),
                    source,
                })
        })
        .collect()
}

static DEFAULT_LEXICON: LazyLock<Lexicon> =
    LazyLock::new(|| Lexicon::from_spec(&LexiconSpec::default()).expect("default lexicon compiles"));

impl Default for Lexicon {
    fn default() -> Self {
        DEFAULT_LEXICON.clone()
    }
}

impl Lexicon {
    pub fn from_spec(spec: &LexiconSpec) -> Result<Self, LexiconError> {
        Ok(Self {
            affirmative: compile(&spec.affirmative)?,
            negative: compile(&spec.negative)?,
            refusal: compile(&spec.refusal)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let text = fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let spec: LexiconSpec = serde_json::from_str(&text)?;
        Self::from_spec(&spec)
    }

    pub fn is_refusal(&self, answer: &str) -> bool {
        self.refusal.iter().any(|r| r.is_match(answer))
    }

    /// Negative patterns win: "there is no X" also contains "there is".
    pub fn polarity(&self, answer: &str) -> Option<Polarity> {
        if self.negative.iter().any(|r| r.is_match(answer)) {
            Some(Polarity::Negative)
        } else if self.affirmative.iter().any(|r| r.is_match(answer)) {
            Some(Polarity::Affirmative)
        } else {
            None
        }
    }
}
