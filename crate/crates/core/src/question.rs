//! Shape analysis of counting/existence questions and the numbers and nouns
//! inside their answers.

use std::sync::LazyLock;

use regex::Regex;

use crate::scene_graph::normalize_label;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Counting,
    Existence,
}

/// A question of the assessed form: "How many X ..." / "Is there a X ...",
/// ending in one of the room locations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionShape {
    pub kind: ShapeKind,
    /// Queried noun phrase as written (may be plural).
    pub noun: String,
}

const LOCATION: &str = r"(?:in|inside) the (?:room|bedroom|kitchen|living room|bathroom)";
const NOUN: &str = r"[a-z][a-z' \-]*?";

static COUNTING: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"^how many (?P<noun>{NOUN}) (?:(?:are|is) (?:there )?{LOCATION}|(?:are|is) there|{LOCATION})\s*\??$"
    ))
    .unwrap()
});

static EXISTENCE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"^(?:is|are) there (?:(?:a|an|any|some) )?(?P<noun>{NOUN})(?: {LOCATION})?\s*\??$"
    ))
    .unwrap()
});

/// Words that end a noun phrase when scanning free text.
const STOP_WORDS: &[&str] = &[
    "in", "on", "at", "near", "next", "under", "behind", "beside", "by", "and", "or", "with", "inside", "to", "from",
    "above", "below", "that", "which", "but", "however", "here", "there", "for", "of", "close",
];

static ANSWER_NOUN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)(?:there (?:is|are) (?:no |not any )?(?:(?:a|an|any|some) )?|(?:couldn't|could not|can't|cannot|didn't|did not) (?:find|see) (?:(?:a|an|any) )?|\bi (?:found|see|can see) (?:(?:a|an) )?)(?P<rest>[A-Za-z][A-Za-z' \-]*)",
    )
    .unwrap()
});

fn squash(q: &str) -> String {
    q.trim().to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

fn noun_is_clean(noun: &str) -> bool {
    !noun.is_empty() && !noun.split_whitespace().any(|w| STOP_WORDS.contains(&w))
}

/// Parses the assessed question shape. Out-of-shape questions return `None`.
pub fn parse_question(question: &str) -> Option<QuestionShape> {
    let q = squash(question);
    let (kind, caps) = if let Some(c) = COUNTING.captures(&q) {
        (ShapeKind::Counting, c)
    } else {
        (ShapeKind::Existence, EXISTENCE.captures(&q)?)
    };
    let noun = caps["noun"].trim().to_string();
    noun_is_clean(&noun).then_some(QuestionShape { kind, noun })
}

pub fn starts_how_many(question: &str) -> bool {
    squash(question).starts_with("how many ")
}

pub fn starts_is_there(question: &str) -> bool {
    let q = squash(question);
    q.starts_with("is there ") || q.starts_with("are there ")
}

/// Noun phrase asserted (present or absent) by an existence-style sentence,
/// e.g. "Yes, there is a cutting board in the kitchen." -> "cutting board".
pub fn noun_from_answer(answer: &str) -> Option<String> {
    let caps = ANSWER_NOUN.captures(answer)?;
    let words: Vec<String> = caps["rest"]
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .take_while(|w| !STOP_WORDS.contains(&w.as_str()))
        .collect();
    if words.is_empty() {
        return None;
    }
    Some(words.join(" "))
}

pub const NUMBER_WORDS: [&str; 21] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
    "twenty",
];

static NUMBER_TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?i)\b(?:\d+|{})\b", NUMBER_WORDS.join("|"))).unwrap());

static NONE_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(?:no|none)\b").unwrap());

fn token_value(tok: &str) -> Option<u64> {
    let lower = tok.to_lowercase();
    if let Ok(n) = lower.parse::<u64>() {
        return Some(n);
    }
    if lower == "no" || lower == "none" {
        return Some(0);
    }
    NUMBER_WORDS.iter().position(|w| *w == lower).map(|i| i as u64)
}

/// Byte span and value of the count stated in an answer: the first digit run
/// or number word, else a "no"/"none" read as zero.
pub fn find_count(answer: &str) -> Option<(std::ops::Range<usize>, u64)> {
    let m = NUMBER_TOKEN.find(answer).or_else(|| NONE_TOKEN.find(answer))?;
    token_value(m.as_str()).map(|v| (m.range(), v))
}

pub fn extract_count(answer: &str) -> Option<u64> {
    find_count(answer).map(|(_, v)| v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumberStyle {
    /// English words for 0–10, digits above.
    #[default]
    Words,
    Digits,
}

pub fn render_count(n: u64, style: NumberStyle) -> String {
    match style {
        NumberStyle::Words if n <= 10 => NUMBER_WORDS[n as usize].to_string(),
        _ => n.to_string(),
    }
}

/// Normalized label for the noun a question or answer is about.
pub fn queried_label(noun: &str) -> String {
    normalize_label(noun)
}
