//! Parsing of raw LLM responses written in the object-centric thought grammar.
//!
//! ```text
//! qa        := { block "\n\n" } block
//! block     := [ "Thoughts:" refs ] [ ("Question:" | "Q:") text ] [ ("Answer:" | "A:") text ]
//! dialogue  := [ "Context:" text ] { "USER:" text [ "Thoughts:" refs ] "ASSISTANT:" text }
//! caption   := [ "Thoughts:" refs ] text          (scene/object caption, planning)
//! refs      := [ label "-" id { "," label "-" id } ]
//! ```
//!
//! Untagged lines continue the field above them. Thoughts and context are
//! scaffolding: [`strip_scaffolding`] drops them and refuses bodies that
//! still mention an object id.

use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::TaskKind;
use crate::scene_graph::ObjectId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OcotError {
    #[error("response grammar error: {0}")]
    Grammar(String),
    #[error("object ids remain after stripping: {0:?}")]
    IdLeak(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectRef {
    pub label: String,
    pub id: ObjectId,
}

impl ObjectRef {
    pub fn new(label: impl Into<String>, id: ObjectId) -> Self {
        Self {
            label: label.into(),
            id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub user: String,
    pub assistant: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thoughts: Vec<ObjectRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Body {
    Text(String),
    Turns(Vec<DialogueTurn>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    pub body: Body,
    pub thoughts: Vec<ObjectRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    pub raw: String,
}

/// A `label-id` mention found in free text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdMatch {
    /// The word immediately before the hyphen.
    pub label: String,
    pub id: ObjectId,
    /// Byte span of the whole `label-id` token.
    pub span: Range<usize>,
}

// Letters, hyphen, digits; the guards reject a preceding letter/digit/hyphen
// and a following letter/digit, so "well-known" and "a-1b" do not match.
static ID_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"([A-Za-z]+)-([0-9]+)").unwrap());

pub fn detect_ids(text: &str) -> Vec<IdMatch> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    for caps in ID_TOKEN.captures_iter(text) {
        let m = caps.get(0).unwrap();
        let before_ok = m.start() == 0 || {
            let b = bytes[m.start() - 1];
            !(b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
        };
        let after_ok = bytes
            .get(m.end())
            .is_none_or(|b| !(b.is_ascii_alphanumeric() || *b == b'_'));
        if !(before_ok && after_ok) {
            continue;
        }
        let Ok(id) = caps[2].parse() else { continue };
        out.push(IdMatch {
            label: caps[1].to_string(),
            id,
            span: m.range(),
        });
    }
    out
}

/// Deletes the `-<id>` suffix of every detected mention.
pub fn remove_ids(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for m in detect_ids(text) {
        let hyphen = m.span.start + m.label.len();
        out.push_str(&text[last..hyphen]);
        last = m.span.end;
    }
    out.push_str(&text[last..]);
    out
}

fn parse_refs(list: &str) -> Result<Vec<ObjectRef>, OcotError> {
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (label, id) = item
            .rsplit_once('-')
            .ok_or_else(|| OcotError::Grammar(format!("thought {item:?} is not label-id")))?;
        let id = id
            .trim()
            .parse()
            .map_err(|_| OcotError::Grammar(format!("thought {item:?} has a non-integer id")))?;
        let label = label.trim();
        if label.is_empty() {
            return Err(OcotError::Grammar(format!("thought {item:?} has no label")));
        }
        out.push(ObjectRef::new(label, id));
    }
    Ok(out)
}

fn strip_tag<'a>(line: &'a str, tags: &[&str]) -> Option<&'a str> {
    tags.iter().find_map(|t| {
        let head = line.get(..t.len())?;
        head.eq_ignore_ascii_case(t).then(|| line[t.len()..].trim())
    })
}

fn append(field: &mut String, text: &str) {
    if !field.is_empty() {
        field.push('\n');
    }
    field.push_str(text);
}

const THOUGHTS: &[&str] = &["Thoughts:", "Thought:"];
const CONTEXT: &[&str] = &["Context:"];
const QUESTION: &[&str] = &["Question:", "Q:"];
const ANSWER: &[&str] = &["Answer:", "A:"];
const USER: &[&str] = &["USER:"];
const ASSISTANT: &[&str] = &["ASSISTANT:"];

pub fn parse(raw: &str, task: TaskKind) -> Result<ParsedResponse, OcotError> {
    match task {
        TaskKind::Dialogue => parse_dialogue(raw),
        TaskKind::Qa => parse_qa_block(raw),
        _ => parse_text(raw, task),
    }
}

fn parse_text(raw: &str, task: TaskKind) -> Result<ParsedResponse, OcotError> {
    let mut thoughts = Vec::new();
    let mut body = String::new();
    for line in raw.lines() {
        if let Some(list) = strip_tag(line.trim_start(), THOUGHTS) {
            thoughts.extend(parse_refs(list)?);
        } else {
            append(&mut body, line);
        }
    }
    Ok(ParsedResponse {
        task,
        question: None,
        body: Body::Text(body.trim().to_string()),
        thoughts,
        context: None,
        raw: raw.to_string(),
    })
}

fn parse_qa_block(raw: &str) -> Result<ParsedResponse, OcotError> {
    #[derive(PartialEq)]
    enum Field {
        None,
        Question,
        Answer,
    }
    let mut thoughts = Vec::new();
    let mut question: Option<String> = None;
    let mut answer: Option<String> = None;
    let mut loose = String::new();
    let mut field = Field::None;
    for line in raw.lines() {
        let t = line.trim();
        if let Some(list) = strip_tag(t, THOUGHTS) {
            thoughts.extend(parse_refs(list)?);
            field = Field::None;
        } else if let Some(q) = strip_tag(t, QUESTION) {
            append(question.get_or_insert_with(String::new), q);
            field = Field::Question;
        } else if let Some(a) = strip_tag(t, ANSWER) {
            append(answer.get_or_insert_with(String::new), a);
            field = Field::Answer;
        } else {
            match field {
                Field::Question => append(question.as_mut().unwrap(), t),
                Field::Answer => append(answer.as_mut().unwrap(), t),
                Field::None => append(&mut loose, line),
            }
        }
    }
    let body = match answer {
        Some(a) => a,
        None => loose,
    };
    Ok(ParsedResponse {
        task: TaskKind::Qa,
        question: question.map(|q| q.trim().to_string()),
        body: Body::Text(body.trim().to_string()),
        thoughts,
        context: None,
        raw: raw.to_string(),
    })
}

/// Splits a multi-pair QA response on blank lines and parses each block.
/// Blocks with neither a question nor an answer are skipped.
pub fn parse_qa_batch(raw: &str) -> Result<Vec<ParsedResponse>, OcotError> {
    let mut out = Vec::new();
    for block in split_blocks(raw) {
        let parsed = parse_qa_block(&block)?;
        let empty = matches!(&parsed.body, Body::Text(t) if t.is_empty());
        if parsed.question.is_some() || !empty {
            out.push(parsed);
        }
    }
    Ok(out)
}

fn split_blocks(raw: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut cur = String::new();
    for line in raw.lines() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                blocks.push(std::mem::take(&mut cur));
            }
        } else {
            append(&mut cur, line);
        }
    }
    if !cur.is_empty() {
        blocks.push(cur);
    }
    blocks
}

fn parse_dialogue(raw: &str) -> Result<ParsedResponse, OcotError> {
    enum Field {
        None,
        Context,
        User,
        Assistant,
    }
    let mut context: Option<String> = None;
    let mut turns: Vec<DialogueTurn> = Vec::new();
    let mut pending_user: Option<String> = None;
    let mut pending_thoughts: Vec<ObjectRef> = Vec::new();
    let mut field = Field::None;
    for line in raw.lines() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(c) = strip_tag(t, CONTEXT) {
            append(context.get_or_insert_with(String::new), c);
            field = Field::Context;
        } else if let Some(u) = strip_tag(t, USER) {
            if pending_user.is_some() {
                return Err(OcotError::Grammar("USER turn without an ASSISTANT reply".into()));
            }
            pending_user = Some(u.to_string());
            field = Field::User;
        } else if let Some(list) = strip_tag(t, THOUGHTS) {
            pending_thoughts.extend(parse_refs(list)?);
            field = Field::None;
        } else if let Some(a) = strip_tag(t, ASSISTANT) {
            let user = pending_user
                .take()
                .ok_or_else(|| OcotError::Grammar("ASSISTANT turn without a USER turn".into()))?;
            turns.push(DialogueTurn {
                user,
                assistant: a.to_string(),
                thoughts: std::mem::take(&mut pending_thoughts),
            });
            field = Field::Assistant;
        } else {
            match field {
                Field::Context => append(context.as_mut().unwrap(), t),
                Field::User => append(pending_user.as_mut().unwrap(), t),
                Field::Assistant => append(&mut turns.last_mut().unwrap().assistant, t),
                Field::None => {
                    return Err(OcotError::Grammar(format!("untagged dialogue line {t:?}")));
                }
            }
        }
    }
    if pending_user.is_some() {
        return Err(OcotError::Grammar("unclosed dialogue turn".into()));
    }
    if turns.is_empty() {
        return Err(OcotError::Grammar("dialogue has no turns".into()));
    }
    let thoughts = turns.iter().flat_map(|t| t.thoughts.iter().cloned()).collect();
    Ok(ParsedResponse {
        task: TaskKind::Dialogue,
        question: None,
        body: Body::Turns(turns),
        thoughts,
        context,
        raw: raw.to_string(),
    })
}

fn render_refs(refs: &[ObjectRef]) -> String {
    refs.iter()
        .map(|r| format!("{}-{}", r.label, r.id))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Writes a parsed response back in the response grammar.
pub fn render(parsed: &ParsedResponse) -> String {
    let mut lines = Vec::new();
    match &parsed.body {
        Body::Turns(turns) => {
            if let Some(c) = &parsed.context {
                lines.push(format!("Context: {c}"));
            }
            for t in turns {
                lines.push(format!("USER: {}", t.user));
                if !t.thoughts.is_empty() {
                    lines.push(format!("Thoughts: {}", render_refs(&t.thoughts)));
                }
                lines.push(format!("ASSISTANT: {}", t.assistant));
            }
        }
        Body::Text(text) => {
            if !parsed.thoughts.is_empty() {
                lines.push(format!("Thoughts: {}", render_refs(&parsed.thoughts)));
            }
            if parsed.task == TaskKind::Qa {
                if let Some(q) = &parsed.question {
                    lines.push(format!("Question: {q}"));
                }
                lines.push(format!("Answer: {text}"));
            } else {
                lines.push(text.clone());
            }
        }
    }
    lines.join("\n")
}

/// Body without thoughts or context. Fails if any object id survives.
pub fn strip_scaffolding(parsed: &ParsedResponse) -> Result<Body, OcotError> {
    let leaks: Vec<String> = match &parsed.body {
        Body::Text(t) => detect_ids(t).into_iter().map(|m| t[m.span].to_string()).collect(),
        Body::Turns(turns) => turns
            .iter()
            .flat_map(|t| {
                let mut v: Vec<String> = detect_ids(&t.user)
                    .into_iter()
                    .map(|m| t.user[m.span].to_string())
                    .collect();
                v.extend(
                    detect_ids(&t.assistant)
                        .into_iter()
                        .map(|m| t.assistant[m.span].to_string()),
                );
                v
            })
            .collect(),
    };
    if !leaks.is_empty() {
        return Err(OcotError::IdLeak(leaks));
    }
    Ok(match &parsed.body {
        Body::Text(t) => Body::Text(t.clone()),
        Body::Turns(turns) => Body::Turns(
            turns
                .iter()
                .map(|t| DialogueTurn {
                    user: t.user.clone(),
                    assistant: t.assistant.clone(),
                    thoughts: Vec::new(),
                })
                .collect(),
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qa_with_thoughts() {
        let p = parse("Thoughts: chair-12, chair-13\nAnswer: two", TaskKind::Qa).unwrap();
        assert_eq!(
            p.thoughts,
            vec![ObjectRef::new("chair", 12), ObjectRef::new("chair", 13)]
        );
        assert_eq!(p.body, Body::Text("two".into()));
    }

    #[test]
    fn missing_thoughts_keeps_whole_text() {
        let p = parse("The room has a bed.\nIt is tidy.", TaskKind::SceneCaption).unwrap();
        assert!(p.thoughts.is_empty());
        assert_eq!(p.body, Body::Text("The room has a bed.\nIt is tidy.".into()));
    }

    #[test]
    fn dialogue_turns_in_order() {
        let raw = "Context: looking for a seat\nUSER: Where can I sit?\nThoughts: sofa-1\nASSISTANT: On the sofa.\nUSER: Is it soft?\nASSISTANT: Yes, it is.";
        let p = parse(raw, TaskKind::Dialogue).unwrap();
        assert_eq!(p.context.as_deref(), Some("looking for a seat"));
        let Body::Turns(turns) = &p.body else { panic!() };
        assert_eq!(turns.len(), 2);
        assert_eq!(turns[0].thoughts, vec![ObjectRef::new("sofa", 1)]);
        assert_eq!(turns[1].assistant, "Yes, it is.");
    }

    #[test]
    fn unclosed_turn_is_grammar_error() {
        let err = parse("USER: hello?\nASSISTANT: hi\nUSER: and?", TaskKind::Dialogue).unwrap_err();
        assert!(matches!(err, OcotError::Grammar(_)));
        assert!(parse("ASSISTANT: orphan", TaskKind::Dialogue).is_err());
        assert!(parse("Thoughts: chair-x\nAnswer: 1", TaskKind::Qa).is_err());
    }

    #[test]
    fn id_detection() {
        let hits = detect_ids("attached to wall-3, behind heater-18, to the left of shelf-19");
        let got: Vec<_> = hits.iter().map(|m| (m.label.as_str(), m.id)).collect();
        assert_eq!(got, vec![("wall", 3), ("heater", 18), ("shelf", 19)]);
        assert!(detect_ids("there are 3 chairs").is_empty());
        assert!(detect_ids("").is_empty());
        assert!(detect_ids("a well-known brand").is_empty());
        assert!(detect_ids("<31996> <31999>").is_empty());
        assert_eq!(remove_ids("left of the dining table-33."), "left of the dining table.");
    }

    #[test]
    fn strip_rejects_leaks_and_is_idempotent() {
        let p = parse(
            "Thoughts: table-33\nto the left of the dining table-33",
            TaskKind::ObjectCaption,
        )
        .unwrap();
        assert!(matches!(strip_scaffolding(&p), Err(OcotError::IdLeak(_))));
        let clean = parse("Thoughts: chair-1\nA brown chair.", TaskKind::ObjectCaption).unwrap();
        let once = strip_scaffolding(&clean).unwrap();
        assert_eq!(once, Body::Text("A brown chair.".into()));
        let again = ParsedResponse {
            body: once.clone(),
            thoughts: vec![],
            ..clean
        };
        assert_eq!(strip_scaffolding(&again).unwrap(), once);
    }

    #[test]
    fn qa_batch_splits_on_blank_lines() {
        let raw = "Thoughts: chair-1\nQuestion: How many chairs are in the room?\nAnswer: one\n\nThoughts:\nQuestion: Is there a desk in the room?\nAnswer: no\n";
        let items = parse_qa_batch(raw).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[1].question.as_deref(), Some("Is there a desk in the room?"));
        assert_eq!(items[1].body, Body::Text("no".into()));
    }
}
