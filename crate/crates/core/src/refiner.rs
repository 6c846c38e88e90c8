//! Rule-based refinement of raw answers against scene-graph ground truth.
//!
//! Five raw categories are recognized. Counting and existence claims are
//! corrected from the graph, refusals are dropped, and answers that leak
//! object ids are sent to a rewriter, then dropped if several rounds fail.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{Lexicon, Polarity};
use crate::llm::{complete, ChatBackend, ChatRequest, LlmError};
use crate::ocot::detect_ids;
use crate::question::{
    find_count, noun_from_answer, parse_question, render_count, starts_how_many, starts_is_there, NumberStyle,
    ShapeKind,
};
use crate::scene_graph::{indefinite_article, SceneGraph};

/// First line of every rewrite request; lets a backend recognize them.
pub const REWRITE_SYSTEM: &str = "Rewrite the user's text so that it contains no numeric object IDs \
(such as \"table-33\"; write \"table\" instead). Keep the meaning, wording and facts otherwise unchanged. \
Reply with the rewritten text only.";

pub const DEFAULT_REWRITE_ROUNDS: u32 = 3;

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("rewriter unavailable: {0}")]
    RewriterUnavailable(String),
}

impl From<LlmError> for RefineError {
    fn from(e: LlmError) -> Self {
        RefineError::RewriterUnavailable(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementCategory {
    Counting,
    Existence,
    NonExistence,
    NegativeResponse,
    ResponseWithId,
    Clean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineAction {
    Keep,
    Fixed,
    Rewritten,
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementVerdict {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub id: String,
    pub category: RefinementCategory,
    pub action: RefineAction,
    pub original: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revised: Option<String>,
    /// Ground-truth facts consulted, e.g. `count(chair)=4`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evidence: Vec<String>,
}

impl RefinementVerdict {
    fn keep(category: RefinementCategory, original: &str, evidence: Vec<String>) -> Self {
        Self {
            id: String::new(),
            category,
            action: RefineAction::Keep,
            original: original.to_string(),
            revised: None,
            evidence,
        }
    }

    fn dropped(category: RefinementCategory, original: &str, evidence: Vec<String>) -> Self {
        Self {
            action: RefineAction::Dropped,
            ..Self::keep(category, original, evidence)
        }
    }

    fn revised(
        category: RefinementCategory,
        action: RefineAction,
        original: &str,
        revised: String,
        evidence: Vec<String>,
    ) -> Self {
        if action == RefineAction::Fixed && revised == original {
            return Self::keep(category, original, evidence);
        }
        Self {
            revised: Some(revised),
            action,
            ..Self::keep(category, original, evidence)
        }
    }

    /// The answer to emit, or `None` when the pair is dropped.
    pub fn final_text(&self) -> Option<&str> {
        match self.action {
            RefineAction::Keep => Some(&self.original),
            RefineAction::Fixed | RefineAction::Rewritten => self.revised.as_deref(),
            RefineAction::Dropped => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Refiner {
    pub lexicon: Lexicon,
    pub max_rewrite_rounds: u32,
}

impl Default for Refiner {
    fn default() -> Self {
        Self {
            lexicon: Lexicon::default(),
            max_rewrite_rounds: DEFAULT_REWRITE_ROUNDS,
        }
    }
}

/// Existence claims are only judged for "Is there ..." questions, or for bare
/// answers refined without their question.
fn polarity_applies(question: &str) -> bool {
    question.trim().is_empty() || starts_is_there(question)
}

fn capitalize_like(template: &str, word: &str) -> String {
    if template.chars().next().is_some_and(char::is_uppercase) {
        let mut c = word.chars();
        c.next()
            .map(|f| f.to_uppercase().collect::<String>() + c.as_str())
            .unwrap_or_default()
    } else {
        word.to_string()
    }
}

fn is_bare_polarity(answer: &str) -> Option<&'static str> {
    let core = answer.trim().trim_end_matches(['.', '!']).to_lowercase();
    match core.as_str() {
        "yes" => Some("yes"),
        "no" => Some("no"),
        _ => None,
    }
}

fn rewrite_polarity(answer: &str, noun: &str, present: bool) -> String {
    if is_bare_polarity(answer).is_some() {
        return capitalize_like(answer.trim(), if present { "yes" } else { "no" });
    }
    let lower = answer.to_lowercase();
    let article = indefinite_article(noun);
    if present {
        if lower.contains("find") || lower.contains("found") {
            format!("Yes, I found {article} {noun} in the room.")
        } else {
            format!("Yes, there is {article} {noun} in the room.")
        }
    } else {
        format!("No, there is no {noun} in the room.")
    }
}

impl Refiner {
    pub fn new(lexicon: Lexicon, max_rewrite_rounds: u32) -> Self {
        Self {
            lexicon,
            max_rewrite_rounds,
        }
    }

    pub fn classify(&self, question: &str, answer: &str, _graph: &SceneGraph) -> RefinementCategory {
        if !detect_ids(answer).is_empty() {
            return RefinementCategory::ResponseWithId;
        }
        if self.lexicon.is_refusal(answer) {
            return RefinementCategory::NegativeResponse;
        }
        if starts_how_many(question) {
            return RefinementCategory::Counting;
        }
        if polarity_applies(question) {
            match self.lexicon.polarity(answer) {
                Some(Polarity::Affirmative) => return RefinementCategory::Existence,
                Some(Polarity::Negative) => return RefinementCategory::NonExistence,
                None => {}
            }
        }
        RefinementCategory::Clean
    }

    /// Refines one question/answer pair. `style` controls how corrected
    /// counts are written.
    pub fn refine(
        &self,
        question: &str,
        answer: &str,
        graph: &SceneGraph,
        rewriter: Option<&dyn ChatBackend>,
        style: NumberStyle,
    ) -> Result<RefinementVerdict, RefineError> {
        let category = self.classify(question, answer, graph);
        if category != RefinementCategory::ResponseWithId {
            return Ok(self.rule_fix(category, question, answer, graph, style));
        }
        let Some(rewriter) = rewriter else {
            return Err(RefineError::RewriterUnavailable("no rewriter configured".into()));
        };
        let mut current = answer.to_string();
        for round in 1..=self.max_rewrite_rounds {
            let response = complete(&ChatRequest::single(REWRITE_SYSTEM, current.clone()), rewriter)?;
            current = response.text.trim().to_string();
            if current.is_empty() || !detect_ids(&current).is_empty() {
                continue;
            }
            let mut evidence = vec![format!("rewrite_rounds={round}")];
            let after = self.classify(question, &current, graph);
            let follow = self.rule_fix(after, question, &current, graph, style);
            evidence.extend(follow.evidence.iter().cloned());
            return Ok(match follow.final_text() {
                Some(text) => {
                    RefinementVerdict::revised(category, RefineAction::Rewritten, answer, text.to_string(), evidence)
                }
                None => RefinementVerdict::dropped(category, answer, evidence),
            });
        }
        Ok(RefinementVerdict::dropped(
            category,
            answer,
            vec![format!("ids remain after {} rewrite rounds", self.max_rewrite_rounds)],
        ))
    }

    fn rule_fix(
        &self,
        category: RefinementCategory,
        question: &str,
        answer: &str,
        graph: &SceneGraph,
        style: NumberStyle,
    ) -> RefinementVerdict {
        use RefinementCategory as C;
        match category {
            C::Clean | C::ResponseWithId => RefinementVerdict::keep(category, answer, vec![]),
            C::NegativeResponse => RefinementVerdict::dropped(category, answer, vec!["refusal".into()]),
            C::Counting => {
                let Some(shape) = parse_question(question).filter(|s| s.kind == ShapeKind::Counting) else {
                    return RefinementVerdict::keep(category, answer, vec!["question outside assessed shape".into()]);
                };
                let truth = graph.count_by_label(&shape.noun) as u64;
                let evidence = vec![format!("count({})={truth}", shape.noun)];
                let revised = match find_count(answer) {
                    Some((_, stated)) if stated == truth => {
                        return RefinementVerdict::keep(category, answer, evidence);
                    }
                    Some((span, _)) => {
                        let word = capitalize_like(&answer[span.clone()], &render_count(truth, style));
                        format!("{}{}{}", &answer[..span.start], word, &answer[span.end..])
                    }
                    None if answer.split_whitespace().count() <= 3 => render_count(truth, style),
                    None => format!("There are {} {} in the room.", render_count(truth, style), shape.noun),
                };
                RefinementVerdict::revised(category, RefineAction::Fixed, answer, revised, evidence)
            }
            C::Existence | C::NonExistence => {
                let noun = parse_question(question)
                    .filter(|s| s.kind == ShapeKind::Existence)
                    .map(|s| s.noun)
                    .or_else(|| noun_from_answer(answer));
                let Some(noun) = noun else {
                    return RefinementVerdict::keep(category, answer, vec!["no queried object found".into()]);
                };
                let present = graph.exists(&noun);
                let evidence = vec![format!("exists({noun})={present}")];
                if present == (category == C::Existence) {
                    return RefinementVerdict::keep(category, answer, evidence);
                }
                let revised = rewrite_polarity(answer, &noun, present);
                RefinementVerdict::revised(category, RefineAction::Fixed, answer, revised, evidence)
            }
        }
    }

    /// Per-turn verdicts for a dialogue; corrected counts keep digits.
    pub fn refine_dialogue(
        &self,
        turns: &[(String, String)],
        graph: &SceneGraph,
        rewriter: Option<&dyn ChatBackend>,
    ) -> Result<Vec<RefinementVerdict>, RefineError> {
        turns
            .iter()
            .map(|(q, a)| self.refine(q, a, graph, rewriter, NumberStyle::Digits))
            .collect()
    }

    /// Captions and plans: only refusals and id leaks are handled.
    pub fn refine_text(
        &self,
        text: &str,
        graph: &SceneGraph,
        rewriter: Option<&dyn ChatBackend>,
    ) -> Result<RefinementVerdict, RefineError> {
        if !detect_ids(text).is_empty() {
            // A synthetic non-question keeps the follow-up pass to id/refusal checks.
            return self.refine("(caption)", text, graph, rewriter, NumberStyle::Digits);
        }
        if self.lexicon.is_refusal(text) {
            return Ok(RefinementVerdict::dropped(
                RefinementCategory::NegativeResponse,
                text,
                vec!["refusal".into()],
            ));
        }
        Ok(RefinementVerdict::keep(RefinementCategory::Clean, text, vec![]))
    }
}
