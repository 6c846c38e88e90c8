//! Scripted offline backend.
//!
//! Reads the scene graph out of the final user turn, answers in the response
//! grammar the prompt asked for, and injects errors at configured rates:
//! wrong counts, flipped existence polarity, leaked object ids and refusals.
//! Rewrite requests from the refiner get their ids stripped. Every choice is
//! drawn from a generator seeded by the request hash, so identical requests
//! get identical responses.

use serde::{Deserialize, Serialize};

use crate::llm::{request_hash, ChatBackend, ChatRequest, ChatResponse, LlmError};
use crate::ocot::remove_ids;
use crate::prompt::{detect_task, parse_serialized_graph, TaskKind};
use crate::refiner::REWRITE_SYSTEM;
use crate::rng::{seed_from_bytes, SplitMix64};
use crate::scene_graph::{indefinite_article, normalize_label, pluralize, ObjectNode, SceneGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    pub seed: u64,
    pub counting_error_rate: f64,
    pub existence_error_rate: f64,
    pub id_leak_rate: f64,
    pub refusal_rate: f64,
    pub rewrite_failure_rate: f64,
    /// Existence questions about absent objects per scene.
    pub negatives_per_scene: usize,
    /// Labels the mock may ask about as absent objects.
    pub distractors: Vec<String>,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            counting_error_rate: 0.0,
            existence_error_rate: 0.0,
            id_leak_rate: 0.0,
            refusal_rate: 0.0,
            rewrite_failure_rate: 0.0,
            negatives_per_scene: 3,
            distractors: serde_json::from_str(include_str!("../data/distractors.json"))
                .expect("embedded distractors parse"),
        }
    }
}

pub struct MockBackend {
    config: MockConfig,
}

impl MockBackend {
    pub fn new(config: MockConfig) -> Self {
        Self { config }
    }
}

impl ChatBackend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let mut rng = SplitMix64::new(seed_from_bytes(request_hash(request).as_bytes()) ^ self.config.seed);
        if request.system.starts_with(REWRITE_SYSTEM) {
            let text = request.last_user_text();
            let out = if rng.chance(self.config.rewrite_failure_rate) {
                text.to_string()
            } else {
                remove_ids(text)
            };
            return Ok(respond(out));
        }
        let task = detect_task(&request.system)
            .ok_or_else(|| LlmError::Refusal("mock backend does not recognize this prompt".into()))?;
        let graph = parse_serialized_graph("query", request.last_user_text())
            .ok_or_else(|| LlmError::Refusal("mock backend found no scene graph in the query".into()))?;
        let mut gen = Generator {
            cfg: &self.config,
            rng,
            graph: &graph,
        };
        let text = match task {
            TaskKind::Qa => gen.qa(),
            TaskKind::Dialogue => gen.dialogue(),
            TaskKind::SceneCaption => gen.scene_caption(),
            TaskKind::ObjectCaption => gen.object_caption(),
            TaskKind::Planning => gen.planning(),
        };
        Ok(respond(text))
    }
}

fn respond(text: String) -> ChatResponse {
    ChatResponse {
        text,
        backend_id: "mock".into(),
        latency_ms: 0,
    }
}

struct Generator<'a> {
    cfg: &'a MockConfig,
    rng: SplitMix64,
    graph: &'a SceneGraph,
}

fn refs(nodes: &[&ObjectNode]) -> String {
    nodes
        .iter()
        .map(|n| format!("{}-{}", n.label, n.id))
        .collect::<Vec<_>>()
        .join(", ")
}

impl<'a> Generator<'a> {
    fn nodes_with(&self, label: &str) -> Vec<&'a ObjectNode> {
        let graph: &'a SceneGraph = self.graph;
        graph
            .nodes()
            .iter()
            .filter(|n| normalize_label(&n.label) == label)
            .collect()
    }

    fn wrong_count(&mut self, truth: u64) -> u64 {
        let deltas: Vec<i64> = [-2i64, -1, 1, 2]
            .into_iter()
            .filter(|d| truth as i64 + d >= 0)
            .collect();
        (truth as i64 + deltas[self.rng.below(deltas.len())]) as u64
    }

    fn count_answer(&mut self, truth: u64) -> u64 {
        if self.rng.chance(self.cfg.counting_error_rate) {
            self.wrong_count(truth)
        } else {
            truth
        }
    }

    fn render(&self, n: u64, words: bool) -> String {
        crate::question::render_count(
            n,
            if words {
                crate::question::NumberStyle::Words
            } else {
                crate::question::NumberStyle::Digits
            },
        )
    }

    fn absent_labels(&mut self) -> Vec<String> {
        let mut pool: Vec<&String> = self.cfg.distractors.iter().filter(|d| !self.graph.exists(d)).collect();
        self.rng.shuffle(&mut pool);
        pool.into_iter().take(self.cfg.negatives_per_scene).cloned().collect()
    }

    /// A relation phrase for `node`, optionally leaking the partner's id.
    fn location_phrase(&mut self, node: &ObjectNode) -> Option<String> {
        let rels: Vec<_> = self
            .graph
            .relations()
            .iter()
            .filter(|r| r.subject_id == node.id)
            .collect();
        if rels.is_empty() {
            return None;
        }
        let rel = rels[self.rng.below(rels.len())];
        let other = self.graph.node(rel.object_id)?;
        let leak = self.rng.chance(self.cfg.id_leak_rate);
        Some(if leak {
            format!("{} the {}-{}", rel.predicate, other.label, other.id)
        } else {
            format!("{} the {}", rel.predicate, other.label)
        })
    }

    fn qa(&mut self) -> String {
        let mut blocks = Vec::new();
        let labels: Vec<(String, usize)> = self.graph.label_counts().into_iter().collect();
        for (label, truth) in &labels {
            let members = self.nodes_with(label);
            let plural = pluralize(label);
            if normalize_label(&plural) == *label {
                let words = self.rng.chance(0.5);
                let stated = self.count_answer(*truth as u64);
                blocks.push(format!(
                    "Thoughts: {}\nQuestion: How many {plural} are in the room?\nAnswer: {}",
                    refs(&members),
                    self.render(stated, words)
                ));
            }
            let flip = self.rng.chance(self.cfg.existence_error_rate);
            blocks.push(format!(
                "Thoughts: {}\nQuestion: Is there {} {label} in the room?\nAnswer: {}",
                refs(&members),
                indefinite_article(label),
                if flip { "no" } else { "yes" }
            ));
            let node = members[0];
            if let Some(phrase) = self.location_phrase(node) {
                blocks.push(format!(
                    "Thoughts: {}-{}\nQuestion: Where is the {}?\nAnswer: {phrase}",
                    node.label, node.id, node.label
                ));
            }
            if self.rng.chance(self.cfg.refusal_rate) {
                blocks.push(format!(
                    "Thoughts: {}-{}\nQuestion: What is the material of the {}?\nAnswer: unknown",
                    node.label, node.id, node.label
                ));
            } else if let Some(attr) = node.attributes.first() {
                blocks.push(format!(
                    "Thoughts: {}-{}\nQuestion: What does the {} look like?\nAnswer: {attr}",
                    node.label, node.id, node.label
                ));
            }
        }
        for label in self.absent_labels() {
            let flip = self.rng.chance(self.cfg.existence_error_rate);
            blocks.push(format!(
                "Thoughts:\nQuestion: Is there {} {label} in the room?\nAnswer: {}",
                indefinite_article(&label),
                if flip { "yes" } else { "no" }
            ));
        }
        blocks.join("\n\n")
    }

    fn dialogue(&mut self) -> String {
        let labels: Vec<(String, usize)> = self.graph.label_counts().into_iter().collect();
        let (label, truth) = labels[self.rng.below(labels.len())].clone();
        let members = self.nodes_with(&label);
        let mut lines =
            vec!["Context: The person has just entered the room and wants to find their way around.".to_string()];
        let plural = pluralize(&label);
        if normalize_label(&plural) == label {
            let stated = self.count_answer(truth as u64);
            lines.push(format!("USER: How many {plural} are in the room?"));
            lines.push(format!("Thoughts: {}", refs(&members)));
            lines.push(format!("ASSISTANT: There are {stated} {plural} in the room."));
        }
        let node = members[0];
        lines.push(format!(
            "USER: Is there {} {} in the room?",
            indefinite_article(&node.label),
            node.label
        ));
        lines.push(format!("Thoughts: {}-{}", node.label, node.id));
        if self.rng.chance(self.cfg.existence_error_rate) {
            lines.push(format!("ASSISTANT: No, there is no {} in the room.", node.label));
        } else {
            lines.push(format!(
                "ASSISTANT: Yes, there is {} {} in the room.",
                indefinite_article(&node.label),
                node.label
            ));
        }
        if let Some(phrase) = self.location_phrase(node) {
            lines.push(format!("USER: Where exactly is the {}?", node.label));
            lines.push(format!("Thoughts: {}-{}", node.label, node.id));
            lines.push(format!("ASSISTANT: It is {phrase}."));
        }
        if self.rng.chance(self.cfg.refusal_rate) {
            lines.push("USER: Is there anything else I should know?".into());
            lines.push("ASSISTANT: No, there is nothing else mentioned in the scene graph.".into());
        }
        if let Some(absent) = self.absent_labels().into_iter().next() {
            lines.push(format!(
                "USER: Is there {} {absent} in the room?",
                indefinite_article(&absent)
            ));
            if self.rng.chance(self.cfg.existence_error_rate) {
                lines.push(format!(
                    "ASSISTANT: Yes, there is {} {absent} in the room.",
                    indefinite_article(&absent)
                ));
            } else {
                lines.push(format!(
                    "ASSISTANT: I'm sorry, but I couldn't find {} {absent} in the room.",
                    indefinite_article(&absent)
                ));
            }
        }
        lines.join("\n")
    }

    fn describe(&mut self, node: &ObjectNode) -> String {
        let mut words: Vec<&str> = node.attributes.iter().take(2).map(String::as_str).collect();
        words.push(&node.label);
        let np = words.join(" ");
        match self.location_phrase(node) {
            Some(p) => format!("There is {} {np} {p}.", indefinite_article(&np)),
            None => format!("There is {} {np}.", indefinite_article(&np)),
        }
    }

    fn scene_caption(&mut self) -> String {
        let nodes: Vec<&ObjectNode> = self.graph.nodes().iter().take(6).collect();
        let mut sentences = vec!["In this scene, several objects are arranged around the room.".to_string()];
        for n in &nodes {
            sentences.push(self.describe(n));
        }
        format!("Thoughts: {}\n{}", refs(&nodes), sentences.join(" "))
    }

    fn object_caption(&mut self) -> String {
        let nodes = self.graph.nodes();
        let target = &nodes[self.rng.below(nodes.len())];
        let mut related = vec![target];
        for r in self.graph.relations().iter().filter(|r| r.subject_id == target.id) {
            if let Some(o) = self.graph.node(r.object_id) {
                related.push(o);
            }
        }
        let text = self.describe(target);
        format!("Thoughts: {}\n{}", refs(&related), text)
    }

    fn planning(&mut self) -> String {
        let nodes = self.graph.nodes();
        let picked: Vec<&ObjectNode> = self
            .rng
            .choose_indices(nodes.len(), nodes.len().min(5))
            .into_iter()
            .map(|i| &nodes[i])
            .collect();
        let mut lines = vec![
            format!("Thoughts: {}", refs(&picked)),
            "Task: tidy up the room".to_string(),
        ];
        for (i, n) in picked.iter().enumerate() {
            let step = match i % 3 {
                0 => format!("Walk to the {}.", n.label),
                1 => format!("Clean the surface of the {}.", n.label),
                _ => format!("Put things back next to the {}.", n.label),
            };
            lines.push(format!("{}. {step}", i + 1));
        }
        if self.rng.chance(self.cfg.id_leak_rate) {
            let n = picked[0];
            lines.push(format!(
                "{}. Check the {}-{} once more.",
                picked.len() + 1,
                n.label,
                n.id
            ));
        }
        lines.join("\n")
    }
}
