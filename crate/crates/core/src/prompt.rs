//! Scene-graph serialization and few-shot prompt assembly.
//!
//! Graph text grammar, one item per line:
//!
//! ```text
//! node     := LABEL "-" ID ":" [ " " ATTR { ", " ATTR } ]
//! relation := LABEL "-" ID " " PREDICATE " " LABEL "-" ID
//! ```
//!
//! Node lines come first, sorted by id, then relation lines sorted by
//! `(subject, predicate, object)`. Node lines always carry the colon and
//! relation lines never do, which keeps the two unambiguous.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatRequest, Role, Turn};
use crate::rng::SplitMix64;
use crate::scene_graph::{ObjectId, ObjectNode, Relation, SceneGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    SceneCaption,
    ObjectCaption,
    Qa,
    Dialogue,
    Planning,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::SceneCaption,
        TaskKind::ObjectCaption,
        TaskKind::Qa,
        TaskKind::Dialogue,
        TaskKind::Planning,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::SceneCaption => "scene_caption",
            TaskKind::ObjectCaption => "object_caption",
            TaskKind::Qa => "qa",
            TaskKind::Dialogue => "dialogue",
            TaskKind::Planning => "planning",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str() == s.replace('-', "_"))
            .ok_or_else(|| PromptError::UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("need {wanted} demonstrations for {task}, library has {available}")]
    InsufficientDemos {
        task: TaskKind,
        wanted: usize,
        available: usize,
    },
    #[error("{0} takes its instruction from the question or dialogue history, not a pool")]
    UnsupportedTask(TaskKind),
    #[error("unknown task kind {0:?}")]
    UnknownTask(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Parse(#[from] serde_json::Error),
}

pub fn node_token(label: &str, id: ObjectId) -> String {
    format!("{label}-{id}")
}

pub fn serialize_node(node: &ObjectNode) -> String {
    let head = node_token(&node.label, node.id);
    if node.attributes.is_empty() {
        format!("{head}:")
    } else {
        format!("{head}: {}", node.attributes.join(", "))
    }
}

pub fn serialize_graph(graph: &SceneGraph) -> String {
    let mut lines: Vec<String> = graph.nodes().iter().map(serialize_node).collect();
    for rel in graph.relations() {
        let (Some(s), Some(o)) = (graph.node(rel.subject_id), graph.node(rel.object_id)) else {
            continue;
        };
        lines.push(format!(
            "{} {} {}",
            node_token(&s.label, s.id),
            rel.predicate,
            node_token(&o.label, o.id)
        ));
    }
    lines.join("\n")
}

/// Recovers a graph from [`serialize_graph`] output. Lines that fit neither
/// production are skipped, so a serialized graph embedded in a longer prompt
/// still parses.
pub fn parse_serialized_graph(scene_id: &str, text: &str) -> Option<SceneGraph> {
    let mut nodes: BTreeMap<ObjectId, ObjectNode> = BTreeMap::new();
    let mut rel_lines = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some((head, attrs)) = line.split_once(':') {
            let Some((label, id)) = split_token(head) else { continue };
            let attributes = attrs
                .split(',')
                .map(str::trim)
                .filter(|a| !a.is_empty())
                .map(String::from)
                .collect();
            nodes.insert(
                id,
                ObjectNode {
                    id,
                    label: label.to_string(),
                    attributes,
                },
            );
        } else {
            rel_lines.push(line);
        }
    }
    let mut relations = Vec::new();
    for line in rel_lines {
        if let Some(rel) = parse_relation_line(line, &nodes) {
            relations.push(rel);
        }
    }
    SceneGraph::new(scene_id, None, nodes.into_values().collect(), relations).ok()
}

fn split_token(token: &str) -> Option<(&str, ObjectId)> {
    let (label, id) = token.trim().rsplit_once('-')?;
    let id = id.parse().ok()?;
    (!label.is_empty()).then_some((label, id))
}

fn parse_relation_line(line: &str, nodes: &BTreeMap<ObjectId, ObjectNode>) -> Option<Relation> {
    // subject token ends at the first "-<digits> "
    let bytes = line.as_bytes();
    let mut cut = None;
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'-' {
            let digits = bytes[i + 1..].iter().take_while(|c| c.is_ascii_digit()).count();
            if digits > 0 && bytes.get(i + 1 + digits) == Some(&b' ') {
                cut = Some(i + 1 + digits);
                break;
            }
        }
    }
    let cut = cut?;
    let (_, sid) = split_token(&line[..cut])?;
    let rest = &line[cut + 1..];
    let (before, oid) = rest.rsplit_once('-')?;
    let oid: ObjectId = oid.parse().ok()?;
    let olabel = &nodes.get(&oid)?.label;
    let predicate = before.strip_suffix(olabel.as_str())?.trim_end();
    nodes.get(&sid)?;
    Some(Relation::new(sid, predicate, oid))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub task: TaskKind,
    pub content: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoLibrary {
    demos: Vec<Demonstration>,
}

const DEFAULT_DEMOS: &str = include_str!("../data/demos.json");

impl Default for DemoLibrary {
    fn default() -> Self {
        Self::from_json(DEFAULT_DEMOS).expect("embedded demonstrations parse")
    }
}

impl DemoLibrary {
    pub fn new(demos: Vec<Demonstration>) -> Self {
        Self { demos }
    }

    pub fn from_json(text: &str) -> Result<Self, PromptError> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn for_task(&self, task: TaskKind) -> Vec<&Demonstration> {
        self.demos.iter().filter(|d| d.task == task).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoPair {
    pub content: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub task: TaskKind,
    pub system_text: String,
    pub demonstrations: Vec<DemoPair>,
    pub query_content: String,
}

impl PromptBundle {
    /// Demonstrations become alternating user/assistant turns ahead of the
    /// query.
    pub fn to_request(&self, temperature: f64, max_tokens: u32) -> ChatRequest {
        let mut turns = Vec::with_capacity(self.demonstrations.len() * 2 + 1);
        for d in &self.demonstrations {
            turns.push(Turn::new(Role::User, d.content.clone()));
            turns.push(Turn::new(Role::Assistant, d.response.clone()));
        }
        turns.push(Turn::new(Role::User, self.query_content.clone()));
        ChatRequest {
            system: self.system_text.clone(),
            turns,
            temperature,
            max_tokens,
        }
    }
}

/// Marker line identifying the task inside the system text.
pub const TASK_MARKER: &str = "Task type: ";

const PREAMBLE: &str = "You are an AI assistant that writes training data about 3D indoor scenes. \
Each scene is given as a scene graph. Every object appears on its own line as \"<label>-<id>: <attributes>\", \
followed by one line per spatial relation written as \"<label>-<id> <relation> <label>-<id>\". \
Use only what the scene graph states.";

const THOUGHTS_RULE: &str = "Before each answer, write a \"Thoughts:\" line listing the label and ID of every \
object candidate involved, as comma-separated \"<label>-<id>\" tokens. Object IDs may appear only on the \
Thoughts line, never in questions or answers. The Thoughts line will be removed afterwards.";

fn task_requirements(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Qa => {
            "Design several diverse question-answer pairs about the scene: object attributes, \
object counting, object existence, spatial relationships, object types, affordance and room type. \
Counting questions start with \"How many\" and existence questions start with \"Is there\"; both end with \
\"in the room\". Keep answers short.\n\
Response format, repeated for each pair and separated by a blank line:\n\
Thoughts: <label-id>, <label-id>\n\
Question: <question>\n\
Answer: <answer>"
        }
        TaskKind::Dialogue => {
            "Design a conversation between a person and an assistant who understands the \
scene and helps the person. Cover object attributes, spatial relations and commonsense topics, and include \
high-level goals such as searching for specific objects that need several rounds.\n\
Response format: first a \"Context:\" line describing the dialogue situation, then alternating turns:\n\
Context: <situation>\n\
USER: <question>\n\
Thoughts: <label-id>, <label-id>\n\
ASSISTANT: <answer>\n\
The Context line will be removed afterwards as well."
        }
        TaskKind::Planning => {
            "Propose one high-level task that can be carried out in this scene, then \
5-10 low-level steps in which the assistant interacts with objects in the scene.\n\
Response format:\n\
Thoughts: <label-id>, <label-id>\n\
Task: <high-level task>\n\
1. <step>\n\
2. <step>"
        }
        TaskKind::SceneCaption => {
            "Write a comprehensive description of the whole scene covering key \
objects, their attributes and spatial relationships, and the room type and style.\n\
Response format:\n\
Thoughts: <label-id>, <label-id>\n\
<caption>"
        }
        TaskKind::ObjectCaption => {
            "Pick one object and describe it together with its spatial \
relationships to adjacent objects. List the described object first on the Thoughts line.\n\
Response format:\n\
Thoughts: <label-id of the described object>, <label-id>\n\
<caption>"
        }
    }
}

pub fn system_text(task: TaskKind) -> String {
    format!(
        "{PREAMBLE}\n{TASK_MARKER}{task}\nRequirements:\n{}\n{THOUGHTS_RULE}",
        task_requirements(task)
    )
}

/// Reads the task back out of a system text produced by [`system_text`].
pub fn detect_task(system: &str) -> Option<TaskKind> {
    system
        .lines()
        .find_map(|l| l.strip_prefix(TASK_MARKER))
        .and_then(|t| t.trim().parse().ok())
}

pub fn build_prompt(
    task: TaskKind,
    graph: &SceneGraph,
    library: &DemoLibrary,
    n_demos: usize,
    seed: u64,
) -> Result<PromptBundle, PromptError> {
    let pool = library.for_task(task);
    if n_demos == 0 || pool.len() < n_demos {
        return Err(PromptError::InsufficientDemos {
            task,
            wanted: n_demos,
            available: pool.len(),
        });
    }
    let mut rng = SplitMix64::new(seed);
    let demonstrations = rng
        .choose_indices(pool.len(), n_demos)
        .into_iter()
        .map(|i| DemoPair {
            content: pool[i].content.clone(),
            response: pool[i].response.clone(),
        })
        .collect();
    Ok(PromptBundle {
        task,
        system_text: system_text(task),
        demonstrations,
        query_content: serialize_graph(graph),
    })
}

/// Instruction pools for the caption and planning tasks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionPools {
    pub object_caption: Vec<String>,
    pub scene_caption: Vec<String>,
    pub planning: Vec<String>,
}

const DEFAULT_POOLS: &str = include_str!("../data/instructions.json");

impl Default for InstructionPools {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_POOLS).expect("embedded instruction pools parse")
    }
}

impl InstructionPools {
    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Appends extra entries, e.g. from a config file.
    pub fn extend(&mut self, other: InstructionPools) {
        self.object_caption.extend(other.object_caption);
        self.scene_caption.extend(other.scene_caption);
        self.planning.extend(other.planning);
    }

    pub fn pool(&self, task: TaskKind) -> Result<&[String], PromptError> {
        match task {
            TaskKind::ObjectCaption => Ok(&self.object_caption),
            TaskKind::SceneCaption => Ok(&self.scene_caption),
            TaskKind::Planning => Ok(&self.planning),
            TaskKind::Qa | TaskKind::Dialogue => Err(PromptError::UnsupportedTask(task)),
        }
    }

    pub fn instruction_for(&self, task: TaskKind, seed: u64) -> Result<&str, PromptError> {
        let pool = self.pool(task)?;
        if pool.is_empty() {
            return Err(PromptError::UnsupportedTask(task));
        }
        Ok(&pool[SplitMix64::new(seed).below(pool.len())])
    }
}

pub fn instruction_for(task: TaskKind, seed: u64) -> Result<String, PromptError> {
    InstructionPools::default()
        .instruction_for(task, seed)
        .map(String::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph() -> SceneGraph {
        SceneGraph::new(
            "s",
            None,
            vec![
                ObjectNode {
                    id: 3,
                    label: "chair".into(),
                    attributes: vec!["wooden".into(), "brown".into()],
                },
                ObjectNode {
                    id: 7,
                    label: "dining table".into(),
                    attributes: vec![],
                },
            ],
            vec![Relation::new(3, "close to", 7)],
        )
        .unwrap()
    }

    #[test]
    fn node_and_relation_lines() {
        let text = serialize_graph(&graph());
        assert_eq!(
            text,
            "chair-3: wooden, brown\ndining table-7:\nchair-3 close to dining table-7"
        );
    }

    #[test]
    fn serialized_graph_parses_back() {
        let g = graph();
        assert_eq!(parse_serialized_graph("s", &serialize_graph(&g)).unwrap(), g);
    }

    #[test]
    fn zero_demos_is_insufficient() {
        let err = build_prompt(TaskKind::SceneCaption, &graph(), &DemoLibrary::default(), 0, 1).unwrap_err();
        assert!(matches!(err, PromptError::InsufficientDemos { .. }));
        let err = build_prompt(TaskKind::SceneCaption, &graph(), &DemoLibrary::default(), 99, 1).unwrap_err();
        assert!(matches!(err, PromptError::InsufficientDemos { available: 3, .. }));
    }

    #[test]
    fn qa_prompt_mandates_thoughts_and_is_deterministic() {
        let lib = DemoLibrary::default();
        let a = build_prompt(TaskKind::Qa, &graph(), &lib, 2, 1).unwrap();
        let b = build_prompt(TaskKind::Qa, &graph(), &lib, 2, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.demonstrations.len(), 2);
        assert!(a.system_text.contains("\"Thoughts:\""));
        assert!(a.system_text.contains("label and ID"));
        assert_eq!(detect_task(&a.system_text), Some(TaskKind::Qa));
    }

    #[test]
    fn pools_reject_qa_and_dialogue() {
        assert!(matches!(
            instruction_for(TaskKind::Qa, 0),
            Err(PromptError::UnsupportedTask(_))
        ));
        assert!(matches!(
            instruction_for(TaskKind::Dialogue, 0),
            Err(PromptError::UnsupportedTask(_))
        ));
    }

    #[test]
    fn first_pool_entries() {
        let pools = InstructionPools::default();
        let seed_for_first = |task| {
            (0..10_000u64)
                .find(|&s| SplitMix64::new(s).below(pools.pool(task).unwrap().len()) == 0)
                .unwrap()
        };
        let s = seed_for_first(TaskKind::SceneCaption);
        assert_eq!(
            instruction_for(TaskKind::SceneCaption, s).unwrap(),
            "Describe this scene."
        );
        let s = seed_for_first(TaskKind::Planning);
        assert_eq!(instruction_for(TaskKind::Planning, s).unwrap(), "Plan for the task");
        assert_eq!(pools.object_caption.len(), 17);
    }
}
