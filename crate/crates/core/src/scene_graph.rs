//! Scene-graph data model and canonical JSON ingestion.
//!
//! A [`SceneGraph`] is the ground truth every downstream stage queries:
//! prompting serializes it, refinement counts labels in it, balancing draws
//! absent labels against it. Graphs are immutable after loading.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ObjectId = u32;

#[derive(Debug, Error)]
pub enum SceneGraphError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scene graph JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("unknown object id {0}")]
    UnknownId(ObjectId),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectNode {
    pub id: ObjectId,
    pub label: String,
    #[serde(default)]
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Relation {
    #[serde(rename = "subject")]
    pub subject_id: ObjectId,
    pub predicate: String,
    #[serde(rename = "object")]
    pub object_id: ObjectId,
}

impl Relation {
    pub fn new(subject_id: ObjectId, predicate: impl Into<String>, object_id: ObjectId) -> Self {
        Self {
            subject_id,
            predicate: predicate.into(),
            object_id,
        }
    }

    fn sort_key(&self) -> (ObjectId, &str, ObjectId) {
        (self.subject_id, self.predicate.as_str(), self.object_id)
    }
}

/// Wire form; every field of the canonical schema is required.
#[derive(Serialize, Deserialize)]
struct RawSceneGraph {
    scene_id: String,
    room_type: Option<String>,
    nodes: Vec<ObjectNode>,
    relations: Vec<Relation>,
}

/// Validated scene graph. Nodes are kept sorted by id and relations sorted by
/// `(subject, predicate, object)`, so equality is set equality.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSceneGraph", into = "RawSceneGraph")]
pub struct SceneGraph {
    scene_id: String,
    room_type: Option<String>,
    nodes: Vec<ObjectNode>,
    relations: Vec<Relation>,
}

impl TryFrom<RawSceneGraph> for SceneGraph {
    type Error = SceneGraphError;

    fn try_from(raw: RawSceneGraph) -> Result<Self, Self::Error> {
        SceneGraph::new(raw.scene_id, raw.room_type, raw.nodes, raw.relations)
    }
}

impl From<SceneGraph> for RawSceneGraph {
    fn from(g: SceneGraph) -> Self {
        RawSceneGraph {
            scene_id: g.scene_id,
            room_type: g.room_type,
            nodes: g.nodes,
            relations: g.relations,
        }
    }
}

impl SceneGraph {
    pub fn new(
        scene_id: impl Into<String>,
        room_type: Option<String>,
        mut nodes: Vec<ObjectNode>,
        mut relations: Vec<Relation>,
    ) -> Result<Self, SceneGraphError> {
        let schema = |msg: String| Err(SceneGraphError::Schema(msg));
        if nodes.is_empty() {
            return schema("scene graph has no nodes".into());
        }
        nodes.sort_by_key(|n| n.id);
        for pair in nodes.windows(2) {
            if pair[0].id == pair[1].id {
                return schema(format!("duplicate object id {}", pair[0].id));
            }
        }
        for node in &nodes {
            if node.id == 0 {
                return schema("object ids must be positive".into());
            }
            if node.label.trim().is_empty() {
                return schema(format!("object {} has an empty label", node.id));
            }
            if node.label != node.label.to_lowercase() {
                return schema(format!("object {} label {:?} is not lowercase", node.id, node.label));
            }
        }
        let ids: BTreeSet<ObjectId> = nodes.iter().map(|n| n.id).collect();
        for rel in &relations {
            for end in [rel.subject_id, rel.object_id] {
                if !ids.contains(&end) {
                    return schema(format!(
                        "relation {:?} references missing object {}",
                        rel.predicate, end
                    ));
                }
            }
            if rel.subject_id == rel.object_id {
                return schema(format!(
                    "relation {:?} is a self-loop on {}",
                    rel.predicate, rel.subject_id
                ));
            }
            if rel.predicate.trim().is_empty() {
                return schema("relation with empty predicate".into());
            }
        }
        relations.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        relations.dedup();
        Ok(Self {
            scene_id: scene_id.into(),
            room_type,
            nodes,
            relations,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self, SceneGraphError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let raw: RawSceneGraph = serde_json::from_value(value).map_err(|e| SceneGraphError::Schema(e.to_string()))?;
        raw.try_into()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene graph serializes")
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    pub fn room_type(&self) -> Option<&str> {
        self.room_type.as_deref()
    }

    pub fn nodes(&self) -> &[ObjectNode] {
        &self.nodes
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn node(&self, id: ObjectId) -> Option<&ObjectNode> {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn count_by_label(&self, label: &str) -> usize {
        let wanted = normalize_label(label);
        if wanted.is_empty() {
            return 0;
        }
        self.nodes
            .iter()
            .filter(|n| normalize_label(&n.label) == wanted)
            .count()
    }

    pub fn exists(&self, label: &str) -> bool {
        self.count_by_label(label) > 0
    }

    /// Relations touching `id`, in `(subject, predicate, object)` order.
    pub fn relations_of(&self, id: ObjectId) -> Result<Vec<&Relation>, SceneGraphError> {
        if self.node(id).is_none() {
            return Err(SceneGraphError::UnknownId(id));
        }
        Ok(self
            .relations
            .iter()
            .filter(|r| r.subject_id == id || r.object_id == id)
            .collect())
    }

    /// Distinct normalized labels with their node counts.
    pub fn label_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for n in &self.nodes {
            *out.entry(normalize_label(&n.label)).or_insert(0) += 1;
        }
        out
    }

    /// Keeps only `keep` nodes and the relations whose endpoints both survive.
    pub(crate) fn induced(&self, keep: &BTreeSet<ObjectId>) -> SceneGraph {
        SceneGraph {
            scene_id: self.scene_id.clone(),
            room_type: self.room_type.clone(),
            nodes: self.nodes.iter().filter(|n| keep.contains(&n.id)).cloned().collect(),
            relations: self
                .relations
                .iter()
                .filter(|r| keep.contains(&r.subject_id) && keep.contains(&r.object_id))
                .cloned()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GraphFormat {
    #[default]
    CanonicalJson,
}

pub fn load_scene_graph(path: &Path, format: GraphFormat) -> Result<SceneGraph, SceneGraphError> {
    let GraphFormat::CanonicalJson = format;
    let text = fs::read_to_string(path).map_err(|source| SceneGraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    SceneGraph::from_json_str(&text)
}

/// Loads every `*.json` file under `dir` (non-recursive), sorted by file name.
pub fn load_scene_dir(dir: &Path) -> Result<Vec<SceneGraph>, SceneGraphError> {
    let io = |source| SceneGraphError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| load_scene_graph(p, GraphFormat::CanonicalJson))
        .collect()
}

/// Scene graphs indexed by scene id.
pub type SceneSet = BTreeMap<String, SceneGraph>;

pub fn index_scenes(graphs: impl IntoIterator<Item = SceneGraph>) -> SceneSet {
    graphs.into_iter().map(|g| (g.scene_id.clone(), g)).collect()
}

const IRREGULAR_PLURALS: &[(&str, &str)] = &[
    ("shelves", "shelf"),
    ("knives", "knife"),
    ("leaves", "leaf"),
    ("people", "person"),
    ("feet", "foot"),
];

/// Lowercase, collapse whitespace, singularize the head (last) word.
pub fn normalize_label(label: &str) -> String {
    let lowered = label.to_lowercase();
    let mut words: Vec<&str> = lowered.split_whitespace().collect();
    let Some(last) = words.pop() else {
        return String::new();
    };
    let head = singularize(last);
    words.push(&head);
    words.join(" ")
}

pub fn singularize(word: &str) -> String {
    if let Some((_, s)) = IRREGULAR_PLURALS.iter().find(|(p, _)| *p == word) {
        return (*s).to_string();
    }
    for suffix in ["ches", "shes", "sses", "xes", "zes"] {
        if word.len() > suffix.len() && word.ends_with(suffix) {
            return word[..word.len() - 2].to_string();
        }
    }
    if word.len() > 3 && word.ends_with("ies") {
        return format!("{}y", &word[..word.len() - 3]);
    }
    if word.len() > 1 && word.ends_with('s') && !word.ends_with("ss") && !word.ends_with("us") {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

/// Inverse of [`singularize`] on the head word, for generating questions.
pub fn pluralize(label: &str) -> String {
    let lowered = label.to_lowercase();
    let (prefix, last) = match lowered.rsplit_once(' ') {
        Some((p, l)) => (format!("{p} "), l.to_string()),
        None => (String::new(), lowered.clone()),
    };
    let plural = if let Some((p, _)) = IRREGULAR_PLURALS.iter().find(|(_, s)| *s == last) {
        (*p).to_string()
    } else if ["ch", "sh", "ss", "x", "z"].iter().any(|s| last.ends_with(s)) {
        format!("{last}es")
    } else if last.ends_with('y') && !last.ends_with("ey") && !last.ends_with("ay") && !last.ends_with("oy") {
        format!("{}ies", &last[..last.len() - 1])
    } else {
        format!("{last}s")
    };
    format!("{prefix}{plural}")
}

/// "a" or "an" for a following noun phrase.
pub fn indefinite_article(noun: &str) -> &'static str {
    match noun.trim_start().chars().next() {
        Some(c) if "aeiouAEIOU".contains(c) => "an",
        _ => "a",
    }
}
