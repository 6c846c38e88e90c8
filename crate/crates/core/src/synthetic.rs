//! Seeded random indoor scene graphs for tests and benchmarks.

use std::collections::BTreeSet;

use crate::rng::SplitMix64;
use crate::scene_graph::{ObjectNode, Relation, SceneGraph};

pub const LABELS: &[&str] = &[
    "chair",
    "table",
    "bed",
    "lamp",
    "pillow",
    "sofa",
    "cabinet",
    "shelf",
    "desk",
    "window",
    "door",
    "curtain",
    "picture",
    "plant",
    "trash can",
    "mirror",
    "towel",
    "sink",
    "toilet",
    "monitor",
    "keyboard",
    "box",
    "bag",
    "clock",
    "rug",
    "stool",
    "bench",
    "book",
    "bottle",
    "cup",
    "nightstand",
    "wardrobe",
    "radiator",
    "fan",
    "basket",
    "vase",
    "couch",
    "armchair",
    "printer",
    "bucket",
];

const ATTRIBUTES: &[&str] = &[
    "wooden", "white", "black", "brown", "gray", "blue", "red", "small", "large", "soft", "metal", "plastic", "round",
    "square", "tall", "old", "new", "striped",
];

const PREDICATES: &[&str] = &[
    "close by",
    "next to",
    "standing on",
    "attached to",
    "behind",
    "in front of",
    "left",
    "right",
    "above",
    "lying on",
    "hanging on",
];

const ROOMS: &[&str] = &["bedroom", "kitchen", "living room", "bathroom", "office"];

#[derive(Debug, Clone, Copy)]
pub struct SyntheticSpec {
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Expected relations per node.
    pub relation_density: f64,
    /// Distinct labels drawn per scene, at most `LABELS.len()`.
    pub max_labels: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            min_nodes: 6,
            max_nodes: 40,
            relation_density: 1.2,
            max_labels: 14,
        }
    }
}

pub fn random_graph(scene_id: &str, spec: SyntheticSpec, seed: u64) -> SceneGraph {
    let mut rng = SplitMix64::new(seed);
    let span = spec.max_nodes.saturating_sub(spec.min_nodes) + 1;
    let n = (spec.min_nodes + rng.below(span)).max(1);
    let n_labels = 1 + rng.below(spec.max_labels.clamp(1, LABELS.len()));
    let palette: Vec<&str> = rng
        .choose_indices(LABELS.len(), n_labels)
        .into_iter()
        .map(|i| LABELS[i])
        .collect();
    let nodes: Vec<ObjectNode> = (0..n)
        .map(|i| {
            let n_attr = rng.below(3);
            let attributes = rng
                .choose_indices(ATTRIBUTES.len(), n_attr)
                .into_iter()
                .map(|a| ATTRIBUTES[a].to_string())
                .collect();
            ObjectNode {
                id: i as u32 + 1,
                label: palette[rng.below(palette.len())].to_string(),
                attributes,
            }
        })
        .collect();
    let mut relations = BTreeSet::new();
    if n > 1 {
        let target = (n as f64 * spec.relation_density).round() as usize;
        for _ in 0..target {
            let s = rng.below(n) as u32 + 1;
            let o = rng.below(n) as u32 + 1;
            if s != o {
                relations.insert(Relation::new(s, PREDICATES[rng.below(PREDICATES.len())], o));
            }
        }
    }
    let room = ROOMS[rng.below(ROOMS.len())].to_string();
    SceneGraph::new(scene_id, Some(room), nodes, relations.into_iter().collect())
        .expect("synthetic graphs are valid by construction")
}

/// `count` graphs named `{prefix}{index:04}`.
pub fn random_scenes(prefix: &str, count: usize, spec: SyntheticSpec, seed: u64) -> Vec<SceneGraph> {
    (0..count)
        .map(|i| {
            random_graph(
                &format!("{prefix}{i:04}"),
                spec,
                seed.wrapping_add(i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            )
        })
        .collect()
}
