//! Subgraph sampling for prompt diversity.
//!
//! A sampling rate is the fraction of nodes kept. Larger scenes sweep a wider
//! range of rates; each rate is drawn under four consecutive seeds.

use std::borrow::Cow;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;
use crate::scene_graph::{SceneGraph, SceneSet};

/// Number of seeds swept per sampling rate.
pub const SEEDS_PER_RATE: u64 = 4;

/// Scenes smaller than the first bracket are never sampled.
pub const MIN_SAMPLED_NODES: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("rate {0} is outside (0, 1]")]
    RateOutOfRange(f64),
    #[error("bracket starting at {0} has no rates")]
    EmptyBracket(usize),
    #[error("brackets must start at {MIN_SAMPLED_NODES} and be contiguous; gap or overlap at {0}")]
    NotAPartition(usize),
    #[error("the last bracket must be open-ended")]
    BoundedTail,
}

/// Half-open node-count interval `[min_nodes, max_nodes)`; `max_nodes = None`
/// is unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBracket {
    pub min_nodes: usize,
    pub max_nodes: Option<usize>,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingPolicy {
    pub rate_table: Vec<RateBracket>,
    pub seed: u64,
}

fn bracket(min: usize, max: Option<usize>, rates: &[f64]) -> RateBracket {
    RateBracket {
        min_nodes: min,
        max_nodes: max,
        rates: rates.to_vec(),
    }
}

impl Default for SamplingPolicy {
    fn default() -> Self {
        Self {
            rate_table: vec![
                bracket(10, Some(20), &[0.8, 0.9]),
                bracket(20, Some(30), &[0.7, 0.8, 0.9]),
                bracket(30, Some(40), &[0.6, 0.7, 0.8, 0.9]),
                bracket(40, Some(50), &[0.6, 0.7, 0.8, 0.9]),
                bracket(50, Some(60), &[0.5, 0.6, 0.7, 0.8, 0.9]),
                bracket(60, Some(70), &[0.5, 0.6, 0.7, 0.8, 0.9]),
                bracket(70, None, &[0.4, 0.5, 0.6, 0.7, 0.8, 0.9]),
            ],
            seed: 0,
        }
    }
}

impl SamplingPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let mut expected_start = MIN_SAMPLED_NODES;
        for (i, b) in self.rate_table.iter().enumerate() {
            if b.min_nodes != expected_start {
                return Err(PolicyError::NotAPartition(b.min_nodes));
            }
            if b.rates.is_empty() {
                return Err(PolicyError::EmptyBracket(b.min_nodes));
            }
            if let Some(&bad) = b.rates.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
                return Err(PolicyError::RateOutOfRange(bad));
            }
            match b.max_nodes {
                Some(max) if max > b.min_nodes => expected_start = max,
                Some(max) => return Err(PolicyError::NotAPartition(max)),
                None if i + 1 == self.rate_table.len() => return Ok(()),
                None => return Err(PolicyError::NotAPartition(b.min_nodes)),
            }
        }
        Err(PolicyError::BoundedTail)
    }

    pub fn rates_for(&self, node_count: usize) -> Vec<f64> {
        self.rate_table
            .iter()
            .find(|b| node_count >= b.min_nodes && b.max_nodes.is_none_or(|m| node_count < m))
            .map(|b| b.rates.clone())
            .unwrap_or_else(|| vec![1.0])
    }
}

/// `max(1, floor(rate * n))`. The small epsilon absorbs representation error
/// such as `0.6 * 35 = 20.999999999999996`.
pub fn preserved_count(rate: f64, n: usize) -> usize {
    ((rate * n as f64 + 1e-9).floor() as usize).clamp(1, n.max(1))
}

/// Keeps a uniform seeded subset of nodes plus the relations between them.
pub fn sample_subgraph(graph: &SceneGraph, rate: f64, seed: u64) -> SceneGraph {
    let n = graph.nodes().len();
    let keep_n = preserved_count(rate, n);
    if keep_n == n {
        return graph.clone();
    }
    let mut rng = SplitMix64::new(seed);
    let keep: BTreeSet<_> = rng
        .choose_indices(n, keep_n)
        .into_iter()
        .map(|i| graph.nodes()[i].id)
        .collect();
    graph.induced(&keep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledGraph {
    pub rate: f64,
    pub seed: u64,
    pub graph: SceneGraph,
}

impl SampledGraph {
    /// Stable scene id for the sample, e.g. `scene0~r0.8~s7`.
    pub fn derived_scene_id(&self) -> String {
        format!("{}~r{:.1}~s{}", self.graph.scene_id(), self.rate, self.seed)
    }
}

/// Splits a derived id back into `(source id, rate, seed)`.
pub fn parse_derived_id(id: &str) -> Option<(&str, f64, u64)> {
    let (rest, seed) = id.rsplit_once("~s")?;
    let (source, rate) = rest.rsplit_once("~r")?;
    Some((source, rate.parse().ok()?, seed.parse().ok()?))
}

/// Looks a scene up by id, rebuilding sampled subgraphs from their source.
pub fn resolve_scene<'a>(scenes: &'a SceneSet, id: &str) -> Option<Cow<'a, SceneGraph>> {
    if let Some(g) = scenes.get(id) {
        return Some(Cow::Borrowed(g));
    }
    let (source, rate, seed) = parse_derived_id(id)?;
    Some(Cow::Owned(sample_subgraph(scenes.get(source)?, rate, seed)))
}

/// One subgraph per (rate, seed) with seeds `policy.seed + 0..4`.
pub fn sweep(graph: &SceneGraph, policy: &SamplingPolicy) -> Vec<SampledGraph> {
    let mut out = Vec::new();
    for rate in policy.rates_for(graph.nodes().len()) {
        for k in 0..SEEDS_PER_RATE {
            let seed = policy.seed.wrapping_add(k);
            out.push(SampledGraph {
                rate,
                seed,
                graph: sample_subgraph(graph, rate, seed),
            });
        }
    }
    out
}
