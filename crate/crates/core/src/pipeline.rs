//! Stage drivers: generate, refine and emit over whole scene sets.
//!
//! Every stage maps an ordered input list to an ordered output list, so the
//! worker count never changes the output.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::assessor::QaPair;
use crate::emitter::{dialogue_instruction, make_record, EmitError, GenRecord, Provenance, RecordMeta, RecordTask};
use crate::llm::{complete, request_hash, ChatBackend, LlmError};
use crate::ocot::{detect_ids, parse, parse_qa_batch, Body, DialogueTurn, ObjectRef, OcotError};
use crate::prompt::{build_prompt, DemoLibrary, InstructionPools, PromptError, TaskKind};
use crate::question::NumberStyle;
use crate::refiner::{RefineAction, RefineError, RefinementVerdict, Refiner};
use crate::rng::seed_from_bytes;
use crate::sampler::{resolve_scene, sweep, SamplingPolicy};
use crate::scene_graph::{SceneGraph, SceneSet};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    Emit(#[from] EmitError),
    #[error("item {item} refers to unknown scene {scene:?}")]
    UnknownScene { item: String, scene: String },
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedItem {
    pub id: String,
    /// Scene whose full graph is the ground truth.
    pub scene_id: String,
    /// Graph actually shown in the prompt; differs for sampled subgraphs.
    pub source_id: String,
    pub task: TaskKind,
    pub prompt_hash: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub turns: Vec<DialogueTurn>,
    pub thoughts: Vec<ObjectRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub task: TaskKind,
    pub n_demos: usize,
    pub seed: u64,
    pub temperature: f64,
    pub max_tokens: u32,
    pub jobs: usize,
    pub policy: SamplingPolicy,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenerateOutput {
    pub items: Vec<GeneratedItem>,
    pub requests: usize,
    pub skipped: usize,
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))
}

/// Scene captions and plans are prompted with sampled subgraphs; the other
/// tasks see the full graph.
fn prompt_graphs(graph: &SceneGraph, task: TaskKind, policy: &SamplingPolicy) -> Vec<(String, SceneGraph)> {
    match task {
        TaskKind::SceneCaption | TaskKind::Planning => sweep(graph, policy)
            .into_iter()
            .map(|s| (s.derived_scene_id(), s.graph))
            .collect(),
        _ => vec![(graph.scene_id().to_string(), graph.clone())],
    }
}

enum Unit {
    Items(Vec<GeneratedItem>),
    Skipped,
}

fn split_plan(text: &str) -> (Option<String>, String) {
    let mut lines = text.lines();
    match lines.next().and_then(|l| l.trim().strip_prefix("Task:")) {
        Some(task) => (
            Some(task.trim().trim_end_matches('.').to_string()),
            lines.collect::<Vec<_>>().join("\n"),
        ),
        None => (None, text.to_string()),
    }
}

#[allow(clippy::too_many_arguments)]
fn generate_one(
    scene_id: &str,
    source_id: &str,
    graph: &SceneGraph,
    opts: &GenerateOptions,
    demos: &DemoLibrary,
    pools: &InstructionPools,
    backend: &dyn ChatBackend,
) -> Result<Unit, PipelineError> {
    let task = opts.task;
    let seed = seed_from_bytes(format!("{source_id}/{task}").as_bytes()) ^ opts.seed;
    let bundle = build_prompt(task, graph, demos, opts.n_demos, seed)?;
    let request = bundle.to_request(opts.temperature, opts.max_tokens);
    let prompt_hash = request_hash(&request);
    let raw = match complete(&request, backend) {
        Ok(r) => r.text,
        Err(LlmError::Refusal(m)) => {
            warn!(source_id, reason = %m, "backend refused; scene skipped");
            return Ok(Unit::Skipped);
        }
        Err(e) => return Err(e.into()),
    };
    let base = |k: usize| GeneratedItem {
        id: format!("{source_id}/{task}/{k:03}"),
        scene_id: scene_id.to_string(),
        source_id: source_id.to_string(),
        task,
        prompt_hash: prompt_hash.clone(),
        seed,
        instruction: None,
        question: None,
        answer: None,
        turns: Vec::new(),
        thoughts: Vec::new(),
        context: None,
    };
    let grammar = |e: OcotError| {
        warn!(source_id, error = %e, "unparseable response; scene skipped");
        Unit::Skipped
    };
    let items = match task {
        TaskKind::Qa => match parse_qa_batch(&raw) {
            Ok(blocks) => blocks
                .into_iter()
                .enumerate()
                .filter_map(|(k, p)| {
                    let Body::Text(answer) = p.body else { return None };
                    Some(GeneratedItem {
                        question: Some(p.question?),
                        answer: Some(answer),
                        thoughts: p.thoughts,
                        ..base(k)
                    })
                })
                .collect(),
            Err(e) => return Ok(grammar(e)),
        },
        TaskKind::Dialogue => match parse(&raw, task) {
            Ok(p) => {
                let Body::Turns(turns) = p.body else {
                    return Ok(Unit::Skipped);
                };
                vec![GeneratedItem {
                    turns,
                    thoughts: p.thoughts,
                    context: p.context,
                    ..base(0)
                }]
            }
            Err(e) => return Ok(grammar(e)),
        },
        _ => match parse(&raw, task) {
            Ok(p) => {
                let Body::Text(text) = p.body else {
                    return Ok(Unit::Skipped);
                };
                let lead = pools.instruction_for(task, seed)?.to_string();
                let (instruction, answer) = if task == TaskKind::Planning {
                    match split_plan(&text) {
                        (Some(goal), steps) => (format!("{lead}: {goal}."), steps),
                        (None, steps) => (lead, steps),
                    }
                } else {
                    (lead, text)
                };
                vec![GeneratedItem {
                    instruction: Some(instruction),
                    answer: Some(answer),
                    thoughts: p.thoughts,
                    ..base(0)
                }]
            }
            Err(e) => return Ok(grammar(e)),
        },
    };
    Ok(Unit::Items(items))
}

pub fn generate(
    scenes: &SceneSet,
    opts: &GenerateOptions,
    demos: &DemoLibrary,
    pools: &InstructionPools,
    backend: &dyn ChatBackend,
) -> Result<GenerateOutput, PipelineError> {
    let units: Vec<(&str, String, SceneGraph)> = scenes
        .iter()
        .flat_map(|(id, g)| {
            prompt_graphs(g, opts.task, &opts.policy)
                .into_iter()
                .map(move |(src, sg)| (id.as_str(), src, sg))
        })
        .collect();
    let results: Vec<Result<Unit, PipelineError>> = pool(opts.jobs)?.install(|| {
        units
            .par_iter()
            .map(|(scene, src, g)| generate_one(scene, src, g, opts, demos, pools, backend))
            .collect()
    });
    let mut out = GenerateOutput {
        requests: units.len(),
        ..GenerateOutput::default()
    };
    for r in results {
        match r? {
            Unit::Items(items) => out.items.extend(items),
            Unit::Skipped => out.skipped += 1,
        }
    }
    info!(task = %opts.task, requests = out.requests, items = out.items.len(), skipped = out.skipped, "generation finished");
    Ok(out)
}

/// One refined training example. Dialogue turns are flattened, each carrying
/// the kept history before it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinedItem {
    pub id: String,
    pub scene_id: String,
    pub task: TaskKind,
    pub instruction: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    pub prompt_hash: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verdict_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_object: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RefineOutput {
    pub items: Vec<RefinedItem>,
    pub verdicts: Vec<RefinementVerdict>,
}

struct Ledger<'a> {
    item: &'a str,
    verdicts: Vec<RefinementVerdict>,
}

impl Ledger<'_> {
    fn push(&mut self, mut v: RefinementVerdict) -> (String, Option<String>) {
        let id = format!("{}#v{}", self.item, self.verdicts.len());
        v.id = id.clone();
        let text = v.final_text().map(str::to_string);
        self.verdicts.push(v);
        (id, text)
    }
}

fn refine_item(
    item: &GeneratedItem,
    graph: &SceneGraph,
    refiner: &Refiner,
    rewriter: Option<&dyn ChatBackend>,
) -> Result<RefineOutput, PipelineError> {
    let mut ledger = Ledger {
        item: &item.id,
        verdicts: Vec::new(),
    };
    let mut items = Vec::new();
    let base =
        |id: String, instruction: String, response: String, question: Option<String>, vids: Vec<String>| RefinedItem {
            id,
            scene_id: item.scene_id.clone(),
            task: item.task,
            instruction,
            response,
            question,
            prompt_hash: item.prompt_hash.clone(),
            seed: item.seed,
            verdict_ids: vids,
            target_object: None,
        };
    // Questions that leak ids are cleaned like free text first.
    let clean_question = |q: &str, ledger: &mut Ledger| -> Result<Option<(String, Vec<String>)>, PipelineError> {
        if detect_ids(q).is_empty() {
            return Ok(Some((q.to_string(), Vec::new())));
        }
        let (vid, text) = ledger.push(refiner.refine_text(q, graph, rewriter)?);
        Ok(text.map(|t| (t, vec![vid])))
    };
    match item.task {
        TaskKind::Qa => {
            let (Some(q), Some(a)) = (&item.question, &item.answer) else {
                return Ok(RefineOutput::default());
            };
            if let Some((q, mut vids)) = clean_question(q, &mut ledger)? {
                let (vid, text) = ledger.push(refiner.refine(&q, a, graph, rewriter, NumberStyle::Words)?);
                vids.push(vid);
                if let Some(t) = text {
                    items.push(base(item.id.clone(), q.clone(), t, Some(q), vids));
                }
            }
        }
        TaskKind::Dialogue => {
            let mut history: Vec<(String, String)> = Vec::new();
            for (k, turn) in item.turns.iter().enumerate() {
                let Some((q, mut vids)) = clean_question(&turn.user, &mut ledger)? else {
                    continue;
                };
                let (vid, text) =
                    ledger.push(refiner.refine(&q, &turn.assistant, graph, rewriter, NumberStyle::Digits)?);
                vids.push(vid);
                let Some(answer) = text else { continue };
                let instruction = dialogue_instruction(&history, &q);
                items.push(base(
                    format!("{}/t{k}", item.id),
                    instruction,
                    answer.clone(),
                    Some(q.clone()),
                    vids,
                ));
                history.push((q, answer));
            }
        }
        _ => {
            let (Some(instr), Some(text)) = (&item.instruction, &item.answer) else {
                return Ok(RefineOutput::default());
            };
            let (vid, revised) = ledger.push(refiner.refine_text(text, graph, rewriter)?);
            if let Some(t) = revised.filter(|t| !t.trim().is_empty()) {
                let mut r = base(item.id.clone(), instr.clone(), t, None, vec![vid]);
                if item.task == TaskKind::ObjectCaption {
                    r.target_object = item.thoughts.first().map(|o| o.id);
                }
                items.push(r);
            }
        }
    }
    Ok(RefineOutput {
        items,
        verdicts: ledger.verdicts,
    })
}

pub fn refine_items(
    items: &[GeneratedItem],
    scenes: &SceneSet,
    refiner: &Refiner,
    rewriter: Option<&dyn ChatBackend>,
    jobs: usize,
) -> Result<RefineOutput, PipelineError> {
    let results: Vec<Result<RefineOutput, PipelineError>> = pool(jobs)?.install(|| {
        items
            .par_iter()
            .map(|item| {
                let graph = resolve_scene(scenes, &item.scene_id).ok_or_else(|| PipelineError::UnknownScene {
                    item: item.id.clone(),
                    scene: item.scene_id.clone(),
                })?;
                refine_item(item, &graph, refiner, rewriter)
            })
            .collect()
    });
    let mut out = RefineOutput::default();
    for r in results {
        let r = r?;
        out.items.extend(r.items);
        out.verdicts.extend(r.verdicts);
    }
    let dropped = out
        .verdicts
        .iter()
        .filter(|v| v.action == RefineAction::Dropped)
        .count();
    info!(
        input = items.len(),
        kept = out.items.len(),
        dropped,
        "refinement finished"
    );
    Ok(out)
}

pub fn emit_items(
    items: &[RefinedItem],
    image_tokens: u32,
    object_tokens: u32,
) -> Result<Vec<GenRecord>, PipelineError> {
    items
        .iter()
        .map(|it| {
            let meta = RecordMeta {
                image_tokens,
                object_tokens,
                provenance: Provenance {
                    prompt_hash: Some(it.prompt_hash.clone()),
                    verdict_ids: it.verdict_ids.clone(),
                    seeds: vec![it.seed],
                    target_object: it.target_object,
                },
            };
            make_record(
                RecordTask::from(it.task),
                &it.scene_id,
                &it.instruction,
                &it.response,
                meta,
            )
            .map_err(PipelineError::from)
        })
        .collect()
}

/// Stage outputs that carry question/answer pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StageItem {
    Refined(RefinedItem),
    Generated(GeneratedItem),
}

pub fn qa_pairs(items: &[StageItem]) -> Vec<QaPair> {
    let mut out = Vec::new();
    for it in items {
        match it {
            StageItem::Refined(r) => {
                if let Some(q) = &r.question {
                    out.push(QaPair {
                        question: q.clone(),
                        answer: r.response.clone(),
                        scene_id: r.scene_id.clone(),
                    });
                }
            }
            StageItem::Generated(g) => {
                if let (Some(q), Some(a)) = (&g.question, &g.answer) {
                    out.push(QaPair {
                        question: q.clone(),
                        answer: a.clone(),
                        scene_id: g.scene_id.clone(),
                    });
                }
                out.extend(g.turns.iter().map(|t| QaPair {
                    question: t.user.clone(),
                    answer: t.assistant.clone(),
                    scene_id: g.scene_id.clone(),
                }));
            }
        }
    }
    out
}
