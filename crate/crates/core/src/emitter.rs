//! Instruction-tuning records and sharded dataset output.
//!
//! Each record follows the sequence layout
//! `system · image tokens · object tokens · USER: instruction ASSISTANT: · response`.
//! Visual slots are symbolic placeholders carrying only their declared token
//! counts.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ocot::detect_ids;
use crate::prompt::TaskKind;

pub const ROLE_PROMPT: &str = "You are an AI visual assistant situated in a 3D scene. You can perceive (1) an \
ego-view image (accessible when necessary) and (2) the objects (including yourself) in the scene (always \
accessible). You should properly respond to the USER's instructions according to the given visual information.";

pub const SITUATION_PROMPT: &str = "You are at a selected location in the 3D scene.";

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("invalid record: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordTask {
    SceneCaption,
    ObjectCaption,
    Qa,
    Dialogue,
    Planning,
    Navigation,
    Manipulation,
}

impl RecordTask {
    /// Tasks whose system message adds the situation prompt.
    pub fn is_embodied(self) -> bool {
        matches!(self, RecordTask::Navigation | RecordTask::ObjectCaption)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RecordTask::SceneCaption => "scene_caption",
            RecordTask::ObjectCaption => "object_caption",
            RecordTask::Qa => "qa",
            RecordTask::Dialogue => "dialogue",
            RecordTask::Planning => "planning",
            RecordTask::Navigation => "navigation",
            RecordTask::Manipulation => "manipulation",
        }
    }
}

impl From<TaskKind> for RecordTask {
    fn from(t: TaskKind) -> Self {
        match t {
            TaskKind::SceneCaption => RecordTask::SceneCaption,
            TaskKind::ObjectCaption => RecordTask::ObjectCaption,
            TaskKind::Qa => RecordTask::Qa,
            TaskKind::Dialogue => RecordTask::Dialogue,
            TaskKind::Planning => RecordTask::Planning,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Image,
    Objects,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisualSlot {
    pub kind: SlotKind,
    pub count: u32,
    pub placeholder: String,
}

impl VisualSlot {
    fn new(kind: SlotKind, count: u32) -> Self {
        let placeholder = match kind {
            SlotKind::Image => format!("<IMG x {count}>"),
            SlotKind::Objects => format!("<OBJ x {count}>"),
        };
        Self {
            kind,
            count,
            placeholder,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verdict_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_object: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecordMeta {
    pub image_tokens: u32,
    pub object_tokens: u32,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenRecord {
    pub task: RecordTask,
    pub scene_id: String,
    pub system: String,
    pub visual_slots: Vec<VisualSlot>,
    pub instruction: String,
    pub response: String,
    pub provenance: Provenance,
}

impl GenRecord {
    /// Text between `USER:` and the trailing `ASSISTANT:`.
    pub fn user_text(&self) -> &str {
        self.instruction
            .strip_prefix("USER:")
            .and_then(|s| s.strip_suffix("ASSISTANT:"))
            .map(str::trim)
            .unwrap_or(&self.instruction)
    }

    pub fn validate(&self) -> Result<(), EmitError> {
        let bad = |m: String| Err(EmitError::Validation(m));
        if self.instruction.matches("USER:").count() != 1 || !self.instruction.starts_with("USER:") {
            return bad(format!(
                "instruction must contain exactly one leading USER: ({:?})",
                self.instruction
            ));
        }
        if !self.instruction.ends_with("ASSISTANT:") {
            return bad("instruction must end with ASSISTANT:".into());
        }
        if self.response.trim().is_empty() {
            return bad("empty response".into());
        }
        if let Some(m) = detect_ids(&self.response).first() {
            return bad(format!(
                "response mentions object id {:?}",
                &self.response[m.span.clone()]
            ));
        }
        if let Some(m) = detect_ids(&self.instruction).first() {
            return bad(format!(
                "instruction mentions object id {:?}",
                &self.instruction[m.span.clone()]
            ));
        }
        if self.response.contains("Thoughts:") {
            return bad("response still carries a Thoughts field".into());
        }
        let kinds: Vec<SlotKind> = self.visual_slots.iter().map(|s| s.kind).collect();
        if kinds != [SlotKind::Image, SlotKind::Objects] {
            return bad("visual slots must be image then objects".into());
        }
        Ok(())
    }
}

pub fn system_message(task: RecordTask) -> String {
    if task.is_embodied() {
        format!("{ROLE_PROMPT} {SITUATION_PROMPT}")
    } else {
        ROLE_PROMPT.to_string()
    }
}

pub fn make_record(
    task: RecordTask,
    scene_id: &str,
    instruction: &str,
    response: &str,
    meta: RecordMeta,
) -> Result<GenRecord, EmitError> {
    let record = GenRecord {
        task,
        scene_id: scene_id.to_string(),
        system: system_message(task),
        visual_slots: vec![
            VisualSlot::new(SlotKind::Image, meta.image_tokens),
            VisualSlot::new(SlotKind::Objects, meta.object_tokens),
        ],
        instruction: format!("USER: {} ASSISTANT:", instruction.trim()),
        response: response.trim().to_string(),
        provenance: meta.provenance,
    };
    record.validate()?;
    Ok(record)
}

pub fn navigation_instruction(goal: &str, past_actions: &str) -> String {
    format!("The task is navigation. Your goal is to find {goal} by moving around in the scene. Past actions: {past_actions}.")
}

pub fn manipulation_instruction(goal: &str, past_actions: &str) -> String {
    format!("The task is manipulation. Your goal is to {goal}. Past actions: {past_actions}.")
}

/// Folds earlier dialogue turns into a single user message.
pub fn dialogue_instruction(history: &[(String, String)], question: &str) -> String {
    if history.is_empty() {
        return question.to_string();
    }
    let past: Vec<String> = history
        .iter()
        .map(|(q, a)| format!("Human: {q} Assistant: {a}"))
        .collect();
    format!("Dialogue history: {} Current question: {question}", past.join(" "))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStats {
    pub records: usize,
    pub approx_tokens_response: usize,
    pub approx_tokens_total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub file: String,
    pub records: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub total_records: usize,
    pub shards: Vec<ShardInfo>,
    pub tasks: BTreeMap<String, TaskStats>,
}

fn approx_tokens(s: &str) -> usize {
    s.split_whitespace().count()
}

pub fn manifest_for(records: &[GenRecord]) -> BTreeMap<String, TaskStats> {
    let mut tasks: BTreeMap<String, TaskStats> = BTreeMap::new();
    for r in records {
        let st = tasks.entry(r.task.as_str().to_string()).or_default();
        st.records += 1;
        let resp = approx_tokens(&r.response);
        st.approx_tokens_response += resp;
        st.approx_tokens_total += resp + approx_tokens(&r.system) + approx_tokens(&r.instruction);
    }
    tasks
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `shard-NNNNN.jsonl` files of at most `shard_size` records plus
/// `manifest.json` into `dir`.
pub fn write_dataset(records: &[GenRecord], dir: &Path, shard_size: usize) -> Result<Manifest, EmitError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| EmitError::Io { path, source }
    };
    if shard_size == 0 {
        return Err(EmitError::Validation("shard size must be positive".into()));
    }
    for r in records {
        r.validate()?;
    }
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut shards = Vec::new();
    for (i, chunk) in records.chunks(shard_size).enumerate() {
        let name = format!("shard-{i:05}.jsonl");
        let path = dir.join(&name);
        let mut w = BufWriter::new(File::create(&path).map_err(io(&path))?);
        for r in chunk {
            serde_json::to_writer(&mut w, r).expect("record serializes");
            w.write_all(b"\n").map_err(io(&path))?;
        }
        w.flush().map_err(io(&path))?;
        shards.push(ShardInfo {
            file: name,
            records: chunk.len(),
        });
    }
    let manifest = Manifest {
        total_records: records.len(),
        shards,
        tasks: manifest_for(records),
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io(&path))?;
    Ok(manifest)
}

/// Reads any JSONL file of serde-deserializable rows.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, EmitError> {
    let file = File::open(path).map_err(|source| EmitError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| EmitError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| EmitError::Json {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), EmitError> {
    let io = |source| EmitError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for row in rows {
        serde_json::to_writer(&mut w, row).expect("row serializes");
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// All records of a dataset directory, in shard order.
pub fn read_dataset(dir: &Path) -> Result<Vec<GenRecord>, EmitError> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE)).map_err(|source| EmitError::Io {
        path: dir.join(MANIFEST_FILE).display().to_string(),
        source,
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|source| EmitError::Json {
        path: MANIFEST_FILE.into(),
        line: 0,
        source,
    })?;
    let mut out = Vec::new();
    for shard in &manifest.shards {
        out.extend(read_jsonl::<GenRecord>(&dir.join(&shard.file))?);
    }
    Ok(out)
}
