//! C interface to the scene-factory core.
//!
//! Every fallible call returns an `SfStatus` and writes its result through an
//! out-pointer. On failure the message is kept per thread and can be read with
//! `sf_last_error_message` until the next failing call on that thread.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use scene_factory::actions::{self, ActionError, ActionSpaceConfig, ActionToken, NavAction};
use scene_factory::qa_match;
use scene_factory::scene_graph::{self, GraphFormat, SceneGraph, SceneGraphError};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidGraph = 5,
    OutOfRange = 6,
    InvalidConfig = 7,
    Panic = 8,
}

/// Navigation actions in the order of their reserved tokens.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfNavAction {
    MoveForward = 0,
    TurnRight = 1,
    TurnLeft = 2,
    Stop = 3,
}

impl From<SfNavAction> for NavAction {
    fn from(a: SfNavAction) -> Self {
        match a {
            SfNavAction::MoveForward => NavAction::MoveForward,
            SfNavAction::TurnRight => NavAction::TurnRight,
            SfNavAction::TurnLeft => NavAction::TurnLeft,
            SfNavAction::Stop => NavAction::Stop,
        }
    }
}

impl From<NavAction> for SfNavAction {
    fn from(a: NavAction) -> Self {
        match a {
            NavAction::MoveForward => SfNavAction::MoveForward,
            NavAction::TurnRight => SfNavAction::TurnRight,
            NavAction::TurnLeft => SfNavAction::TurnLeft,
            NavAction::Stop => SfNavAction::Stop,
        }
    }
}

/// Opaque scene graph handle.
pub struct SfSceneGraph(SceneGraph);

/// Opaque action space handle.
pub struct SfActionSpace(ActionSpaceConfig);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(SfStatus, String);

impl From<SceneGraphError> for Failure {
    fn from(e: SceneGraphError) -> Self {
        let status = match e {
            SceneGraphError::Io { .. } => SfStatus::Io,
            SceneGraphError::Parse(_) => SfStatus::Parse,
            _ => SfStatus::InvalidGraph,
        };
        Failure(status, e.to_string())
    }
}

impl From<ActionError> for Failure {
    fn from(e: ActionError) -> Self {
        let status = match e {
            ActionError::InvalidConfig(_) => SfStatus::InvalidConfig,
            ActionError::Malformed(_) => SfStatus::Parse,
            _ => SfStatus::OutOfRange,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(SfStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SfStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(SfStatus::NullPointer, format!("{name} is null")))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(SfStatus::NullPointer, "handle is null".into()))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a canonical JSON scene graph file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_scene_graph_load(path: *const c_char, out: *mut *mut SfSceneGraph) -> SfStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let g = scene_graph::load_scene_graph(Path::new(path), GraphFormat::CanonicalJson)?;
        *out = Box::into_raw(Box::new(SfSceneGraph(g)));
        Ok(())
    })
}

/// Parses a scene graph from a JSON string.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_scene_graph_from_json(json: *const c_char, out: *mut *mut SfSceneGraph) -> SfStatus {
    guard(|| {
        let json = str_arg(json, "json")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(SfSceneGraph(SceneGraph::from_json_str(json)?)));
        Ok(())
    })
}

/// Number of nodes in the graph.
///
/// # Safety
/// `graph` must come from this library and not be freed.
#[no_mangle]
pub unsafe extern "C" fn sf_scene_graph_node_count(graph: *const SfSceneGraph, out: *mut usize) -> SfStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(graph)?.0.nodes().len();
        Ok(())
    })
}

/// Number of nodes whose normalized label matches `label`.
///
/// # Safety
/// `graph` must be a live handle, `label` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sf_scene_graph_count(
    graph: *const SfSceneGraph,
    label: *const c_char,
    out: *mut usize,
) -> SfStatus {
    guard(|| {
        let label = str_arg(label, "label")?;
        *out_arg(out, "out")? = handle(graph)?.0.count_by_label(label);
        Ok(())
    })
}

/// # Safety
/// `graph` must be a live handle, `label` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sf_scene_graph_exists(
    graph: *const SfSceneGraph,
    label: *const c_char,
    out: *mut bool,
) -> SfStatus {
    guard(|| {
        let label = str_arg(label, "label")?;
        *out_arg(out, "out")? = handle(graph)?.0.exists(label);
        Ok(())
    })
}

/// # Safety
/// `graph` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sf_scene_graph_free(graph: *mut SfSceneGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// The default action space. Never null.
#[no_mangle]
pub extern "C" fn sf_action_space_default() -> *mut SfActionSpace {
    Box::into_raw(Box::new(SfActionSpace(ActionSpaceConfig::default())))
}

/// Loads an action space from a TOML file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_action_space_load(path: *const c_char, out: *mut *mut SfActionSpace) -> SfStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(SfActionSpace(ActionSpaceConfig::load(Path::new(path))?)));
        Ok(())
    })
}

/// # Safety
/// `space` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sf_action_space_free(space: *mut SfActionSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Writes the x, y and rotation tokens of a pose to `out_tokens[0..3]`.
///
/// # Safety
/// `space` must be a live handle and `out_tokens` point to three `u32`s.
#[no_mangle]
pub unsafe extern "C" fn sf_encode_pose(
    space: *const SfActionSpace,
    x: f64,
    y: f64,
    rot: f64,
    out_tokens: *mut u32,
) -> SfStatus {
    guard(|| {
        let cfg = &handle(space)?.0;
        out_arg(out_tokens, "out_tokens")?;
        let t = actions::encode_pose(x, y, rot, cfg)?;
        let out = std::slice::from_raw_parts_mut(out_tokens, 3);
        for (o, t) in out.iter_mut().zip(t) {
            *o = t.0;
        }
        Ok(())
    })
}

/// Decodes x, y and rotation tokens to bin centres.
///
/// # Safety
/// `tokens` must point to three `u32`s and every out-pointer be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_decode_pose(
    space: *const SfActionSpace,
    tokens: *const u32,
    out_x: *mut f64,
    out_y: *mut f64,
    out_rot: *mut f64,
) -> SfStatus {
    guard(|| {
        let cfg = &handle(space)?.0;
        let t = handle(tokens)?;
        let t = std::slice::from_raw_parts(t, 3);
        let (x, y, r) = actions::decode_pose([ActionToken(t[0]), ActionToken(t[1]), ActionToken(t[2])], cfg)?;
        *out_arg(out_x, "out_x")? = x;
        *out_arg(out_y, "out_y")? = y;
        *out_arg(out_rot, "out_rot")? = r;
        Ok(())
    })
}

/// # Safety
/// `space` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_encode_nav(space: *const SfActionSpace, action: SfNavAction, out: *mut u32) -> SfStatus {
    guard(|| {
        *out_arg(out, "out")? = actions::encode_nav(action.into(), &handle(space)?.0).0;
        Ok(())
    })
}

/// # Safety
/// `space` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_decode_nav(space: *const SfActionSpace, token: u32, out: *mut SfNavAction) -> SfStatus {
    guard(|| {
        let a = actions::decode_nav(ActionToken(token), &handle(space)?.0)?;
        *out_arg(out, "out")? = a.into();
        Ok(())
    })
}

unsafe fn answers<'a>(refs: *const *const c_char, n: usize) -> Result<Vec<&'a str>, Failure> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let refs = std::slice::from_raw_parts(handle(refs)?, n);
    refs.iter().map(|r| str_arg(*r, "reference")).collect()
}

/// Strict exact match of `pred` against any of `n_refs` references.
///
/// # Safety
/// `refs` must point to `n_refs` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn sf_strict_em(
    pred: *const c_char,
    refs: *const *const c_char,
    n_refs: usize,
    out: *mut bool,
) -> SfStatus {
    guard(|| {
        let pred = str_arg(pred, "pred")?;
        let refs = answers(refs, n_refs)?;
        *out_arg(out, "out")? = qa_match::strict_em(pred, &refs);
        Ok(())
    })
}

/// Refined exact match: equality or whitespace-free containment either way.
///
/// # Safety
/// `refs` must point to `n_refs` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn sf_refined_em(
    pred: *const c_char,
    refs: *const *const c_char,
    n_refs: usize,
    out: *mut bool,
) -> SfStatus {
    guard(|| {
        let pred = str_arg(pred, "pred")?;
        let refs = answers(refs, n_refs)?;
        *out_arg(out, "out")? = qa_match::refined_em(pred, &refs);
        Ok(())
    })
}
