//! Discrete action tokens for navigation commands and binned tabletop poses.

use std::f64::consts::TAU;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ActionError {
    #[error("{axis} value {value} outside workspace [{min}, {max}]")]
    OutOfWorkspace { axis: Axis, value: f64, min: f64, max: f64 },
    #[error("token {token} is not a {expected} token")]
    WrongRange { token: u32, expected: String },
    #[error("malformed action token {0:?}")]
    Malformed(String),
    #[error("invalid action space: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
    Rot,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Rot => "rotation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum NavAction {
    MoveForward,
    TurnRight,
    TurnLeft,
    Stop,
}

impl NavAction {
    pub const ALL: [NavAction; 4] = [
        NavAction::MoveForward,
        NavAction::TurnRight,
        NavAction::TurnLeft,
        NavAction::Stop,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Workspace {
    fn default() -> Self {
        Self {
            x_min: -0.5,
            x_max: 0.5,
            y_min: 0.25,
            y_max: 0.75,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavTokens {
    pub move_forward: u32,
    pub turn_right: u32,
    pub turn_left: u32,
    pub stop: u32,
}

impl Default for NavTokens {
    fn default() -> Self {
        Self {
            move_forward: 31999,
            turn_right: 31998,
            turn_left: 31997,
            stop: 31996,
        }
    }
}

impl NavTokens {
    fn get(&self, a: NavAction) -> u32 {
        match a {
            NavAction::MoveForward => self.move_forward,
            NavAction::TurnRight => self.turn_right,
            NavAction::TurnLeft => self.turn_left,
            NavAction::Stop => self.stop,
        }
    }
}

/// Pose axes are packed contiguously from `reserved_base` in the order
/// rotation, y, x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionSpaceConfig {
    pub x_bins: u32,
    pub y_bins: u32,
    pub rot_bins: u32,
    pub workspace: Workspace,
    pub reserved_base: u32,
    pub nav_tokens: NavTokens,
}

impl Default for ActionSpaceConfig {
    fn default() -> Self {
        Self {
            x_bins: 320,
            y_bins: 160,
            rot_bins: 36,
            workspace: Workspace::default(),
            reserved_base: 31480,
            nav_tokens: NavTokens::default(),
        }
    }
}

impl ActionSpaceConfig {
    pub fn load(path: &Path) -> Result<Self, ActionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ActionError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| ActionError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn bins(&self, axis: Axis) -> u32 {
        match axis {
            Axis::X => self.x_bins,
            Axis::Y => self.y_bins,
            Axis::Rot => self.rot_bins,
        }
    }

    pub fn axis_base(&self, axis: Axis) -> u32 {
        match axis {
            Axis::Rot => self.reserved_base,
            Axis::Y => self.reserved_base + self.rot_bins,
            Axis::X => self.reserved_base + self.rot_bins + self.y_bins,
        }
    }

    pub fn bounds(&self, axis: Axis) -> (f64, f64) {
        let w = &self.workspace;
        match axis {
            Axis::X => (w.x_min, w.x_max),
            Axis::Y => (w.y_min, w.y_max),
            Axis::Rot => (0.0, TAU),
        }
    }

    pub fn bin_width(&self, axis: Axis) -> f64 {
        let (lo, hi) = self.bounds(axis);
        (hi - lo) / self.bins(axis) as f64
    }

    pub fn validate(&self) -> Result<(), ActionError> {
        let bad = |m: String| Err(ActionError::InvalidConfig(m));
        if self.x_bins == 0 || self.y_bins == 0 || self.rot_bins == 0 {
            return bad("bin counts must be positive".into());
        }
        let w = &self.workspace;
        if !(w.x_max > w.x_min && w.y_max > w.y_min)
            || ![w.x_min, w.x_max, w.y_min, w.y_max].iter().all(|v| v.is_finite())
        {
            return bad("workspace bounds must be finite with max > min".into());
        }
        let pose_end = self
            .reserved_base
            .checked_add(self.x_bins + self.y_bins + self.rot_bins)
            .ok_or_else(|| ActionError::InvalidConfig("reserved range overflows".into()))?;
        let nav: Vec<u32> = NavAction::ALL.iter().map(|&a| self.nav_tokens.get(a)).collect();
        for (i, t) in nav.iter().enumerate() {
            if nav[..i].contains(t) {
                return bad(format!("navigation token {t} assigned twice"));
            }
            if (self.reserved_base..pose_end).contains(t) {
                return bad(format!("navigation token {t} overlaps the pose range"));
            }
        }
        Ok(())
    }

    fn axis_of(&self, token: u32) -> Option<Axis> {
        [Axis::Rot, Axis::Y, Axis::X].into_iter().find(|&a| {
            let base = self.axis_base(a);
            (base..base + self.bins(a)).contains(&token)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionToken(pub u32);

impl ActionToken {
    pub fn token_id(self) -> u32 {
        self.0
    }

    pub fn rendered(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ActionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.0)
    }
}

impl FromStr for ActionToken {
    type Err = ActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim()
            .strip_prefix('<')
            .and_then(|r| r.strip_suffix('>'))
            .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|d| d.parse().ok())
            .map(ActionToken)
            .ok_or_else(|| ActionError::Malformed(s.to_string()))
    }
}

/// Parses a whitespace-separated run of `<id>` tokens.
pub fn parse_tokens(s: &str) -> Result<Vec<ActionToken>, ActionError> {
    s.split_whitespace().map(str::parse).collect()
}

pub fn encode_nav(action: NavAction, cfg: &ActionSpaceConfig) -> ActionToken {
    ActionToken(cfg.nav_tokens.get(action))
}

pub fn decode_nav(token: ActionToken, cfg: &ActionSpaceConfig) -> Result<NavAction, ActionError> {
    NavAction::ALL
        .into_iter()
        .find(|&a| cfg.nav_tokens.get(a) == token.0)
        .ok_or_else(|| ActionError::WrongRange {
            token: token.0,
            expected: "navigation".into(),
        })
}

pub fn bin_index(value: f64, axis: Axis, cfg: &ActionSpaceConfig) -> Result<u32, ActionError> {
    let (lo, hi) = cfg.bounds(axis);
    let in_range = match axis {
        Axis::Rot => (lo..hi).contains(&value),
        _ => (lo..=hi).contains(&value),
    };
    if !in_range {
        return Err(ActionError::OutOfWorkspace {
            axis,
            value,
            min: lo,
            max: hi,
        });
    }
    let bins = cfg.bins(axis);
    let idx = ((value - lo) / (hi - lo) * bins as f64).floor() as i64;
    Ok(idx.clamp(0, bins as i64 - 1) as u32)
}

pub fn encode_axis(value: f64, axis: Axis, cfg: &ActionSpaceConfig) -> Result<ActionToken, ActionError> {
    Ok(ActionToken(cfg.axis_base(axis) + bin_index(value, axis, cfg)?))
}

pub fn decode_axis(token: ActionToken, axis: Axis, cfg: &ActionSpaceConfig) -> Result<f64, ActionError> {
    let base = cfg.axis_base(axis);
    if cfg.axis_of(token.0) != Some(axis) {
        return Err(ActionError::WrongRange {
            token: token.0,
            expected: axis.to_string(),
        });
    }
    let (lo, _) = cfg.bounds(axis);
    Ok(lo + ((token.0 - base) as f64 + 0.5) * cfg.bin_width(axis))
}

/// Pose tokens in rendered order `(x, y, rot)`.
pub fn encode_pose(x: f64, y: f64, rot: f64, cfg: &ActionSpaceConfig) -> Result<[ActionToken; 3], ActionError> {
    Ok([
        encode_axis(x, Axis::X, cfg)?,
        encode_axis(y, Axis::Y, cfg)?,
        encode_axis(rot, Axis::Rot, cfg)?,
    ])
}

pub fn decode_pose(tokens: [ActionToken; 3], cfg: &ActionSpaceConfig) -> Result<(f64, f64, f64), ActionError> {
    Ok((
        decode_axis(tokens[0], Axis::X, cfg)?,
        decode_axis(tokens[1], Axis::Y, cfg)?,
        decode_axis(tokens[2], Axis::Rot, cfg)?,
    ))
}

pub fn render_past_actions(tokens: &[ActionToken], k: usize) -> String {
    let start = tokens.len().saturating_sub(k);
    tokens[start..]
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn render_past_poses(poses: &[[ActionToken; 3]], k: usize) -> String {
    let flat: Vec<ActionToken> = poses[poses.len().saturating_sub(k)..]
        .iter()
        .flatten()
        .copied()
        .collect();
    render_past_actions(&flat, flat.len())
}
