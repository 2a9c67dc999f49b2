//! Time-stepped role plans executed once every agent knows its coordinate.
//!
//! Plan files are line oriented. `#` starts a comment. Top-level settings
//! are `step_seconds = <seconds>` and `cyclic = true|false`. Each step is a
//! block opened by `step` and closed by `end`, holding rules tried in order:
//!
//! ```text
//! all -> ROLE
//! cell X Y -> ROLE
//! rect X1 Y1 X2 Y2 -> ROLE
//! glyph ROW/ROW/... -> ROLE at X,Y
//! ```
//!
//! Glyph rows use `#` for a selected cell and `.` otherwise; the first row is
//! the top one and `X,Y` anchors the bottom-left cell. Coordinates are
//! 1-based; a negative value counts from the far edge (`-1` is the last
//! column or row). `ROLE` is `off`, `depart`, or a colour name.

mod render;

pub use render::{lit_cells, render_ascii, render_ppm, Frame};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::protocol::Coord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Color {
    Red,
    Green,
    Blue,
    Cyan,
    Magenta,
    Yellow,
    White,
}

impl Color {
    pub const ALL: [Color; 7] =
        [Color::Red, Color::Green, Color::Blue, Color::Cyan, Color::Magenta, Color::Yellow, Color::White];

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Cyan => "cyan",
            Color::Magenta => "magenta",
            Color::Yellow => "yellow",
            Color::White => "white",
        }
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [230, 40, 40],
            Color::Green => [40, 200, 60],
            Color::Blue => [50, 80, 230],
            Color::Cyan => [40, 210, 220],
            Color::Magenta => [220, 50, 210],
            Color::Yellow => [240, 220, 40],
            Color::White => [245, 245, 245],
        }
    }

    /// One-character symbol used by the text renderer.
    pub fn symbol(self) -> char {
        match self {
            Color::Red => 'R',
            Color::Green => 'G',
            Color::Blue => 'B',
            Color::Cyan => 'C',
            Color::Magenta => 'M',
            Color::Yellow => 'Y',
            Color::White => 'W',
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Role {
    #[default]
    Off,
    Lit(Color),
    Departed,
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(Role::Off),
            "depart" | "departed" => Ok(Role::Departed),
            other => Color::ALL
                .iter()
                .find(|c| c.name() == other)
                .map(|&c| Role::Lit(c))
                .ok_or_else(|| format!("unknown role `{other}`")),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Off => f.write_str("off"),
            Role::Lit(c) => f.write_str(c.name()),
            Role::Departed => f.write_str("depart"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CellSet {
    All,
    Cell { x: i32, y: i32 },
    Rect { x1: i32, y1: i32, x2: i32, y2: i32 },
    /// `rows[0]` is the top row of the mask.
    Glyph { rows: Vec<Vec<bool>>, x: i32, y: i32 },
}

/// Resolves a possibly edge-relative ordinate against the lattice extent.
fn resolve(v: i32, extent: Option<u16>) -> Option<i32> {
    match v {
        v if v > 0 => Some(v),
        v if v < 0 => extent.map(|e| i32::from(e) + 1 + v),
        _ => None,
    }
}

impl CellSet {
    pub fn contains(&self, coord: Coord, dims: Option<(u16, u16)>) -> bool {
        let (w, h) = (dims.map(|d| d.0), dims.map(|d| d.1));
        let (cx, cy) = (i32::from(coord.x), i32::from(coord.y));
        match self {
            CellSet::All => true,
            CellSet::Cell { x, y } => resolve(*x, w) == Some(cx) && resolve(*y, h) == Some(cy),
            CellSet::Rect { x1, y1, x2, y2 } => {
                let (Some(x1), Some(x2), Some(y1), Some(y2)) =
                    (resolve(*x1, w), resolve(*x2, w), resolve(*y1, h), resolve(*y2, h))
                else {
                    return false;
                };
                (x1.min(x2)..=x1.max(x2)).contains(&cx) && (y1.min(y2)..=y1.max(y2)).contains(&cy)
            }
            CellSet::Glyph { rows, x, y } => {
                let (Some(ox), Some(oy)) = (resolve(*x, w), resolve(*y, h)) else {
                    return false;
                };
                let (dx, dy) = (cx - ox, cy - oy);
                if dx < 0 || dy < 0 || dy as usize >= rows.len() {
                    return false;
                }
                let row = &rows[rows.len() - 1 - dy as usize];
                row.get(dx as usize).copied().unwrap_or(false)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub cells: CellSet,
    pub role: Role,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlanStep {
    pub label: Option<String>,
    pub rules: Vec<Rule>,
}

impl PlanStep {
    /// First matching rule wins; unmatched cells are off.
    pub fn role(&self, coord: Coord, dims: Option<(u16, u16)>) -> Role {
        self.rules.iter().find(|r| r.cells.contains(coord, dims)).map(|r| r.role).unwrap_or(Role::Off)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionPlan {
    pub step_seconds: f64,
    pub cyclic: bool,
    pub steps: Vec<PlanStep>,
}

pub const DEFAULT_STEP_SECONDS: f64 = 8.0;

impl Default for ActionPlan {
    fn default() -> Self {
        ActionPlan { step_seconds: DEFAULT_STEP_SECONDS, cyclic: true, steps: Vec::new() }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("plan line {line}: {message}")]
pub struct PlanError {
    pub line: usize,
    pub message: String,
}

impl ActionPlan {
    /// Step in effect at the `step`-th plan interval, if any.
    pub fn step(&self, step: u64) -> Option<&PlanStep> {
        if self.steps.is_empty() {
            return None;
        }
        let len = self.steps.len() as u64;
        let idx = if self.cyclic { step % len } else { step.min(len - 1) };
        self.steps.get(idx as usize)
    }

    pub fn parse(text: &str) -> Result<ActionPlan, PlanError> {
        let mut plan = ActionPlan::default();
        let mut current: Option<PlanStep> = None;
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let err = |message: String| PlanError { line: line_no, message };
            let line = raw.split('#').next().unwrap_or("");
            let line = if line.trim_start().starts_with("glyph") {
                // '#' is a glyph cell, not a comment, on glyph lines
                raw.trim()
            } else {
                line.trim()
            };
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            let head = words.next().unwrap_or_default();
            match (head, current.as_mut()) {
                ("step", None) => {
                    let label: Vec<&str> = words.collect();
                    current = Some(PlanStep {
                        label: (!label.is_empty()).then(|| label.join(" ")),
                        rules: Vec::new(),
                    });
                }
                ("step", Some(_)) => return Err(err("`step` inside an open step; missing `end`".into())),
                ("end", Some(_)) => plan.steps.push(current.take().expect("open step")),
                ("end", None) => return Err(err("`end` without `step`".into())),
                (_, Some(step)) => step.rules.push(parse_rule(line).map_err(err)?),
                (_, None) => {
                    let (key, value) = line
                        .split_once('=')
                        .map(|(k, v)| (k.trim(), v.trim()))
                        .ok_or_else(|| err(format!("expected `key = value` or `step`, found `{line}`")))?;
                    match key {
                        "step_seconds" => {
                            plan.step_seconds = value
                                .parse::<f64>()
                                .ok()
                                .filter(|v| *v > 0.0 && v.is_finite())
                                .ok_or_else(|| err(format!("bad step_seconds `{value}`")))?
                        }
                        "cyclic" => {
                            plan.cyclic = value.parse().map_err(|_| err(format!("bad cyclic flag `{value}`")))?
                        }
                        _ => return Err(err(format!("unknown setting `{key}`"))),
                    }
                }
            }
        }
        if current.is_some() {
            return Err(PlanError { line: text.lines().count(), message: "unterminated step".into() });
        }
        Ok(plan)
    }
}

fn parse_rule(line: &str) -> Result<Rule, String> {
    let (lhs, rhs) = line.split_once("->").ok_or("rule needs `->`")?;
    let lhs: Vec<&str> = lhs.split_whitespace().collect();
    let rhs: Vec<&str> = rhs.split_whitespace().collect();
    let int = |s: &str| s.parse::<i32>().ok().filter(|v| *v != 0).ok_or(format!("bad coordinate `{s}`"));
    let role_word = rhs.first().ok_or("missing role")?;
    let role: Role = role_word.parse()?;
    let (cells, rest) = match lhs.as_slice() {
        ["all"] => (CellSet::All, &rhs[1..]),
        ["cell", x, y] => (CellSet::Cell { x: int(x)?, y: int(y)? }, &rhs[1..]),
        ["rect", x1, y1, x2, y2] => {
            (CellSet::Rect { x1: int(x1)?, y1: int(y1)?, x2: int(x2)?, y2: int(y2)? }, &rhs[1..])
        }
        ["glyph", mask] => {
            let ["at", anchor] = &rhs[1..] else {
                return Err("glyph rule needs `at X,Y`".into());
            };
            let (x, y) = anchor.split_once(',').ok_or("anchor must be `X,Y`")?;
            let rows = mask
                .split('/')
                .map(|row| {
                    row.chars()
                        .map(|c| match c {
                            '#' => Ok(true),
                            '.' => Ok(false),
                            other => Err(format!("bad glyph character `{other}`")),
                        })
                        .collect::<Result<Vec<bool>, String>>()
                })
                .collect::<Result<Vec<_>, _>>()?;
            (CellSet::Glyph { rows, x: int(x.trim())?, y: int(y.trim())? }, &[][..])
        }
        _ => return Err(format!("unrecognised rule `{}`", lhs.join(" "))),
    };
    if !rest.is_empty() {
        return Err(format!("trailing tokens `{}`", rest.join(" ")));
    }
    Ok(Rule { cells, role })
}

/// Role of the agent at `coord` during plan interval `step`.
pub fn r3_role(plan: &ActionPlan, coord: Coord, dims: Option<(u16, u16)>, step: u64) -> Role {
    if !coord.is_complete() {
        return Role::Off;
    }
    plan.step(step).map(|s| s.role(coord, dims)).unwrap_or(Role::Off)
}
