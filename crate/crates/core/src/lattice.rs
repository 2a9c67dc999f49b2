//! Ground-truth lattices: agent placement with jitter, reference
//! neighbourhoods and checks of protocol output against the truth.
//!
//! Agents are numbered row by row from the bottom row, left to right, so on
//! a rectangular lattice agent `i` sits at `(i % cols + 1, i / cols + 1)`.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::protocol::{classify_position, spacing_feasible, Coord, PositionGroup, ProtocolError};

#[derive(Clone, Debug, PartialEq)]
pub enum Topology {
    Rectangular { cols: u16, rows: u16 },
    /// Row lengths from the bottom row up; rows are centred on each other.
    Hexagonal { row_lengths: Vec<u16> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSpec {
    pub topology: Topology,
    pub dx_mm: f64,
    pub dy_mm: f64,
    /// Placement error as a fraction of the shorter spacing.
    pub jitter_eps: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("a rectangular lattice needs at least 3x3 agents, got {cols}x{rows}")]
    TooSmall { cols: u16, rows: u16 },
    #[error("spacings must be positive and finite")]
    BadSpacing,
    #[error("spacing {dx}x{dy} mm cannot separate neighbourhoods at eps {eps}")]
    Infeasible { dx: f64, dy: f64, eps: f64 },
    #[error("hexagonal rows {0:?}: adjacent rows must differ by exactly one agent")]
    BadRows(Vec<u16>),
    #[error(transparent)]
    Eps(#[from] ProtocolError),
}

impl LatticeSpec {
    pub fn rectangular(cols: u16, rows: u16, dx_mm: f64, dy_mm: f64) -> Self {
        LatticeSpec { topology: Topology::Rectangular { cols, rows }, dx_mm, dy_mm, jitter_eps: 0.0 }
    }

    pub fn hexagonal(row_lengths: Vec<u16>, dx_mm: f64) -> Self {
        LatticeSpec { topology: Topology::Hexagonal { row_lengths }, dx_mm, dy_mm: dx_mm * 3f64.sqrt() / 2.0, jitter_eps: 0.0 }
    }

    pub fn population(&self) -> usize {
        match &self.topology {
            Topology::Rectangular { cols, rows } => usize::from(*cols) * usize::from(*rows),
            Topology::Hexagonal { row_lengths } => row_lengths.iter().map(|&l| usize::from(l)).sum(),
        }
    }

    /// Shortest centre-to-centre spacing.
    pub fn min_spacing(&self) -> f64 {
        match self.topology {
            Topology::Rectangular { .. } => self.dx_mm.min(self.dy_mm),
            Topology::Hexagonal { .. } => self.dx_mm,
        }
    }

    pub fn dims(&self) -> Option<(u16, u16)> {
        match self.topology {
            Topology::Rectangular { cols, rows } => Some((cols, rows)),
            Topology::Hexagonal { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<(), LatticeError> {
        if !(self.dx_mm > 0.0 && self.dy_mm > 0.0 && self.dx_mm.is_finite() && self.dy_mm.is_finite()) {
            return Err(LatticeError::BadSpacing);
        }
        match &self.topology {
            Topology::Rectangular { cols, rows } => {
                if *cols < 3 || *rows < 3 {
                    return Err(LatticeError::TooSmall { cols: *cols, rows: *rows });
                }
                if !spacing_feasible(self.dx_mm, self.dy_mm, self.jitter_eps)? {
                    return Err(LatticeError::Infeasible { dx: self.dx_mm, dy: self.dy_mm, eps: self.jitter_eps });
                }
            }
            Topology::Hexagonal { row_lengths } => {
                let steps_ok = row_lengths.windows(2).all(|w| w[0].abs_diff(w[1]) == 1);
                if row_lengths.is_empty() || row_lengths.contains(&0) || !steps_ok {
                    return Err(LatticeError::BadRows(row_lengths.clone()));
                }
                if !(0.0..0.5).contains(&self.jitter_eps) {
                    return Err(ProtocolError::EpsOutOfRange(self.jitter_eps).into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub spec: LatticeSpec,
    /// Ideal lattice sites, mm.
    pub ideal: Vec<(f64, f64)>,
    /// Actual (jittered) positions, mm.
    pub positions: Vec<(f64, f64)>,
    /// Display cell `(column, row)` per agent, row 0 at the bottom.
    pub cells: Vec<(u32, u32)>,
    /// True coordinates; rectangular lattices only.
    pub coords: Option<Vec<Coord>>,
    /// Lattice neighbourhood of each agent, by index.
    pub adjacency: Vec<Vec<usize>>,
}

/// Builds the lattice, drawing placement jitter from `rng`.
pub fn generate<R: Rng + ?Sized>(spec: &LatticeSpec, rng: &mut R) -> Result<GroundTruth, LatticeError> {
    spec.validate()?;
    let (ideal, cells, coords) = match &spec.topology {
        Topology::Rectangular { cols, rows } => {
            let mut ideal = Vec::new();
            let mut cells = Vec::new();
            let mut coords = Vec::new();
            for y in 1..=*rows {
                for x in 1..=*cols {
                    ideal.push((f64::from(x - 1) * spec.dx_mm, f64::from(y - 1) * spec.dy_mm));
                    cells.push((u32::from(x - 1), u32::from(y - 1)));
                    coords.push(Coord::new(x, y));
                }
            }
            (ideal, cells, Some(coords))
        }
        Topology::Hexagonal { row_lengths } => {
            let widest = *row_lengths.iter().max().expect("validated");
            let mut ideal = Vec::new();
            let mut cells = Vec::new();
            for (r, &len) in row_lengths.iter().enumerate() {
                let indent = u32::from(widest - len);
                for i in 0..u32::from(len) {
                    let half_cells = 2 * i + indent;
                    ideal.push((f64::from(half_cells) * spec.dx_mm / 2.0, r as f64 * spec.dy_mm));
                    cells.push((half_cells, r as u32));
                }
            }
            (ideal, cells, None)
        }
    };

    let radius = spec.jitter_eps * spec.min_spacing();
    let positions = ideal
        .iter()
        .map(|&(x, y)| {
            if radius <= 0.0 {
                return (x, y);
            }
            let (u, v): (f64, f64) = (rng.gen(), rng.gen());
            let (r, theta) = (radius * u.sqrt(), 2.0 * PI * v);
            (x + r * theta.cos(), y + r * theta.sin())
        })
        .collect();

    let adjacency = match (&spec.topology, &coords) {
        (Topology::Rectangular { cols, rows }, Some(coords)) => {
            let index = |c: &Coord| {
                (c.x <= *cols && c.y <= *rows).then(|| usize::from(c.y - 1) * usize::from(*cols) + usize::from(c.x - 1))
            };
            coords
                .iter()
                .map(|c| {
                    let mut out = Vec::new();
                    for dy in -1i32..=1 {
                        for dx in -1i32..=1 {
                            let (nx, ny) = (i32::from(c.x) + dx, i32::from(c.y) + dy);
                            if (dx, dy) == (0, 0) || nx < 1 || ny < 1 {
                                continue;
                            }
                            if let Some(j) = index(&Coord::new(nx as u16, ny as u16)) {
                                out.push(j);
                            }
                        }
                    }
                    out.sort_unstable();
                    out
                })
                .collect()
        }
        _ => within(&ideal, spec.dx_mm * 1.01),
    };

    Ok(GroundTruth { spec: spec.clone(), ideal, positions, cells, coords, adjacency })
}

/// For each point, the indices of the other points at most `range` away.
pub fn within(points: &[(f64, f64)], range: f64) -> Vec<Vec<usize>> {
    points
        .iter()
        .enumerate()
        .map(|(i, &(xi, yi))| {
            points
                .iter()
                .enumerate()
                .filter(|&(j, &(xj, yj))| j != i && (xi - xj).hypot(yi - yj) <= range)
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

/// Longest shortest path, in hops, of a connected graph (`None` if disconnected).
pub fn hop_diameter(graph: &[Vec<usize>]) -> Option<usize> {
    let mut worst = 0;
    let mut dist = vec![usize::MAX; graph.len()];
    let mut queue = std::collections::VecDeque::new();
    for start in 0..graph.len() {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[start] = 0;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for &v in &graph[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        worst = worst.max(*dist.iter().max()?);
        if worst == usize::MAX {
            return None;
        }
    }
    Some(worst)
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (self.positions[a], self.positions[b]);
        (p.0 - q.0).hypot(p.1 - q.1)
    }

    /// Group each agent would get from exact neighbourhood knowledge.
    pub fn reference_groups(&self) -> Vec<Result<PositionGroup, ProtocolError>> {
        let degree = |i: usize| self.adjacency[i].len() as u16;
        (0..self.len())
            .map(|i| {
                let counts: Vec<u16> = self.adjacency[i].iter().map(|&j| degree(j)).collect();
                classify_position(degree(i), &counts)
            })
            .collect()
    }

    /// Compass label of a rectangular lattice corner, e.g. `SW` for (1,1).
    pub fn corner_label(&self, agent: usize) -> Option<&'static str> {
        let (cols, rows) = self.spec.dims()?;
        let c = self.coords.as_ref()?[agent];
        match (c.x == 1, c.x == cols, c.y == 1, c.y == rows) {
            (true, _, true, _) => Some("SW"),
            (_, true, true, _) => Some("SE"),
            (true, _, _, true) => Some("NW"),
            (_, true, _, true) => Some("NE"),
            _ => None,
        }
    }
}

/// Corner, border and middle head counts of a `cols x rows` lattice.
pub fn expected_group_counts(cols: u16, rows: u16) -> (usize, usize, usize) {
    let (c, r) = (usize::from(cols), usize::from(rows));
    (4, 2 * (c - 2) + 2 * (r - 2), (c - 2) * (r - 2))
}

/// The eight lattice symmetries, as maps from true to assigned coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Symmetry {
    Identity,
    MirrorX,
    MirrorY,
    Rotate180,
    Transpose,
    Rotate90,
    Rotate270,
    AntiTranspose,
}

impl Symmetry {
    pub const ALL: [Symmetry; 8] = [
        Symmetry::Identity,
        Symmetry::MirrorX,
        Symmetry::MirrorY,
        Symmetry::Rotate180,
        Symmetry::Transpose,
        Symmetry::Rotate90,
        Symmetry::Rotate270,
        Symmetry::AntiTranspose,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Symmetry::Identity => "identity",
            Symmetry::MirrorX => "mirror_x",
            Symmetry::MirrorY => "mirror_y",
            Symmetry::Rotate180 => "rotate_180",
            Symmetry::Transpose => "transpose",
            Symmetry::Rotate90 => "rotate_90",
            Symmetry::Rotate270 => "rotate_270",
            Symmetry::AntiTranspose => "anti_transpose",
        }
    }

    /// Swaps the two axes.
    pub fn transposes(self) -> bool {
        matches!(self, Symmetry::Transpose | Symmetry::Rotate90 | Symmetry::Rotate270 | Symmetry::AntiTranspose)
    }

    /// Image of true coordinate `c` on a `w x h` lattice.
    pub fn apply(self, c: Coord, w: u16, h: u16) -> Coord {
        let (x, y) = (c.x, c.y);
        let (fx, fy) = (w + 1 - x, h + 1 - y);
        let (nx, ny) = match self {
            Symmetry::Identity => (x, y),
            Symmetry::MirrorX => (fx, y),
            Symmetry::MirrorY => (x, fy),
            Symmetry::Rotate180 => (fx, fy),
            Symmetry::Transpose => (y, x),
            Symmetry::Rotate90 => (y, fx),
            Symmetry::Rotate270 => (fy, x),
            Symmetry::AntiTranspose => (fy, fx),
        };
        Coord::new(nx, ny)
    }
}

impl fmt::Display for Symmetry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub agent: usize,
    pub expected: Coord,
    pub got: Coord,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum VerifyError {
    #[error("no ground-truth coordinates for this topology")]
    NoTruth,
    #[error("expected {expected} coordinates, got {got}")]
    Length { expected: usize, got: usize },
    #[error("{} agents disagree with the closest symmetry ({symmetry})", mismatches.len())]
    Mismatch { symmetry: Symmetry, mismatches: Vec<Mismatch> },
}

/// Checks assigned coordinates against the truth up to one of the eight symmetries.
pub fn verify_coords(assigned: &[Coord], truth: &GroundTruth) -> Result<Symmetry, VerifyError> {
    let (Some(coords), Some((w, h))) = (truth.coords.as_ref(), truth.spec.dims()) else {
        return Err(VerifyError::NoTruth);
    };
    if assigned.len() != coords.len() {
        return Err(VerifyError::Length { expected: coords.len(), got: assigned.len() });
    }
    let mut best: Option<(Symmetry, Vec<Mismatch>)> = None;
    for sym in Symmetry::ALL {
        let mismatches: Vec<Mismatch> = coords
            .iter()
            .zip(assigned)
            .enumerate()
            .filter_map(|(agent, (&t, &got))| {
                let expected = sym.apply(t, w, h);
                (expected != got).then_some(Mismatch { agent, expected, got })
            })
            .collect();
        if mismatches.is_empty() {
            return Ok(sym);
        }
        if best.as_ref().is_none_or(|(_, m)| mismatches.len() < m.len()) {
            best = Some((sym, mismatches));
        }
    }
    let (symmetry, mismatches) = best.expect("eight candidates");
    Err(VerifyError::Mismatch { symmetry, mismatches })
}
