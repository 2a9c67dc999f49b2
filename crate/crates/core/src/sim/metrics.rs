//! Run outcomes and their CSV form.

use std::fmt;

use crate::lattice::{GroundTruth, Symmetry, VerifyError};
use crate::plan::{Frame, Role};
use crate::protocol::{AgentState, Fault, PositionGroup};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Timeout,
}

/// Global ticks at which the first and last agent entered a phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhaseSpan {
    pub first: u64,
    pub last: u64,
    pub agents: usize,
}

impl PhaseSpan {
    pub fn spread(&self) -> u64 {
        self.last - self.first
    }
}

/// Roles at the first tick on which all agents were in plan step `step`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSnapshot {
    pub step: u16,
    pub tick: u64,
    pub roles: Vec<Role>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub seed: u64,
    pub status: RunStatus,
    /// Global ticks simulated.
    pub ticks: u64,
    pub tick_rate_hz: f64,
    pub period_ticks: u64,
    pub r1_tick: Option<u64>,
    pub r2_tick: Option<u64>,
    /// `None` where the topology has no coordinate truth.
    pub verification: Option<Result<Symmetry, VerifyError>>,
    pub origin: Option<usize>,
    pub election_tie: bool,
    pub origin_dims: Option<(u16, u16)>,
    pub faults: Vec<(usize, Fault)>,
    pub phase_skews: usize,
    /// Largest phase-index difference between two active agents on any tick.
    pub max_phase_gap: u16,
    /// Times an agent was seen in an earlier phase than before.
    pub phase_regressions: usize,
    /// Agents whose transmissions read as farther away than they are.
    pub biased_agents: Vec<usize>,
    pub msgs_sent: u64,
    pub msgs_dropped: u64,
    /// Indexed by phase number.
    pub phase_spans: Vec<Option<PhaseSpan>>,
    pub step_snapshots: Vec<StepSnapshot>,
    pub frames: Vec<Frame>,
    pub states: Vec<AgentState>,
    pub truth: GroundTruth,
}

pub const CSV_HEADER: &str =
    "seed,success,completion_s,phase_r1_s,phase_r2_s,origin_corner,symmetry,msgs_sent,msgs_dropped";

impl RunResult {
    pub fn symmetry(&self) -> Option<Symmetry> {
        self.verification.as_ref().and_then(|v| v.as_ref().ok().copied())
    }

    pub fn groups(&self) -> Vec<PositionGroup> {
        self.states.iter().map(|s| s.group).collect()
    }

    /// Corner, border and middle head counts as classified by the agents.
    pub fn group_counts(&self) -> (usize, usize, usize) {
        let count = |g| self.states.iter().filter(|s| s.group == g).count();
        (count(PositionGroup::Corner), count(PositionGroup::Border), count(PositionGroup::Middle))
    }

    /// Whether every agent's group agrees with exact neighbourhood knowledge.
    pub fn groups_match_reference(&self) -> bool {
        let reference = self.truth.reference_groups();
        self.states.iter().zip(&reference).all(|(s, r)| Ok(s.group) == *r)
    }

    /// Swarm size measured by the origin agrees with the lattice, read through the run's symmetry.
    pub fn dims_consistent(&self) -> bool {
        let (Some(sym), Some((cols, rows)), Some(measured)) = (self.symmetry(), self.truth.spec.dims(), self.origin_dims)
        else {
            return false;
        };
        let expected = if sym.transposes() { (rows, cols) } else { (cols, rows) };
        measured == expected
    }

    pub fn success(&self) -> bool {
        if self.status != RunStatus::Completed || !self.faults.is_empty() || self.election_tie {
            return false;
        }
        match &self.verification {
            Some(v) => v.is_ok() && self.dims_consistent(),
            None => self.groups_match_reference(),
        }
    }

    fn seconds(&self, ticks: u64) -> f64 {
        ticks as f64 / self.tick_rate_hz
    }

    pub fn completion_s(&self) -> Option<f64> {
        self.r2_tick.map(|t| self.seconds(t))
    }

    pub fn phase_r1_s(&self) -> Option<f64> {
        self.r1_tick.map(|t| self.seconds(t))
    }

    pub fn phase_r2_s(&self) -> Option<f64> {
        Some(self.seconds(self.r2_tick?.checked_sub(self.r1_tick?)?))
    }

    pub fn origin_corner(&self) -> Option<&'static str> {
        self.truth.corner_label(self.origin?)
    }

    /// Ticks for a message to cross the communication graph once, hop by hop.
    pub fn relay_window_ticks(&self, comm_range_mm: f64) -> Option<u64> {
        let graph = crate::lattice::within(&self.truth.positions, comm_range_mm);
        crate::lattice::hop_diameter(&graph).map(|d| d as u64 * self.period_ticks)
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|s| format!("{s:.3}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.success(),
            opt(self.completion_s()),
            opt(self.phase_r1_s()),
            opt(self.phase_r2_s()),
            self.origin_corner().unwrap_or(""),
            self.symmetry().map(|s| s.name()).unwrap_or(""),
            self.msgs_sent,
            self.msgs_dropped
        )
    }
}

/// Median of the values, averaging the middle pair for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 0 { (v[mid - 1] + v[mid]) / 2.0 } else { v[mid] })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchSummary {
    pub runs: usize,
    pub successes: usize,
    pub median_completion_s: Option<f64>,
}

impl BatchSummary {
    pub fn from_results<'a>(results: impl IntoIterator<Item = &'a RunResult>) -> Self {
        let mut runs = 0;
        let mut successes = 0;
        let mut times = Vec::new();
        for r in results {
            runs += 1;
            if r.success() {
                successes += 1;
                times.extend(r.completion_s());
            }
        }
        BatchSummary { runs, successes, median_completion_s: median(&times) }
    }

    pub fn success_rate(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            self.successes as f64 / self.runs as f64
        }
    }
}

impl fmt::Display for BatchSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "runs = {}", self.runs)?;
        writeln!(f, "successes = {}", self.successes)?;
        writeln!(f, "success_rate = {:.4}", self.success_rate())?;
        match self.median_completion_s {
            Some(m) => writeln!(f, "median_completion_s = {m:.3}"),
            None => writeln!(f, "median_completion_s = NA"),
        }
    }
}
