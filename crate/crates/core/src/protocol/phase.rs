//! Protocol phases and their local-clock durations.
//!
//! Phases are totally ordered by a 16-bit index so that SYNC messages can
//! carry them. Plan steps follow the last coordinate phase, one index each.

use std::fmt;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Phase(pub u16);

impl Phase {
    pub const SR1A_P1: Phase = Phase(0);
    pub const SR1A_P2: Phase = Phase(1);
    pub const SR1B_P2: Phase = Phase(2);
    pub const SR1B_REPAIR: Phase = Phase(3);
    pub const SR1C: Phase = Phase(4);
    pub const SR2A_ELECT: Phase = Phase(5);
    pub const SR2A_AXES: Phase = Phase(6);
    pub const SR2B_COUNT: Phase = Phase(7);
    pub const SR2B_DISTRIBUTE: Phase = Phase(8);
    pub const SR2C: Phase = Phase(9);
    const R3_BASE: u16 = 10;

    pub const fn r3_step(k: u16) -> Phase {
        Phase(Self::R3_BASE + k)
    }

    /// Plan step index, for R3 phases.
    pub fn r3_index(self) -> Option<u16> {
        self.0.checked_sub(Self::R3_BASE)
    }

    pub fn next(self) -> Phase {
        Phase(self.0.saturating_add(1))
    }

    pub fn name(self) -> String {
        const NAMES: [&str; 10] = [
            "SR1A_P1",
            "SR1A_P2",
            "SR1B_P2",
            "SR1B_REPAIR",
            "SR1C",
            "SR2A_ELECT",
            "SR2A_AXES",
            "SR2B_COUNT",
            "SR2B_DISTRIBUTE",
            "SR2C",
        ];
        match self.r3_index() {
            Some(k) => format!("R3_STEP({k})"),
            None => NAMES[self.0 as usize].to_string(),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Phase lengths in local ticks.
///
/// `t1` and `t2` end the two identifier phases, `t3` ends neighbour
/// discovery (repair occupies its last `repair_delay` ticks) and `t4` is the
/// origin election window. Both perimeter-count phases are event driven.
#[derive(Clone, Debug, PartialEq)]
pub struct Timers {
    pub t1: u32,
    pub t2: u32,
    pub t3: u32,
    pub t4: u32,
    pub repair_delay: u32,
    pub classify: u32,
    pub axes: u32,
    pub coords: u32,
    pub r3_step: u32,
}

impl Default for Timers {
    fn default() -> Self {
        Timers { t1: 300, t2: 800, t3: 1600, t4: 400, repair_delay: 160, classify: 320, axes: 160, coords: 640, r3_step: 256 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TimersError {
    #[error("timers must satisfy 0 < t1 < t2 < t3 - repair_delay (t1={t1}, t2={t2}, t3={t3}, repair_delay={repair_delay})")]
    Order { t1: u32, t2: u32, t3: u32, repair_delay: u32 },
    #[error("timer `{0}` must be positive")]
    Zero(&'static str),
}

impl Timers {
    pub fn validate(&self) -> Result<(), TimersError> {
        let repair_start = self.t3.checked_sub(self.repair_delay);
        if !(self.t1 > 0 && self.t1 < self.t2 && repair_start.is_some_and(|s| self.t2 < s)) {
            return Err(TimersError::Order { t1: self.t1, t2: self.t2, t3: self.t3, repair_delay: self.repair_delay });
        }
        for (name, v) in
            [("t4", self.t4), ("classify", self.classify), ("axes", self.axes), ("coords", self.coords), ("r3_step", self.r3_step)]
        {
            if v == 0 {
                return Err(TimersError::Zero(name));
            }
        }
        Ok(())
    }

    /// Ticks spent in `phase`, or `None` when the phase ends on an event.
    pub fn duration(&self, phase: Phase) -> Option<u32> {
        Some(match phase {
            Phase::SR1A_P1 => self.t1,
            Phase::SR1A_P2 => self.t2 - self.t1,
            Phase::SR1B_P2 => self.t3 - self.repair_delay - self.t2,
            Phase::SR1B_REPAIR => self.repair_delay,
            Phase::SR1C => self.classify,
            Phase::SR2A_ELECT => self.t4,
            Phase::SR2A_AXES => self.axes,
            Phase::SR2B_COUNT | Phase::SR2B_DISTRIBUTE => return None,
            Phase::SR2C => self.coords,
            _ => self.r3_step,
        })
    }
}
