//! Deterministic, tick-driven simulation of a whole swarm.
//!
//! Each global tick first delivers everything transmitted on the previous
//! tick (senders in index order, recipients in index order), then advances
//! every agent's clock in index order. An agent transmits on the local ticks
//! that fall on its slot of the message period. All randomness flows from
//! one seeded ChaCha8 stream, so a seed reproduces a run bit for bit.

mod medium;
mod metrics;

pub use medium::{AgentClock, Medium, NoiseError, NoiseModel};
pub use metrics::{median, BatchSummary, PhaseSpan, RunResult, RunStatus, StepSnapshot, CSV_HEADER};

use std::sync::Arc;

use log::{debug, info};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lattice::{self, verify_coords, LatticeError, LatticeSpec, Topology};
use crate::plan::{ActionPlan, Frame, Role};
use crate::protocol::{neighborhood_radius, Agent, AgentEvent, Payload, Phase, ProtocolConfig, TimersError};

/// When a run ends successfully.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopAt {
    /// Once every agent has classified itself.
    R1,
    /// Once every agent holds a complete coordinate.
    R2,
    /// Once every agent has finished `n` plan steps.
    Steps(u16),
    /// Only at the time limit.
    TimeLimit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub comm_range_mm: f64,
    pub msg_rate_hz: f64,
    pub tick_rate_hz: f64,
    pub max_sim_seconds: f64,
    pub stop: StopAt,
    pub protocol: ProtocolConfig,
    /// Capture a role frame every this many global ticks.
    pub frames_every: Option<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            comm_range_mm: 100.0,
            msg_rate_hz: 2.0,
            tick_rate_hz: 32.0,
            max_sim_seconds: 900.0,
            stop: StopAt::R2,
            protocol: ProtocolConfig::default(),
            frames_every: None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Timers(#[from] TimersError),
    #[error("neighbourhood radius {radius} mm exceeds the communication range {range} mm")]
    RangeTooShort { radius: f64, range: f64 },
    #[error("tick rate {tick} Hz must be a positive multiple of the message rate {msg} Hz")]
    Rates { tick: f64, msg: f64 },
    #[error("time limit must be positive")]
    TimeLimit,
}

impl SimConfig {
    /// Local ticks between two transmissions of one agent.
    pub fn period_ticks(&self) -> Result<u64, SimError> {
        let ratio = self.tick_rate_hz / self.msg_rate_hz;
        if !(ratio >= 1.0 && ratio.fract() == 0.0 && ratio.is_finite()) {
            return Err(SimError::Rates { tick: self.tick_rate_hz, msg: self.msg_rate_hz });
        }
        Ok(ratio as u64)
    }
}

/// Runs one simulation to completion, timeout, or the requested stop point.
pub fn run(spec: &LatticeSpec, config: &SimConfig, noise: &NoiseModel, plan: &ActionPlan) -> Result<RunResult, SimError> {
    noise.validate()?;
    let period = config.period_ticks()?;
    if !(config.max_sim_seconds > 0.0) {
        return Err(SimError::TimeLimit);
    }
    let radius = neighborhood_radius(spec.min_spacing());
    if radius > config.comm_range_mm {
        return Err(SimError::RangeTooShort { radius, range: config.comm_range_mm });
    }
    let mut protocol = config.protocol.clone();
    protocol.timers.r3_step = (plan.step_seconds * config.tick_rate_hz).round().max(1.0) as u32;
    protocol.timers.validate()?;
    if matches!(spec.topology, Topology::Hexagonal { .. }) {
        protocol.build_coordinates = false;
    }
    let stop = if protocol.build_coordinates { config.stop } else { StopAt::R1 };

    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let truth = lattice::generate(spec, &mut master)?;
    let n = truth.len();
    let protocol = Arc::new(protocol);
    let plan = Arc::new(plan.clone());
    let mut agents = Vec::with_capacity(n);
    let mut clocks = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n);
    for _ in 0..n {
        let skew = if noise.clock_skew_frac > 0.0 {
            master.gen_range(-noise.clock_skew_frac..=noise.clock_skew_frac)
        } else {
            0.0
        };
        clocks.push(AgentClock::new(skew, master.gen()));
        offsets.push(master.gen_range(0..period));
        agents.push(Agent::new(Arc::clone(&protocol), Arc::clone(&plan), master.gen()));
    }
    let biased = ((noise.biased_agent_frac * n as f64).round() as usize).min(n);
    let mut sender_bias = vec![0.0; n];
    let mut biased_agents = if noise.biased_apart {
        pick_apart(&mut master, &truth.adjacency, biased)
    } else {
        index::sample(&mut master, n, biased).into_vec()
    };
    biased_agents.sort_unstable();
    for &i in &biased_agents {
        sender_bias[i] = noise.biased_agent_mm;
    }
    let mut medium = Medium::new(&truth.positions, config.comm_range_mm, noise, sender_bias, ChaCha8Rng::seed_from_u64(master.gen()));

    let max_ticks = (config.max_sim_seconds * config.tick_rate_hz).ceil() as u64;
    let mut queue: Vec<(usize, Payload)> = Vec::new();
    let mut next: Vec<(usize, Payload)> = Vec::new();
    let mut heard = Vec::new();
    let mut obs = Observer::new(n);
    let mut frames = Vec::new();
    let mut status = RunStatus::Timeout;
    let mut tick = 0;

    while tick < max_ticks {
        tick += 1;
        for (sender, payload) in queue.drain(..) {
            obs.dropped += medium.deliver(sender, &mut heard);
            for &(r, dist) in &heard {
                if !agents[r].is_gone() {
                    agents[r].on_message(&payload, dist);
                }
            }
        }
        for (i, agent) in agents.iter_mut().enumerate() {
            for _ in 0..clocks[i].advance() {
                agent.on_tick();
                if (agent.state().local_tick + offsets[i]) % period == 0 {
                    if let Some(p) = agent.transmit() {
                        next.push((i, p));
                        obs.sent += 1;
                    }
                }
            }
        }
        std::mem::swap(&mut queue, &mut next);
        obs.observe(tick, &mut agents);
        if config.frames_every.is_some_and(|k| k > 0 && tick % k == 0) {
            frames.push(Frame { tick, roles: agents.iter().map(|a| a.state().role).collect() });
        }
        let done = match stop {
            StopAt::R1 => obs.r1_tick.is_some(),
            StopAt::R2 => obs.r2_tick.is_some(),
            StopAt::Steps(k) => obs.all_reached(&agents, Phase::r3_step(k)),
            StopAt::TimeLimit => false,
        };
        if done {
            status = RunStatus::Completed;
            break;
        }
    }
    if stop == StopAt::TimeLimit && obs.r2_tick.is_some() {
        status = RunStatus::Completed;
    }
    if status == RunStatus::Timeout {
        info!("seed {} timed out after {tick} ticks", config.seed);
    }

    let states: Vec<_> = agents.iter().map(|a| a.state().clone()).collect();
    let origins: Vec<usize> = (0..n).filter(|&i| states[i].is_origin).collect();
    let verification = truth.coords.as_ref().map(|_| {
        let assigned: Vec<_> = states.iter().map(|s| s.coord).collect();
        verify_coords(&assigned, &truth)
    });
    let origin = origins.first().copied();
    debug!("seed {} ended at tick {tick}: origins {origins:?}", config.seed);
    Ok(RunResult {
        seed: config.seed,
        status,
        ticks: tick,
        tick_rate_hz: config.tick_rate_hz,
        period_ticks: period,
        r1_tick: obs.r1_tick,
        r2_tick: obs.r2_tick,
        verification,
        origin,
        election_tie: origins.len() > 1,
        origin_dims: origin.and_then(|o| states[o].dims),
        faults: obs.faults,
        phase_skews: obs.skews,
        max_phase_gap: obs.max_gap,
        phase_regressions: obs.regressions,
        biased_agents,
        msgs_sent: obs.sent,
        msgs_dropped: obs.dropped,
        phase_spans: obs.spans,
        step_snapshots: obs.snapshots,
        frames,
        states,
        truth,
    })
}

/// Up to `k` agents in random order, none in another's lattice neighbourhood.
fn pick_apart(rng: &mut ChaCha8Rng, adjacency: &[Vec<usize>], k: usize) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for i in index::sample(rng, adjacency.len(), adjacency.len()) {
        if chosen.len() == k {
            break;
        }
        if !chosen.iter().any(|&c| adjacency[c].contains(&i)) {
            chosen.push(i);
        }
    }
    chosen
}

/// Per-tick bookkeeping over the agent population.
struct Observer {
    last_phase: Vec<Option<Phase>>,
    spans: Vec<Option<PhaseSpan>>,
    snapshots: Vec<StepSnapshot>,
    faults: Vec<(usize, crate::protocol::Fault)>,
    skews: usize,
    max_gap: u16,
    regressions: usize,
    sent: u64,
    dropped: u64,
    r1_tick: Option<u64>,
    r2_tick: Option<u64>,
}

impl Observer {
    fn new(n: usize) -> Self {
        Observer {
            last_phase: vec![None; n],
            spans: Vec::new(),
            snapshots: Vec::new(),
            faults: Vec::new(),
            skews: 0,
            max_gap: 0,
            regressions: 0,
            sent: 0,
            dropped: 0,
            r1_tick: None,
            r2_tick: None,
        }
    }

    fn all_reached(&self, agents: &[Agent], phase: Phase) -> bool {
        agents.iter().all(|a| a.is_departed() || a.state().phase >= phase)
    }

    fn observe(&mut self, tick: u64, agents: &mut [Agent]) {
        let mut min_active = Phase(u16::MAX);
        let mut max_active = Phase(0);
        let mut all_coords = true;
        for (i, agent) in agents.iter_mut().enumerate() {
            for e in agent.drain_events() {
                match e {
                    AgentEvent::Fault(f) => self.faults.push((i, f)),
                    AgentEvent::PhaseSkew { .. } => self.skews += 1,
                    AgentEvent::IdChanged { .. } => {}
                }
            }
            let s = agent.state();
            if self.last_phase[i].is_some_and(|p| s.phase < p) {
                self.regressions += 1;
            }
            let first_new = self.last_phase[i].map_or(0, |p| p.0 + 1);
            for p in first_new..=s.phase.0 {
                let idx = usize::from(p);
                if self.spans.len() <= idx {
                    self.spans.resize(idx + 1, None);
                }
                let span = self.spans[idx].get_or_insert(PhaseSpan { first: tick, last: tick, agents: 0 });
                span.last = tick;
                span.agents += 1;
            }
            self.last_phase[i] = Some(s.phase);
            if !agent.is_departed() {
                min_active = min_active.min(s.phase);
                max_active = max_active.max(s.phase);
                all_coords &= s.coord.is_complete();
            }
        }
        if min_active <= max_active {
            self.max_gap = self.max_gap.max(max_active.0 - min_active.0);
        }
        if self.r1_tick.is_none() && min_active >= Phase::SR2A_ELECT {
            self.r1_tick = Some(tick);
        }
        if self.r2_tick.is_none() && all_coords && self.faults.is_empty() {
            self.r2_tick = Some(tick);
        }
        // the first tick on which every remaining agent shows the same plan step
        if let (Some(k), true) = (min_active.r3_index(), min_active == max_active) {
            if self.snapshots.last().is_none_or(|s| s.step < k) {
                let roles: Vec<Role> = agents.iter().map(|a| a.state().role).collect();
                self.snapshots.push(StepSnapshot { step: k, tick, roles });
            }
        }
    }
}
