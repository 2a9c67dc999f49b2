//! The agent state machine.
//!
//! An [`Agent`] only sees its own clock ticks and the payloads it hears,
//! each tagged with a noisy distance estimate. The simulator decides when
//! ticks happen and when the agent gets a transmission slot.

use std::str::FromStr;
use std::sync::Arc;

use log::{debug, trace, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::classify::{classify_position, PositionGroup};
use super::coords::{corner_border_coords, infer_middle_coord, swarm_dimensions, Coord};
use super::geometry::{neighborhood_radius, ROBOT_BODY_LENGTH_MM};
use super::ids::{pick_fresh_id, IdSet, LocalId, Nonce};
use super::message::{CornerCounts, Message, OriginToken, Payload, MAX_DIMENSION, REPAIR_SLOTS};
use super::phase::{Phase, Timers};
use super::ProtocolError;
use crate::plan::{r3_role, ActionPlan, Role};

/// How repeated distance samples from one sender decide neighbourhood membership.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DistanceFilter {
    /// Running mean of all samples must stay below the radius.
    #[default]
    Mean,
    /// A single sample below the radius admits the sender for good.
    Any,
}

impl FromStr for DistanceFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(DistanceFilter::Mean),
            "any" => Ok(DistanceFilter::Any),
            other => Err(format!("unknown distance filter `{other}` (expected mean or any)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub timers: Timers,
    pub repair: bool,
    pub distance_filter: DistanceFilter,
    /// When false the agent stops after classification (non-rectangular lattices).
    pub build_coordinates: bool,
    /// Local ticks a departing agent keeps transmitting before going silent.
    pub depart_delay: u32,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            timers: Timers::default(),
            repair: true,
            distance_filter: DistanceFilter::default(),
            build_coordinates: true,
            depart_delay: 64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fault {
    FullBlacklist,
    Isolated,
    OriginDegenerate,
    CountInconsistent,
}

impl Fault {
    fn from_error(e: ProtocolError) -> Fault {
        match e {
            ProtocolError::FullBlacklist => Fault::FullBlacklist,
            ProtocolError::Isolated => Fault::Isolated,
            ProtocolError::OriginDegenerate => Fault::OriginDegenerate,
            ProtocolError::CountInconsistent | ProtocolError::EpsOutOfRange(_) => Fault::CountInconsistent,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AgentEvent {
    PhaseSkew { from: Phase, to: Phase },
    Fault(Fault),
    IdChanged { from: LocalId, to: LocalId },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeighborRecord {
    pub id: LocalId,
    /// Latest distance estimate, mm.
    pub distance: f64,
    pub neighbor_count: Option<u8>,
    pub group: PositionGroup,
    pub coord: Coord,
    /// Heard taking part in the perimeter count.
    pub counted: bool,
    pub via_repair: bool,
}

impl NeighborRecord {
    fn new(id: LocalId, distance: f64, via_repair: bool) -> Self {
        NeighborRecord {
            id,
            distance,
            neighbor_count: None,
            group: PositionGroup::Unknown,
            coord: Coord::UNASSIGNED,
            counted: false,
            via_repair,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    pub id: LocalId,
    pub nonce: Nonce,
    pub phase: Phase,
    pub phase_start: u64,
    pub local_tick: u64,
    pub blacklist: IdSet,
    /// Distinct `(id, nonce)` pairs heard during the second identifier phase.
    /// Two nonces under one id expose a clash to both owners once relayed.
    pub id_list: Vec<(LocalId, Nonce)>,
    /// Ids relayed to us, i.e. in use up to two hops away.
    pub two_hop: IdSet,
    pub min_msg_distance: f64,
    pub neighbors: Vec<NeighborRecord>,
    pub group: PositionGroup,
    pub origin_candidate: bool,
    pub token: Option<OriginToken>,
    /// Smallest token relayed by a non-corner agent.
    pub min_token: Option<OriginToken>,
    pub is_origin: bool,
    pub origin_id: Option<LocalId>,
    pub lower_id_border: Option<LocalId>,
    /// Position along the perimeter walk; zero until known.
    pub my_count: u16,
    pub count_from: Option<LocalId>,
    pub near_corner: bool,
    pub corners: CornerCounts,
    pub total_count: u16,
    pub totals_known: bool,
    /// For the origin: the neighbour whose count closed the perimeter walk.
    pub total_source: Option<LocalId>,
    pub dims: Option<(u16, u16)>,
    pub coord: Coord,
    pub role: Role,
    pub departed_at: Option<u64>,
    pub fault: Option<Fault>,
}

#[derive(Clone, Debug)]
pub struct Agent {
    state: AgentState,
    config: Arc<ProtocolConfig>,
    plan: Arc<ActionPlan>,
    rng: ChaCha8Rng,
    /// Per-sender (sum, samples) during the distance filtering window.
    tallies: Vec<(LocalId, f64, u32)>,
    relay_cursor: usize,
    /// Relay slots that expose an id clash, sent ahead of the round robin.
    urgent_relays: Vec<(LocalId, Nonce)>,
    repair_cursor: usize,
    pending_sync: Option<Phase>,
    events: Vec<AgentEvent>,
}

impl Agent {
    pub fn new(config: Arc<ProtocolConfig>, plan: Arc<ActionPlan>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let id = pick_fresh_id(&IdSet::new(), &mut rng).expect("empty blacklist");
        let nonce = Nonce(rng.gen());
        let state = AgentState {
            id,
            nonce,
            phase: Phase::SR1A_P1,
            phase_start: 0,
            local_tick: 0,
            blacklist: IdSet::new(),
            id_list: Vec::new(),
            two_hop: IdSet::new(),
            min_msg_distance: f64::INFINITY,
            neighbors: Vec::new(),
            group: PositionGroup::Unknown,
            origin_candidate: false,
            token: None,
            min_token: None,
            is_origin: false,
            origin_id: None,
            lower_id_border: None,
            my_count: 0,
            count_from: None,
            near_corner: false,
            corners: [0; 3],
            total_count: 0,
            totals_known: false,
            total_source: None,
            dims: None,
            coord: Coord::UNASSIGNED,
            role: Role::Off,
            departed_at: None,
            fault: None,
        };
        Agent {
            state,
            config,
            plan,
            rng,
            tallies: Vec::new(),
            relay_cursor: 0,
            urgent_relays: Vec::new(),
            repair_cursor: 0,
            pending_sync: None,
            events: Vec::new(),
        }
    }

    pub fn state(&self) -> &AgentState {
        &self.state
    }

    pub fn drain_events(&mut self) -> Vec<AgentEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn is_departed(&self) -> bool {
        self.state.role == Role::Departed
    }

    /// Departed long enough to have left the lattice.
    pub fn is_gone(&self) -> bool {
        self.state.departed_at.is_some_and(|t| self.state.local_tick >= t + u64::from(self.config.depart_delay))
    }

    fn neighbor(&self, id: LocalId) -> Option<&NeighborRecord> {
        self.state.neighbors.iter().find(|n| n.id == id)
    }

    fn neighbor_mut(&mut self, id: LocalId) -> Option<&mut NeighborRecord> {
        self.state.neighbors.iter_mut().find(|n| n.id == id)
    }

    fn is_neighbor(&self, id: LocalId) -> bool {
        self.neighbor(id).is_some()
    }

    fn fault(&mut self, f: Fault) {
        if self.state.fault.is_none() {
            debug!("agent {} faults with {f:?} in {}", self.state.id, self.state.phase);
            self.state.fault = Some(f);
            self.events.push(AgentEvent::Fault(f));
        }
    }

    fn phase_duration(&self, phase: Phase) -> Option<u32> {
        if !self.config.build_coordinates && phase >= Phase::SR2A_ELECT {
            return None;
        }
        self.config.timers.duration(phase)
    }

    // ---- clock ----------------------------------------------------------

    /// One local clock tick: phase timers expire here.
    pub fn on_tick(&mut self) {
        self.state.local_tick += 1;
        if let Some(d) = self.phase_duration(self.state.phase) {
            if self.state.local_tick - self.state.phase_start >= u64::from(d) {
                self.enter(self.state.phase.next());
            }
        }
    }

    /// Applies a phase index heard in a SYNC message.
    ///
    /// The next phase is simply entered; a larger jump is reported as skew
    /// and every skipped phase is still entered in order so its entry work
    /// happens. Current and past phases are ignored.
    pub fn sync_advance(&mut self, target: Phase) {
        let from = self.state.phase;
        if target <= from {
            return;
        }
        if target > from.next() {
            warn!("agent {} skips from {from} to {target}", self.state.id);
            self.events.push(AgentEvent::PhaseSkew { from, to: target });
        }
        while self.state.phase < target {
            self.enter(self.state.phase.next());
        }
    }

    fn enter(&mut self, phase: Phase) {
        trace!("agent {} enters {phase} at {}", self.state.id, self.state.local_tick);
        self.state.phase = phase;
        self.state.phase_start = self.state.local_tick;
        self.pending_sync = Some(phase);
        match phase {
            Phase::SR1C => {
                self.tallies.clear();
                self.try_classify(false);
            }
            Phase::SR2A_ELECT => {
                self.try_classify(true);
                if self.state.group == PositionGroup::Corner && self.state.fault.is_none() {
                    self.state.origin_candidate = true;
                    self.state.token = Some(OriginToken::new(self.rng.gen()));
                }
            }
            Phase::SR2A_AXES => {
                if self.state.origin_candidate && self.state.fault.is_none() {
                    self.sr2a_assign_axes();
                }
            }
            Phase::SR2B_COUNT => self.start_count_if_adjacent(),
            Phase::SR2C => {
                self.compute_perimeter_coord();
                self.try_infer();
            }
            p if p.r3_index().is_some() => self.update_role(),
            _ => {}
        }
    }

    // ---- transmission ---------------------------------------------------

    /// Payload for this transmission slot, if the agent has anything to say.
    pub fn transmit(&mut self) -> Option<Payload> {
        let msg = self.outgoing()?;
        match msg.encode() {
            Ok(p) => Some(p),
            Err(e) => {
                warn!("agent {} cannot encode {msg:?}: {e}", self.state.id);
                None
            }
        }
    }

    /// The message for the next slot. A pending SYNC takes the slot once.
    pub fn outgoing(&mut self) -> Option<Message> {
        if self.is_gone() {
            return None;
        }
        if let Some(p) = self.pending_sync.take() {
            return Some(Message::Sync { phase: p.0 });
        }
        if self.state.fault.is_some() {
            return None;
        }
        let s = &self.state;
        let id = s.id;
        match s.phase {
            Phase::SR1A_P1 | Phase::SR1B_P2 => Some(Message::Id { id }),
            Phase::SR1A_P2 => {
                let relay = if !self.urgent_relays.is_empty() {
                    Some(self.urgent_relays.remove(0))
                } else if s.id_list.is_empty() {
                    None
                } else {
                    let slot = s.id_list[self.relay_cursor % s.id_list.len()];
                    self.relay_cursor += 1;
                    Some(slot)
                };
                Some(Message::Relay { id, nonce: s.nonce, relay })
            }
            Phase::SR1B_REPAIR if self.config.repair => {
                let chunks = s.neighbors.len().div_ceil(REPAIR_SLOTS).max(1);
                let chunk = self.repair_cursor % chunks;
                self.repair_cursor += 1;
                let listed = s.neighbors.iter().skip(chunk * REPAIR_SLOTS).take(REPAIR_SLOTS).map(|n| n.id).collect();
                Some(Message::Repair { id, listed })
            }
            Phase::SR1B_REPAIR => Some(Message::Id { id }),
            Phase::SR1C => Some(Message::NeighborCount {
                id,
                count: s.neighbors.len().min(usize::from(u8::MAX)) as u8,
                group: s.group,
            }),
            _ if !self.config.build_coordinates => None,
            Phase::SR2A_ELECT => match s.group {
                PositionGroup::Corner if s.origin_candidate => s.token.map(|token| Message::Token { token }),
                PositionGroup::Corner => None,
                _ => s.min_token.map(|token| Message::Token { token }),
            },
            Phase::SR2A_AXES => match (s.is_origin, s.lower_id_border) {
                (true, Some(lower)) => Some(Message::Axes { id, x: 1, y: 1, lower_id_border: lower }),
                _ => None,
            },
            Phase::SR2B_COUNT if s.my_count > 0 && !s.is_origin => Some(Message::BorderCount {
                id,
                count: s.my_count,
                corners: s.corners,
                near_corner: s.near_corner,
            }),
            Phase::SR2B_COUNT => None,
            Phase::SR2B_DISTRIBUTE if s.totals_known => {
                Some(Message::Totals { id, total: s.total_count, corners: s.corners })
            }
            Phase::SR2B_DISTRIBUTE => None,
            _ if s.coord.is_unassigned() => None,
            _ => Some(Message::Coord {
                id,
                x: s.coord.x,
                y: s.coord.y,
                dims: s.dims.filter(|&(w, h)| w <= MAX_DIMENSION && h <= MAX_DIMENSION),
            }),
        }
    }

    // ---- reception ------------------------------------------------------

    /// Handles one received payload with its distance estimate in mm.
    pub fn on_message(&mut self, payload: &Payload, dist: f64) {
        match Message::decode(payload) {
            Ok(msg) => self.handle(msg, dist),
            Err(e) => trace!("agent {} drops undecodable payload: {e}", self.state.id),
        }
    }

    pub fn handle(&mut self, msg: Message, dist: f64) {
        if self.is_departed() {
            return;
        }
        if let Message::Sync { phase } = msg {
            self.sync_advance(Phase(phase));
            return;
        }
        if self.state.fault.is_some() {
            return;
        }
        let phase = self.state.phase;
        if phase <= Phase::SR1B_REPAIR {
            if let Some(sender) = msg.sender() {
                match phase {
                    Phase::SR1A_P1 | Phase::SR1A_P2 => {
                        let relay = match &msg {
                            Message::Relay { nonce, relay, .. } => Some((*nonce, *relay)),
                            _ => None,
                        };
                        self.sr1a_handle(sender, relay, dist);
                    }
                    Phase::SR1B_P2 => self.sr1b_filter(sender, dist),
                    _ => {}
                }
            }
        }
        match msg {
            Message::Repair { id, listed } if phase == Phase::SR1B_REPAIR && self.config.repair => {
                self.sr1b_repair(id, &listed, dist)
            }
            Message::NeighborCount { id, count, group } if phase >= Phase::SR1C => {
                if let Some(n) = self.neighbor_mut(id) {
                    n.neighbor_count = Some(count);
                    if group != PositionGroup::Unknown {
                        n.group = group;
                    }
                }
                if phase == Phase::SR1C {
                    self.try_classify(false);
                }
            }
            _ if !self.config.build_coordinates => {}
            Message::Token { token } if phase == Phase::SR2A_ELECT => self.sr2a_elect(token),
            Message::Axes { id, x: 1, y: 1, lower_id_border }
                if (Phase::SR2A_ELECT..=Phase::SR2B_COUNT).contains(&phase) =>
            {
                self.on_axes(id, lower_id_border)
            }
            Message::BorderCount { id, count, corners, near_corner } if self.is_neighbor(id) => {
                if count >= 1 {
                    if let Some(n) = self.neighbor_mut(id) {
                        n.counted = true;
                    }
                }
                if phase == Phase::SR2A_AXES || phase == Phase::SR2B_COUNT {
                    self.sr2b_count_step(id, count, corners, near_corner);
                }
            }
            Message::Totals { id, total, corners } if phase >= Phase::SR2B_COUNT && self.is_neighbor(id) => {
                self.sr2b_distribute(id, total, corners)
            }
            Message::Coord { id, x, y, dims } if phase >= Phase::SR2B_COUNT => self.on_coord(id, x, y, dims),
            _ => {}
        }
    }

    /// Identifier phases: blacklist heard ids, keep the relay list, and pick a
    /// new id on a detected clash. Also tracks the nearest sender.
    pub fn sr1a_handle(&mut self, sender: LocalId, relay: Option<(Nonce, Option<(LocalId, Nonce)>)>, dist: f64) {
        let s = &mut self.state;
        if s.phase == Phase::SR1A_P1 {
            s.blacklist.insert(sender);
            if sender == s.id {
                let exclude = s.blacklist;
                self.repick(exclude);
            }
            return;
        }
        if dist >= ROBOT_BODY_LENGTH_MM && dist < s.min_msg_distance {
            s.min_msg_distance = dist;
        }
        let Some((nonce, slot)) = relay else {
            // a straggler still in the first phase
            s.blacklist.insert(sender);
            if sender == s.id {
                let exclude = s.blacklist;
                self.repick(exclude);
            }
            return;
        };
        let (my_id, my_nonce) = (s.id, s.nonce);
        if (sender, nonce) != (my_id, my_nonce) && !s.id_list.contains(&(sender, nonce)) {
            // a second nonce under a known id: tell both owners first
            let rivals: Vec<_> = s.id_list.iter().copied().filter(|&(i, _)| i == sender).collect();
            if !rivals.is_empty() {
                self.urgent_relays.extend(rivals);
                self.urgent_relays.push((sender, nonce));
            }
            s.id_list.push((sender, nonce));
        }
        if let Some((i, _)) = slot {
            s.two_hop.insert(i);
        }
        let clash = |(i, n): (LocalId, Nonce)| i == my_id && n != my_nonce;
        if clash((sender, nonce)) || slot.is_some_and(clash) {
            s.blacklist.insert(my_id);
            let taken: IdSet = s.id_list.iter().map(|&(i, _)| i).collect();
            let exclude = s.blacklist.union(&taken).union(&s.two_hop);
            self.repick(exclude);
        }
    }

    fn repick(&mut self, exclude: IdSet) {
        match pick_fresh_id(&exclude, &mut self.rng) {
            Ok(new) => {
                let from = self.state.id;
                debug!("agent {from} takes id {new}");
                self.state.id = new;
                self.events.push(AgentEvent::IdChanged { from, to: new });
            }
            Err(e) => self.fault(Fault::from_error(e)),
        }
    }

    /// Neighbourhood filter: admits senders whose distance estimate is inside
    /// the radius derived from the nearest sender seen earlier.
    pub fn sr1b_filter(&mut self, sender: LocalId, dist: f64) {
        let radius = neighborhood_radius(self.state.min_msg_distance);
        match self.config.distance_filter {
            DistanceFilter::Any => {
                if dist < radius && !self.is_neighbor(sender) {
                    self.state.neighbors.push(NeighborRecord::new(sender, dist, false));
                } else if let Some(n) = self.neighbor_mut(sender) {
                    n.distance = dist;
                }
            }
            DistanceFilter::Mean => {
                let mean = match self.tallies.iter_mut().find(|t| t.0 == sender) {
                    Some(t) => {
                        t.1 += dist;
                        t.2 += 1;
                        t.1 / f64::from(t.2)
                    }
                    None => {
                        self.tallies.push((sender, dist, 1));
                        dist
                    }
                };
                let pos = self.state.neighbors.iter().position(|n| n.id == sender);
                match (mean < radius, pos) {
                    (true, Some(i)) => self.state.neighbors[i].distance = mean,
                    (true, None) => self.state.neighbors.push(NeighborRecord::new(sender, mean, false)),
                    (false, Some(i)) if !self.state.neighbors[i].via_repair => {
                        self.state.neighbors.remove(i);
                    }
                    _ => {}
                }
            }
        }
    }

    /// Symmetric repair: a sender that lists us becomes our neighbour.
    pub fn sr1b_repair(&mut self, sender: LocalId, listed: &[LocalId], dist: f64) {
        if listed.contains(&self.state.id) && !self.is_neighbor(sender) {
            debug!("agent {} adds {sender} by repair", self.state.id);
            self.state.neighbors.push(NeighborRecord::new(sender, dist, true));
        }
    }

    fn try_classify(&mut self, final_call: bool) {
        if self.state.group != PositionGroup::Unknown || self.state.fault.is_some() {
            return;
        }
        let counts: Vec<u16> =
            self.state.neighbors.iter().filter_map(|n| n.neighbor_count.map(u16::from)).collect();
        let complete = !counts.is_empty() && counts.len() == self.state.neighbors.len();
        if !(complete || final_call) {
            return;
        }
        if !complete && !counts.is_empty() {
            debug!("agent {} classifies on {}/{} counts", self.state.id, counts.len(), self.state.neighbors.len());
        }
        let mine = self.state.neighbors.len().min(usize::from(u8::MAX)) as u16;
        match classify_position(mine, &counts) {
            Ok(g) => self.state.group = g,
            Err(e) => self.fault(Fault::from_error(e)),
        }
    }

    /// Origin election: corners drop out on hearing a smaller token, other
    /// agents relay the smallest token heard.
    pub fn sr2a_elect(&mut self, token: OriginToken) {
        let s = &mut self.state;
        if s.group == PositionGroup::Corner {
            if s.origin_candidate && s.token.is_some_and(|mine| token < mine) {
                s.origin_candidate = false;
            }
        } else if s.min_token.is_none_or(|m| token < m) {
            s.min_token = Some(token);
        }
    }

    /// The elected corner becomes (1,1) and orients the axes by its two border neighbours.
    pub fn sr2a_assign_axes(&mut self) {
        let mut borders: Vec<LocalId> =
            self.state.neighbors.iter().filter(|n| n.group == PositionGroup::Border).map(|n| n.id).collect();
        borders.sort_unstable();
        if borders.len() != 2 {
            self.state.origin_candidate = false;
            self.fault(Fault::OriginDegenerate);
            return;
        }
        let s = &mut self.state;
        s.is_origin = true;
        s.coord = Coord::ORIGIN;
        s.my_count = 1;
        s.lower_id_border = Some(borders[0]);
        debug!("agent {} is the origin; x axis towards {}", s.id, borders[0]);
    }

    fn on_axes(&mut self, origin: LocalId, lower: LocalId) {
        let s = &self.state;
        if !self.is_neighbor(origin) || s.group != PositionGroup::Border || s.origin_id.is_some() {
            return;
        }
        let coord = if lower == s.id { Coord::new(2, 1) } else { Coord::new(1, 2) };
        let s = &mut self.state;
        s.origin_id = Some(origin);
        s.lower_id_border = Some(lower);
        s.coord = coord;
        if s.phase == Phase::SR2B_COUNT {
            self.start_count_if_adjacent();
        }
    }

    /// (2,1) opens the perimeter walk as soon as it knows both its role and the phase.
    fn start_count_if_adjacent(&mut self) {
        if self.state.coord == Coord::new(2, 1) && self.state.my_count == 0 {
            self.state.my_count = 2;
            self.state.count_from = self.state.origin_id;
            self.state.near_corner = self.adjacent_uncounted_corner();
        }
    }

    fn adjacent_uncounted_corner(&self) -> bool {
        self.state
            .neighbors
            .iter()
            .any(|n| n.group == PositionGroup::Corner && !n.counted && Some(n.id) != self.state.origin_id)
    }

    /// One step of the perimeter walk, driven by a neighbour's count message.
    pub fn sr2b_count_step(&mut self, sender: LocalId, count: u16, corners: CornerCounts, near_corner: bool) {
        let s = &self.state;
        if s.is_origin {
            if count > 3 && !s.totals_known && s.phase == Phase::SR2B_COUNT {
                let s = &mut self.state;
                s.total_count = count;
                s.corners = corners;
                s.totals_known = true;
                s.total_source = Some(sender);
                match swarm_dimensions(corners, count) {
                    Ok(d) => {
                        s.dims = Some((d.width, d.height));
                        debug!("origin closes the walk: {}x{} ({} agents)", d.width, d.height, d.population);
                        self.enter(Phase::SR2B_DISTRIBUTE);
                    }
                    Err(e) => self.fault(Fault::from_error(e)),
                }
            }
            return;
        }
        if s.my_count != 0 {
            return;
        }
        match s.group {
            PositionGroup::Corner if count >= 2 => {
                let mine = count + 1;
                let s = &mut self.state;
                s.my_count = mine;
                s.count_from = Some(sender);
                s.corners = corners;
                match s.corners.iter_mut().find(|c| **c == 0) {
                    Some(slot) => *slot = mine,
                    None => self.fault(Fault::CountInconsistent),
                }
            }
            PositionGroup::Border if !near_corner => {
                let floor = if s.coord == Coord::new(1, 2) { 3 } else { 1 };
                if count > floor {
                    let s = &mut self.state;
                    s.my_count = count + 1;
                    s.count_from = Some(sender);
                    s.corners = corners;
                    self.state.near_corner = self.adjacent_uncounted_corner();
                }
            }
            _ => {}
        }
    }

    /// Totals travel back along the walk; the origin stops when they return.
    pub fn sr2b_distribute(&mut self, sender: LocalId, total: u16, corners: CornerCounts) {
        let s = &mut self.state;
        if s.is_origin {
            if s.phase == Phase::SR2B_DISTRIBUTE && s.total_source == Some(sender) {
                self.enter(Phase::SR2C);
            }
            return;
        }
        if s.totals_known || s.my_count == 0 || s.count_from != Some(sender) {
            return;
        }
        s.total_count = total;
        s.corners = corners;
        s.totals_known = true;
        match swarm_dimensions(corners, total) {
            Ok(d) => s.dims = Some((d.width, d.height)),
            Err(e) => return self.fault(Fault::from_error(e)),
        }
        if self.state.phase >= Phase::SR2C {
            self.compute_perimeter_coord();
        }
    }

    fn compute_perimeter_coord(&mut self) {
        let s = &self.state;
        if !s.group.is_perimeter() || s.coord.is_complete() || s.my_count == 0 || !s.totals_known {
            return;
        }
        match corner_border_coords(s.my_count, s.corners) {
            Ok(c) => {
                self.state.coord = c;
                self.update_role();
            }
            Err(e) => self.fault(Fault::from_error(e)),
        }
    }

    fn on_coord(&mut self, sender: LocalId, x: u16, y: u16, dims: Option<(u16, u16)>) {
        let Some(n) = self.neighbor_mut(sender) else { return };
        if n.coord.x == 0 {
            n.coord.x = x;
        }
        if n.coord.y == 0 {
            n.coord.y = y;
        }
        if self.state.dims.is_none() {
            self.state.dims = dims;
        }
        if self.state.phase >= Phase::SR2C {
            self.try_infer();
        }
    }

    fn try_infer(&mut self) {
        if self.state.group != PositionGroup::Middle || self.state.coord.is_complete() {
            return;
        }
        let heard: Vec<Coord> = self.state.neighbors.iter().map(|n| n.coord).collect();
        let (ix, iy) = infer_middle_coord(&heard);
        let c = &mut self.state.coord;
        if let (0, Some(x)) = (c.x, ix) {
            c.x = x;
        }
        if let (0, Some(y)) = (c.y, iy) {
            c.y = y;
        }
        if c.is_complete() {
            self.update_role();
        }
    }

    fn update_role(&mut self) {
        let Some(step) = self.state.phase.r3_index() else { return };
        if self.state.role == Role::Departed || !self.state.coord.is_complete() {
            return;
        }
        let role = r3_role(&self.plan, self.state.coord, self.state.dims, u64::from(step));
        if role == Role::Departed {
            debug!("agent {} at {} departs", self.state.id, self.state.coord);
            self.state.departed_at = Some(self.state.local_tick);
        }
        self.state.role = role;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent() -> Agent {
        Agent::new(Arc::new(ProtocolConfig::default()), Arc::new(ActionPlan::default()), 1)
    }

    fn agent_in(phase: Phase) -> Agent {
        let mut a = agent();
        a.state.phase = phase;
        a.state.id = LocalId(50);
        a
    }

    fn with_neighbors(mut a: Agent, ids: &[(u8, PositionGroup)]) -> Agent {
        for &(id, g) in ids {
            let mut n = NeighborRecord::new(LocalId(id), 35.0, false);
            n.group = g;
            a.state.neighbors.push(n);
        }
        a
    }

    #[test]
    fn first_phase_collision_picks_new_id() {
        let mut a = agent_in(Phase::SR1A_P1);
        a.handle(Message::Id { id: LocalId(50) }, 35.0);
        assert_ne!(a.state.id, LocalId(50));
        assert!(a.state.blacklist.contains(LocalId(50)));
        assert!(matches!(a.drain_events()[..], [AgentEvent::IdChanged { .. }]));
    }

    #[test]
    fn relayed_clash_is_detected_and_echo_is_not() {
        let mut a = agent_in(Phase::SR1A_P2);
        let mine = a.state.nonce;
        let other = Nonce(mine.0.wrapping_add(1));
        a.handle(Message::Relay { id: LocalId(7), nonce: Nonce(3), relay: Some((LocalId(50), mine)) }, 40.0);
        assert_eq!(a.state.id, LocalId(50));
        a.handle(Message::Relay { id: LocalId(7), nonce: Nonce(3), relay: Some((LocalId(50), other)) }, 40.0);
        assert_ne!(a.state.id, LocalId(50));
        assert_ne!(a.state.id, LocalId(7), "ids in the relay list are avoided");
        assert_eq!(a.state.min_msg_distance, 40.0);
    }

    #[test]
    fn distance_filter_uses_nearest_sender() {
        let mut a = agent_in(Phase::SR1A_P2);
        a.handle(Message::Relay { id: LocalId(1), nonce: Nonce(1), relay: None }, 20.0);
        a.handle(Message::Relay { id: LocalId(1), nonce: Nonce(1), relay: None }, 33.0);
        assert_eq!(a.state.min_msg_distance, 33.0);
        a.state.phase = Phase::SR1B_P2;
        a.handle(Message::Id { id: LocalId(9) }, 60.0);
        assert!(a.state.neighbors.is_empty());
        a.handle(Message::Id { id: LocalId(9) }, 50.0);
        a.handle(Message::Id { id: LocalId(9) }, 50.0);
        assert_eq!(a.state.neighbors.len(), 1);
    }

    #[test]
    fn mean_filter_drops_a_lucky_sample() {
        let mut a = agent_in(Phase::SR1B_P2);
        a.state.min_msg_distance = 35.0; // radius 62.5
        a.sr1b_filter(LocalId(4), 60.0);
        assert_eq!(a.state.neighbors.len(), 1);
        a.sr1b_filter(LocalId(4), 70.0);
        assert!(a.state.neighbors.is_empty());

        let mut b = Agent { config: Arc::new(ProtocolConfig { distance_filter: DistanceFilter::Any, ..Default::default() }), ..agent_in(Phase::SR1B_P2) };
        b.state.min_msg_distance = 35.0;
        b.sr1b_filter(LocalId(4), 60.0);
        b.sr1b_filter(LocalId(4), 70.0);
        assert_eq!(b.state.neighbors.len(), 1);
    }

    #[test]
    fn repair_adds_listing_sender() {
        let mut a = with_neighbors(agent_in(Phase::SR1B_REPAIR), &[(13, PositionGroup::Unknown)]);
        a.state.id = LocalId(17);
        a.handle(Message::Repair { id: LocalId(9), listed: vec![LocalId(17), LocalId(22), LocalId(31)] }, 61.0);
        assert!(a.is_neighbor(LocalId(9)));
        a.handle(Message::Repair { id: LocalId(10), listed: vec![LocalId(22)] }, 40.0);
        assert!(!a.is_neighbor(LocalId(10)));
    }

    #[test]
    fn classification_waits_for_all_counts() {
        let mut a = with_neighbors(agent_in(Phase::SR1C), &[(1, PositionGroup::Unknown), (2, PositionGroup::Unknown), (3, PositionGroup::Unknown)]);
        a.handle(Message::NeighborCount { id: LocalId(1), count: 5, group: PositionGroup::Unknown }, 35.0);
        a.handle(Message::NeighborCount { id: LocalId(2), count: 5, group: PositionGroup::Unknown }, 35.0);
        assert_eq!(a.state.group, PositionGroup::Unknown);
        a.handle(Message::NeighborCount { id: LocalId(3), count: 8, group: PositionGroup::Middle }, 35.0);
        assert_eq!(a.state.group, PositionGroup::Corner);
        assert_eq!(a.neighbor(LocalId(3)).unwrap().group, PositionGroup::Middle);
    }

    #[test]
    fn isolated_agent_faults_at_election() {
        let mut a = agent_in(Phase::SR1C);
        a.enter(Phase::SR2A_ELECT);
        assert_eq!(a.state.fault, Some(Fault::Isolated));
        assert_eq!(a.outgoing(), Some(Message::Sync { phase: Phase::SR2A_ELECT.0 }));
        assert_eq!(a.outgoing(), None);
    }

    #[test]
    fn corner_with_larger_token_goes_quiet() {
        let mut a = agent_in(Phase::SR2A_ELECT);
        a.state.group = PositionGroup::Corner;
        a.state.origin_candidate = true;
        a.state.token = Some(OriginToken::new(0x9_0000_0000_0000_0000));
        a.sr2a_elect(OriginToken::new(0x1_0000_0000_0000_0000));
        assert!(!a.state.origin_candidate);
        assert_eq!(a.outgoing(), None);
    }

    #[test]
    fn non_corner_relays_smallest_token() {
        let mut a = agent_in(Phase::SR2A_ELECT);
        a.state.group = PositionGroup::Middle;
        a.sr2a_elect(OriginToken::new(9));
        a.sr2a_elect(OriginToken::new(12));
        a.sr2a_elect(OriginToken::new(4));
        assert_eq!(a.outgoing(), Some(Message::Token { token: OriginToken::new(4) }));
    }

    #[test]
    fn origin_orients_axes_by_lower_border_id() {
        let mut a = with_neighbors(agent_in(Phase::SR2A_ELECT), &[(40, PositionGroup::Border), (12, PositionGroup::Border), (3, PositionGroup::Middle)]);
        a.state.group = PositionGroup::Corner;
        a.state.origin_candidate = true;
        a.enter(Phase::SR2A_AXES);
        a.pending_sync = None;
        assert_eq!(a.state.coord, Coord::ORIGIN);
        assert_eq!(a.outgoing(), Some(Message::Axes { id: LocalId(50), x: 1, y: 1, lower_id_border: LocalId(12) }));

        let mut b = with_neighbors(agent_in(Phase::SR2A_ELECT), &[(40, PositionGroup::Border), (12, PositionGroup::Border), (3, PositionGroup::Border)]);
        b.state.group = PositionGroup::Corner;
        b.state.origin_candidate = true;
        b.enter(Phase::SR2A_AXES);
        assert_eq!(b.state.fault, Some(Fault::OriginDegenerate));
    }

    #[test]
    fn axes_message_assigns_first_two_borders() {
        for (me, expected) in [(12, Coord::new(2, 1)), (40, Coord::new(1, 2))] {
            let mut a = with_neighbors(agent_in(Phase::SR2A_AXES), &[(9, PositionGroup::Corner)]);
            a.state.id = LocalId(me);
            a.state.group = PositionGroup::Border;
            a.handle(Message::Axes { id: LocalId(9), x: 1, y: 1, lower_id_border: LocalId(12) }, 35.0);
            assert_eq!(a.state.coord, expected);
        }
    }

    #[test]
    fn count_step_increments_and_flags_near_corner() {
        let mut a = with_neighbors(agent_in(Phase::SR2B_COUNT), &[(1, PositionGroup::Border), (2, PositionGroup::Corner), (3, PositionGroup::Middle)]);
        a.state.group = PositionGroup::Border;
        a.handle(Message::BorderCount { id: LocalId(1), count: 5, corners: [0; 3], near_corner: false }, 35.0);
        assert_eq!(a.state.my_count, 6);
        assert!(a.state.near_corner);
        assert_eq!(a.outgoing().unwrap().kind(), super::super::MessageKind::Sr2bCountNearCorner);
    }

    #[test]
    fn border_ignores_near_corner_count_but_corner_takes_it() {
        let mut b = with_neighbors(agent_in(Phase::SR2B_COUNT), &[(1, PositionGroup::Border)]);
        b.state.group = PositionGroup::Border;
        b.handle(Message::BorderCount { id: LocalId(1), count: 5, corners: [0; 3], near_corner: true }, 35.0);
        assert_eq!(b.state.my_count, 0);

        let mut c = with_neighbors(agent_in(Phase::SR2B_COUNT), &[(1, PositionGroup::Border)]);
        c.state.group = PositionGroup::Corner;
        c.handle(Message::BorderCount { id: LocalId(1), count: 5, corners: [0; 3], near_corner: true }, 35.0);
        assert_eq!(c.state.my_count, 6);
        assert_eq!(c.state.corners, [6, 0, 0]);
    }

    #[test]
    fn second_axis_border_waits_for_the_walk_to_return() {
        let mut a = with_neighbors(agent_in(Phase::SR2B_COUNT), &[(1, PositionGroup::Border), (9, PositionGroup::Corner)]);
        a.state.group = PositionGroup::Border;
        a.state.coord = Coord::new(1, 2);
        a.state.origin_id = Some(LocalId(9));
        a.handle(Message::BorderCount { id: LocalId(1), count: 2, corners: [0; 3], near_corner: false }, 35.0);
        assert_eq!(a.state.my_count, 0);
        a.handle(Message::BorderCount { id: LocalId(1), count: 15, corners: [5, 9, 13], near_corner: false }, 35.0);
        assert_eq!(a.state.my_count, 16);
        assert!(!a.state.near_corner, "the origin is not an uncounted corner");
    }

    #[test]
    fn origin_closes_walk_and_waits_for_totals() {
        let mut a = with_neighbors(agent_in(Phase::SR2B_COUNT), &[(1, PositionGroup::Border), (2, PositionGroup::Border)]);
        a.state.group = PositionGroup::Corner;
        a.state.is_origin = true;
        a.state.coord = Coord::ORIGIN;
        a.handle(Message::BorderCount { id: LocalId(1), count: 2, corners: [0; 3], near_corner: true }, 35.0);
        assert_eq!(a.state.phase, Phase::SR2B_COUNT);
        a.handle(Message::BorderCount { id: LocalId(2), count: 16, corners: [5, 9, 13], near_corner: false }, 35.0);
        assert_eq!(a.state.phase, Phase::SR2B_DISTRIBUTE);
        assert_eq!(a.state.dims, Some((5, 5)));
        a.handle(Message::Totals { id: LocalId(1), total: 16, corners: [5, 9, 13] }, 35.0);
        assert_eq!(a.state.phase, Phase::SR2B_DISTRIBUTE);
        a.handle(Message::Totals { id: LocalId(2), total: 16, corners: [5, 9, 13] }, 35.0);
        assert_eq!(a.state.phase, Phase::SR2C);
    }

    #[test]
    fn totals_only_from_count_source() {
        let mut a = with_neighbors(agent_in(Phase::SR2B_DISTRIBUTE), &[(1, PositionGroup::Border), (2, PositionGroup::Border)]);
        a.state.group = PositionGroup::Border;
        a.state.my_count = 10;
        a.state.count_from = Some(LocalId(1));
        a.handle(Message::Totals { id: LocalId(2), total: 16, corners: [5, 9, 13] }, 35.0);
        assert!(!a.state.totals_known);
        a.handle(Message::Totals { id: LocalId(1), total: 16, corners: [5, 9, 13] }, 35.0);
        assert!(a.state.totals_known);
        a.enter(Phase::SR2C);
        assert_eq!(a.state.coord, Coord::new(4, 5));
    }

    #[test]
    fn middle_infers_from_partial_neighbours() {
        let mut a = with_neighbors(
            agent_in(Phase::SR2C),
            &[(1, PositionGroup::Border), (2, PositionGroup::Border), (3, PositionGroup::Border), (4, PositionGroup::Middle), (5, PositionGroup::Middle), (6, PositionGroup::Middle)],
        );
        a.state.group = PositionGroup::Middle;
        a.handle(Message::Coord { id: LocalId(1), x: 2, y: 1, dims: Some((5, 5)) }, 35.0);
        a.handle(Message::Coord { id: LocalId(2), x: 3, y: 1, dims: None }, 35.0);
        a.handle(Message::Coord { id: LocalId(3), x: 4, y: 1, dims: None }, 35.0);
        assert_eq!(a.state.coord, Coord::new(3, 0));
        assert_eq!(a.outgoing().unwrap(), Message::Coord { id: LocalId(50), x: 3, y: 0, dims: Some((5, 5)) });
        a.handle(Message::Coord { id: LocalId(4), x: 0, y: 3, dims: None }, 35.0);
        assert_eq!(a.state.coord, Coord::new(3, 0));
        a.handle(Message::Coord { id: LocalId(5), x: 0, y: 2, dims: None }, 35.0);
        assert_eq!(a.state.coord, Coord::new(3, 2));
        // coordinates are written once
        a.handle(Message::Coord { id: LocalId(6), x: 7, y: 7, dims: None }, 35.0);
        assert_eq!(a.state.coord, Coord::new(3, 2));
    }

    #[test]
    fn sync_advances_and_reports_skew() {
        let mut a = agent_in(Phase::r3_step(3));
        a.sync_advance(Phase::r3_step(4));
        assert_eq!(a.state.phase, Phase::r3_step(4));
        assert!(a.drain_events().is_empty());
        a.sync_advance(Phase::r3_step(2));
        assert_eq!(a.state.phase, Phase::r3_step(4));
        a.sync_advance(Phase::r3_step(7));
        assert_eq!(a.state.phase, Phase::r3_step(7));
        assert_eq!(a.drain_events(), vec![AgentEvent::PhaseSkew { from: Phase::r3_step(4), to: Phase::r3_step(7) }]);
        assert_eq!(a.outgoing(), Some(Message::Sync { phase: Phase::r3_step(7).0 }));
    }

    #[test]
    fn timers_drive_phases() {
        let mut a = agent();
        for _ in 0..300 {
            a.on_tick();
        }
        assert_eq!(a.state.phase, Phase::SR1A_P2);
        for _ in 0..500 {
            a.on_tick();
        }
        assert_eq!(a.state.phase, Phase::SR1B_P2);
    }

    #[test]
    fn departure_is_absorbing_and_goes_silent() {
        let plan = ActionPlan::parse("step\nall -> depart\nend\nstep\nall -> red\nend").unwrap();
        let mut a = Agent::new(Arc::new(ProtocolConfig::default()), Arc::new(plan), 3);
        a.state.coord = Coord::new(2, 2);
        a.state.phase = Phase::SR2C;
        a.enter(Phase::r3_step(0));
        assert_eq!(a.state.role, Role::Departed);
        a.enter(Phase::r3_step(1));
        assert_eq!(a.state.role, Role::Departed);
        assert!(a.outgoing().is_some());
        for _ in 0..64 {
            a.on_tick();
        }
        assert!(a.is_gone());
        assert_eq!(a.outgoing(), None);
    }
}
