//! The per-agent side of the self-localisation protocol: message codec,
//! identifier handling, neighbourhood geometry, position classification,
//! coordinate derivation, phase clocks and the agent state machine.

mod agent;
mod classify;
mod coords;
mod geometry;
mod ids;
mod message;
mod phase;

pub use agent::{Agent, AgentEvent, AgentState, DistanceFilter, Fault, NeighborRecord, ProtocolConfig};
pub use classify::{classify_position, PositionGroup};
pub use coords::{corner_border_coords, infer_middle_coord, swarm_dimensions, Coord, SwarmDims};
pub use geometry::{max_long_spacing, neighborhood_radius, spacing_feasible, ROBOT_BODY_LENGTH_MM};
pub use ids::{pick_fresh_id, IdSet, LocalId, Nonce};
pub use message::{
    CodecError, CornerCounts, Message, MessageKind, OriginToken, Payload, MAX_BORDER_COUNT, MAX_DIMENSION,
    PAYLOAD_LEN, REPAIR_SLOTS,
};
pub use phase::{Phase, Timers, TimersError};

use thiserror::Error;

#[derive(Clone, Copy, Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("every local id is blacklisted")]
    FullBlacklist,
    #[error("placement error {0} is outside the admissible range")]
    EpsOutOfRange(f64),
    #[error("agent has no neighbours")]
    Isolated,
    #[error("perimeter counts are inconsistent")]
    CountInconsistent,
    #[error("origin corner does not see exactly two border neighbours")]
    OriginDegenerate,
}
