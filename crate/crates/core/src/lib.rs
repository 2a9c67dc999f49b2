//! Simulation of a Kilobot-style swarm that discovers its own lattice
//! coordinates from neighbour distances alone and then plays a role plan.
//!
//! [`protocol`] is what runs on each agent, [`lattice`] builds the ground
//! truth, [`sim`] is the deterministic message-passing engine and [`plan`]
//! holds role plans and frame rendering.

pub mod plan;
pub mod protocol;
pub mod lattice;
pub mod oracle;
pub mod scenario;
pub mod sim;
