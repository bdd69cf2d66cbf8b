//! Full-replication comparators.
//!
//! `fullop` broadcasts every generated operation (compacted per sync where the
//! data type supports it). `stateship` broadcasts the observable state whenever
//! it changes, in the style of a state-based computational CRDT.

mod fullop;
mod stateship;

pub use fullop::FullOpReplica;
pub use stateship::{
    Contributions, ShipBody, ShipMessage, StateShipReplica, StateShipped, TopKRmvShip, TopKRmvShipState, TopKShipState,
};
