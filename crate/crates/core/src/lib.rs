//! Analytical model and packet-level simulator for opportunistic
//! forwarding in duty-cycled cognitive-radio lossy networks.
//!
//! * [`analysis`]: per-link failure, path cost, coordination overhead and
//!   related closed forms.
//! * [`topology`]: generation, hop IDs, ranks, forwarder sets, distances.
//! * [`engine`]: slotted simulation of receiver-based and
//!   sender-prioritized forwarding.
//! * [`oracle`]: brute-force references for the closed forms.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod engine;
mod error;
pub mod model;
pub mod oracle;
pub mod topology;

pub use analysis::PathCostTable;
pub use engine::{ProtocolMode, SimConfig, SourcePolicy};
pub use error::{Error, Result};
pub use model::{
    BitErrorRate, Channel, ChannelModel, DeliveryTrace, Event, EventKind, ForwarderEntry,
    ForwarderSet, FrameParams, Metrics, Node, NodeId, Position, Topology, Violation,
};
