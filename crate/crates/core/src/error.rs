use thiserror::Error;

use crate::model::{NodeId, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty forwarder set")]
    EmptyForwarderSet,

    #[error("unreachable forwarder set")]
    UnreachableForwarderSet,

    #[error("never succeeds")]
    NeverSucceeds,

    #[error("disconnected node {0}")]
    DisconnectedNode(NodeId),

    #[error("disconnected topology")]
    DisconnectedTopology,

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("state space exceeds configured bound: {0}")]
    StateSpaceTooLarge(String),

    #[error("invalid topology: {}", format_violations(.0))]
    InvalidTopology(Vec<Violation>),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
