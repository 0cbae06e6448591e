//! Shared inputs for the criterion benches.

use orsim_core::topology::{self, BerModel, GeneratorConfig};
use orsim_core::{
    ChannelModel, ForwarderEntry, ForwarderSet, FrameParams, NodeId, Position, Topology,
};

pub fn equal_cost_set(n: u32, p: f64, cost: f64) -> ForwarderSet {
    ForwarderSet::new(
        (0..n)
            .map(|i| ForwarderEntry::new(NodeId(i), p, cost).expect("valid entry"))
            .collect(),
    )
    .expect("distinct nodes")
}

/// Generated field of `nodes` nodes; retries seeds until one is connected.
pub fn field(nodes: usize) -> Topology {
    let config = GeneratorConfig {
        nodes,
        area_side: 100.0,
        radio_range: 35.0,
        gateway_position: Position::new(50.0, 50.0),
        ber: BerModel::Distance {
            p_min: 0.0,
            p_max: 0.01,
        },
        frame: FrameParams::new(8, 2, 100).expect("valid frame"),
        channel: ChannelModel::single(0.8).expect("valid channel"),
    };
    (0..)
        .find_map(|seed| topology::generate(&config, seed).ok())
        .expect("some seed yields a connected field")
}
