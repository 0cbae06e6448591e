//! Closed-form link and path-cost model.
//!
//! Per-link failure is the probability that a listener misses every preamble
//! micro-frame and the data frame while the sender is on the evaluated
//! cognitive channel. Path cost and coordination overhead are computed over
//! a priority-ordered [`ForwarderSet`].

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{check_probability, BitErrorRate, ForwarderSet, FrameParams, NodeId, Topology};

/// `1 - (1 - p)^n`. Switches to `expm1`/`ln_1p` when `n * p` is tiny so the
/// result keeps full relative precision.
pub(crate) fn miss(p: f64, bits: u32) -> f64 {
    let n = f64::from(bits);
    if n * p < 1e-8 {
        -(n * (-p).ln_1p()).exp_m1()
    } else {
        1.0 - (1.0 - p).powf(n)
    }
}

/// Probability that every one of the `r_m` micro-frames carries a bit error.
pub fn preamble_miss_probability(p: BitErrorRate, frame: &FrameParams) -> f64 {
    miss(p.value(), frame.micro_frame_bits()).powf(f64::from(frame.micro_frames()))
}

/// Probability that the data frame carries at least one bit error.
pub fn data_miss_probability(p: BitErrorRate, frame: &FrameParams) -> f64 {
    miss(p.value(), frame.data_bits())
}

/// Failure probability of one transmission on the evaluated channel: the
/// listener hears neither a preamble micro-frame nor the data frame.
pub fn failure_probability(p: BitErrorRate, frame: &FrameParams, p_sw: f64) -> f64 {
    p_sw * preamble_miss_probability(p, frame) * data_miss_probability(p, frame)
}

pub fn link_success(p: BitErrorRate, frame: &FrameParams, p_sw: f64) -> f64 {
    1.0 - failure_probability(p, frame, p_sw)
}

/// Probability that a listener decodes at least one micro-frame and the
/// data frame. Off the evaluated channel (probability `1 - p_sw`) the
/// transmission is always received.
pub fn reception_probability(p: BitErrorRate, frame: &FrameParams, p_sw: f64) -> f64 {
    let on_channel =
        (1.0 - preamble_miss_probability(p, frame)) * (1.0 - data_miss_probability(p, frame));
    (1.0 - p_sw) + p_sw * on_channel
}

/// Bisects for the bit error rate at which a non-increasing success curve
/// hits `target`.
fn solve_ber(
    name: &'static str,
    target: f64,
    success: impl Fn(f64) -> f64,
) -> Result<BitErrorRate> {
    check_probability(name, target)?;
    let (hi_val, lo_val) = (success(0.0), success(1.0));
    if target > hi_val || target < lo_val {
        return Err(Error::param(
            name,
            format!("{target} outside attainable range [{lo_val}, {hi_val}]"),
        ));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if success(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let pick = if (success(lo) - target).abs() <= (success(hi) - target).abs() {
        lo
    } else {
        hi
    };
    BitErrorRate::new(pick)
}

/// Inverse of [`link_success`] in the bit error rate.
pub fn ber_for_link_success(target: f64, frame: &FrameParams, p_sw: f64) -> Result<BitErrorRate> {
    solve_ber("link_success", target, |p| {
        link_success(BitErrorRate(p), frame, p_sw)
    })
}

/// Inverse of [`reception_probability`] in the bit error rate.
pub fn ber_for_reception(target: f64, frame: &FrameParams, p_sw: f64) -> Result<BitErrorRate> {
    solve_ber("reception_probability", target, |p| {
        reception_probability(BitErrorRate(p), frame, p_sw)
    })
}

/// Expected transmissions from the sender to the gateway through `fs`:
/// transmissions until some candidate receives, plus the remaining cost of
/// the highest-priority receiver.
pub fn total_path_cost(fs: &ForwarderSet) -> Result<f64> {
    if fs.is_empty() {
        return Err(Error::EmptyForwarderSet);
    }
    let mut none_received = 1.0;
    let mut weighted = 0.0;
    for e in fs.iter().filter(|e| e.p_link > 0.0) {
        weighted += e.remaining_cost * e.p_link * none_received;
        none_received *= 1.0 - e.p_link;
    }
    let reach = 1.0 - none_received;
    if reach <= 0.0 {
        return Err(Error::UnreachableForwarderSet);
    }
    Ok((1.0 + weighted) / reach)
}

/// Cost-weighted coordination overhead: the sum over candidates of
/// `P_b * Y_b * prod_{r<b} (1 - P_r)` in priority order.
pub fn coordination_overhead(fs: &ForwarderSet) -> f64 {
    let mut none_before = 1.0;
    let mut total = 0.0;
    // Zero-probability entries contribute nothing; skipping them also keeps
    // unreachable (infinite-cost) members from producing NaN.
    for e in fs.iter().filter(|e| e.p_link > 0.0) {
        total += e.p_link * e.remaining_cost * none_before;
        none_before *= 1.0 - e.p_link;
    }
    total
}

/// Average retransmissions (first attempt excluded) of a geometric process
/// with per-attempt failure `f`: `f / (1 - f)`.
pub fn expected_retransmissions(per_attempt_failure: f64) -> Result<f64> {
    let f = check_probability("per_attempt_failure", per_attempt_failure)?;
    if f >= 1.0 {
        return Err(Error::NeverSucceeds);
    }
    Ok(f / (1.0 - f))
}

/// `p_acc * B`.
pub fn potential_bandwidth(p_acc: f64, bandwidth_hz: f64) -> f64 {
    p_acc * bandwidth_hz
}

/// Remaining path cost per node, gateway fixed at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCostTable {
    gateway: NodeId,
    costs: BTreeMap<NodeId, f64>,
}

impl PathCostTable {
    /// Builds a table from explicit values; the gateway entry is forced to 0.
    pub fn from_costs(
        gateway: NodeId,
        costs: impl IntoIterator<Item = (NodeId, f64)>,
    ) -> Result<Self> {
        let mut map: BTreeMap<_, _> = costs.into_iter().collect();
        if let Some((&id, &c)) = map.iter().find(|(_, c)| !(**c >= 0.0)) {
            return Err(Error::param("path_cost", format!("node {id} has cost {c}")));
        }
        map.insert(gateway, 0.0);
        Ok(PathCostTable {
            gateway,
            costs: map,
        })
    }

    pub fn gateway(&self) -> NodeId {
        self.gateway
    }

    pub fn get(&self, id: NodeId) -> Option<f64> {
        self.costs.get(&id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.costs.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    /// All entries finite.
    pub fn is_complete(&self) -> bool {
        self.costs.values().all(|c| c.is_finite())
    }
}

fn propagate_costs(topology: &Topology, lenient: bool) -> Result<PathCostTable> {
    let gw = topology.require(topology.gateway)?;
    if gw.hop_id != 0 {
        return Err(Error::InvalidTopology(vec![
            crate::model::Violation::GatewayHopId(gw.hop_id),
        ]));
    }
    let mut order: Vec<_> = topology.nodes.iter().map(|n| (n.hop_id, n.id)).collect();
    order.sort_unstable();

    let mut table = PathCostTable {
        gateway: topology.gateway,
        costs: BTreeMap::new(),
    };
    table.costs.insert(topology.gateway, 0.0);
    for (_, id) in order {
        if id == topology.gateway {
            continue;
        }
        let fs = crate::topology::forwarder_set(topology, id, &table)?;
        let y = match total_path_cost(&fs) {
            Ok(y) => y,
            Err(Error::UnreachableForwarderSet) if lenient => f64::INFINITY,
            Err(e) => return Err(e),
        };
        table.costs.insert(id, y);
    }
    Ok(table)
}

/// Applies [`total_path_cost`] network-wide in ascending hop-id order, so
/// every forwarder's cost is final before it is used.
pub fn network_path_costs(topology: &Topology) -> Result<PathCostTable> {
    propagate_costs(topology, false)
}

/// Like [`network_path_costs`], but nodes whose forwarder set can never
/// receive get an infinite cost instead of failing the whole table.
pub fn network_path_costs_lenient(topology: &Topology) -> Result<PathCostTable> {
    propagate_costs(topology, true)
}
