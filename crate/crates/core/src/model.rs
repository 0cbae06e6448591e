//! Domain types shared by the analysis, topology, engine and oracle modules.
//!
//! Every type validates its fields on construction. [`Topology`] is the one
//! exception: it is assembled incrementally (nodes, links, then hop IDs and
//! ranks) so its invariants are checked on demand by [`Topology::validate`].

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

pub(crate) fn check_probability(name: &'static str, v: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::param(
            name,
            format!("{v} is not a probability in [0, 1]"),
        ))
    }
}

/// Preamble and data framing of a preamble-sampling MAC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameParams {
    micro_frame_bits: u32,
    micro_frames: u32,
    data_bits: u32,
}

impl FrameParams {
    pub fn new(micro_frame_bits: u32, micro_frames: u32, data_bits: u32) -> Result<Self> {
        if micro_frame_bits == 0 {
            return Err(Error::param("micro_frame_bits", "must be at least 1"));
        }
        if micro_frames == 0 {
            return Err(Error::param("micro_frames", "must be at least 1"));
        }
        if data_bits == 0 {
            return Err(Error::param("data_bits", "must be at least 1"));
        }
        Ok(FrameParams {
            micro_frame_bits,
            micro_frames,
            data_bits,
        })
    }

    /// Bits per preamble micro-frame.
    pub fn micro_frame_bits(&self) -> u32 {
        self.micro_frame_bits
    }

    /// Number of micro-frames making up the preamble.
    pub fn micro_frames(&self) -> u32 {
        self.micro_frames
    }

    pub fn data_bits(&self) -> u32 {
        self.data_bits
    }

    pub fn preamble_bits(&self) -> u64 {
        u64::from(self.micro_frame_bits) * u64::from(self.micro_frames)
    }

    /// Bits on air for one transmission: full preamble plus the data frame.
    pub fn transmission_bits(&self) -> u64 {
        self.preamble_bits() + u64::from(self.data_bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct BitErrorRate(pub(crate) f64);

impl BitErrorRate {
    pub const ZERO: BitErrorRate = BitErrorRate(0.0);
    pub const ONE: BitErrorRate = BitErrorRate(1.0);

    pub fn new(p: f64) -> Result<Self> {
        check_probability("bit_error_rate", p).map(BitErrorRate)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// One cognitive channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    /// Probability that a transmission is switched onto this channel.
    pub p_sw: f64,
    /// Probability of accessing the channel.
    pub p_acc: f64,
    pub bandwidth_hz: f64,
}

impl Channel {
    pub fn new(p_sw: f64, p_acc: f64, bandwidth_hz: f64) -> Result<Self> {
        check_probability("p_sw", p_sw)?;
        check_probability("p_acc", p_acc)?;
        if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
            return Err(Error::param(
                "bandwidth_hz",
                format!("{bandwidth_hz} is not a positive finite bandwidth"),
            ));
        }
        Ok(Channel {
            p_sw,
            p_acc,
            bandwidth_hz,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    channels: Vec<Channel>,
    noise_power: f64,
    evaluated: usize,
}

impl ChannelModel {
    /// `evaluated` selects the channel whose switching probability gates
    /// per-link success.
    pub fn new(channels: Vec<Channel>, noise_power: f64, evaluated: usize) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::param("channels", "at least one channel is required"));
        }
        if evaluated >= channels.len() {
            return Err(Error::param(
                "evaluated_channel",
                format!(
                    "index {evaluated} out of range for {} channels",
                    channels.len()
                ),
            ));
        }
        if !(noise_power > 0.0 && noise_power.is_finite()) {
            return Err(Error::param(
                "noise_power",
                format!("{noise_power} is not a positive finite power"),
            ));
        }
        Ok(ChannelModel {
            channels,
            noise_power,
            evaluated,
        })
    }

    /// A single channel with the given switching probability, full access
    /// and a 1 MHz bandwidth.
    pub fn single(p_sw: f64) -> Result<Self> {
        ChannelModel::new(vec![Channel::new(p_sw, 1.0, 1.0e6)?], 1.0e-12, 0)
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    pub fn evaluated_index(&self) -> usize {
        self.evaluated
    }

    pub fn evaluated(&self) -> &Channel {
        &self.channels[self.evaluated]
    }

    pub fn switch_probability(&self) -> f64 {
        self.evaluated().p_sw
    }

    pub fn with_switch_probability(&self, p_sw: f64) -> Result<Self> {
        let mut out = self.clone();
        let ch = out.channels[out.evaluated];
        out.channels[out.evaluated] = Channel::new(p_sw, ch.p_acc, ch.bandwidth_hz)?;
        Ok(out)
    }
}

/// A candidate next hop: link success probability from the sender and the
/// candidate's own remaining path cost (ETX units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwarderEntry {
    pub node: NodeId,
    pub p_link: f64,
    pub remaining_cost: f64,
}

impl ForwarderEntry {
    pub fn new(node: NodeId, p_link: f64, remaining_cost: f64) -> Result<Self> {
        check_probability("p_link", p_link)?;
        if !(remaining_cost >= 0.0) {
            return Err(Error::param(
                "remaining_cost",
                format!("{remaining_cost} is not a nonnegative cost"),
            ));
        }
        Ok(ForwarderEntry {
            node,
            p_link,
            remaining_cost,
        })
    }

    /// Priority order: ascending remaining cost, then ascending node id.
    pub fn priority_cmp(&self, other: &Self) -> Ordering {
        self.remaining_cost
            .total_cmp(&other.remaining_cost)
            .then(self.node.cmp(&other.node))
    }
}

/// Forwarder set kept in priority order (see [`ForwarderEntry::priority_cmp`]).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForwarderSet {
    entries: Vec<ForwarderEntry>,
}

impl ForwarderSet {
    pub fn new(mut entries: Vec<ForwarderEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        if let Some(e) = entries.iter().find(|e| !seen.insert(e.node)) {
            return Err(Error::param(
                "forwarder_set",
                format!("node {} appears twice", e.node),
            ));
        }
        entries.sort_by(ForwarderEntry::priority_cmp);
        Ok(ForwarderSet { entries })
    }

    pub fn entries(&self) -> &[ForwarderEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ForwarderEntry> {
        self.entries.iter()
    }
}

impl<'a> IntoIterator for &'a ForwarderSet {
    type Item = &'a ForwarderEntry;
    type IntoIter = std::slice::Iter<'a, ForwarderEntry>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub position: Position,
    pub rank: f64,
    pub hop_id: u32,
}

impl Node {
    pub fn new(id: NodeId, position: Position) -> Self {
        Node {
            id,
            position,
            rank: 1.0,
            hop_id: 0,
        }
    }
}

/// A broken [`Topology`] invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    MissingGateway(NodeId),
    DuplicateNode(NodeId),
    GatewayHopId(u32),
    AsymmetricLink(NodeId, NodeId),
    UnknownEndpoint(NodeId, NodeId),
    SelfLink(NodeId),
    NoUpstreamNeighbor(NodeId),
    InvalidRank(NodeId, f64),
}

impl Violation {
    /// Short invariant name, stable for reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::MissingGateway(_) => "gateway",
            Violation::DuplicateNode(_) => "duplicate node",
            Violation::GatewayHopId(_) => "gateway hop id",
            Violation::AsymmetricLink(..) => "symmetry",
            Violation::UnknownEndpoint(..) => "unknown endpoint",
            Violation::SelfLink(_) => "self link",
            Violation::NoUpstreamNeighbor(_) => "connectivity",
            Violation::InvalidRank(..) => "rank",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.kind())?;
        match self {
            Violation::MissingGateway(g) => write!(f, "gateway {g} is not a node"),
            Violation::DuplicateNode(n) => write!(f, "node {n} declared more than once"),
            Violation::GatewayHopId(h) => write!(f, "gateway has hop id {h}, expected 0"),
            Violation::AsymmetricLink(a, b) => {
                write!(
                    f,
                    "link {a}-{b} is not mirrored with an equal bit error rate"
                )
            }
            Violation::UnknownEndpoint(a, b) => write!(f, "link {a}-{b} names an unknown node"),
            Violation::SelfLink(n) => write!(f, "node {n} links to itself"),
            Violation::NoUpstreamNeighbor(n) => {
                write!(f, "node {n} has no neighbor with a smaller hop id")
            }
            Violation::InvalidRank(n, r) => write!(f, "node {n} has non-positive rank {r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub nodes: Vec<Node>,
    pub gateway: NodeId,
    /// Directed view of each undirected link; a valid topology stores both
    /// `(a, b)` and `(b, a)`.
    pub links: BTreeMap<(NodeId, NodeId), BitErrorRate>,
    pub frame: FrameParams,
    pub channel: ChannelModel,
}

impl Topology {
    /// Empty topology holding only the gateway at the origin.
    pub fn new(gateway: NodeId, frame: FrameParams, channel: ChannelModel) -> Self {
        Topology {
            nodes: vec![Node::new(gateway, Position::default())],
            gateway,
            links: BTreeMap::new(),
            frame,
            channel,
        }
    }

    pub fn add_node(&mut self, id: NodeId, position: Position) -> &mut Self {
        self.nodes.push(Node::new(id, position));
        self
    }

    /// Inserts both directions of an undirected link.
    pub fn connect(&mut self, a: NodeId, b: NodeId, ber: BitErrorRate) -> &mut Self {
        self.links.insert((a, b), ber);
        self.links.insert((b, a), ber);
        self
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut Node> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    pub fn require(&self, id: NodeId) -> Result<&Node> {
        self.node(id).ok_or(Error::UnknownNode(id))
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    /// Neighbors reachable over the directed view `(id, _)`.
    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = (NodeId, BitErrorRate)> + '_ {
        self.links
            .range((id, NodeId(0))..=(id, NodeId(u32::MAX)))
            .map(|(&(_, b), &ber)| (b, ber))
    }

    pub fn link(&self, a: NodeId, b: NodeId) -> Option<BitErrorRate> {
        self.links.get(&(a, b)).copied()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Largest hop id; an upper bound on any hop-ID distance.
    pub fn max_hop_id(&self) -> u32 {
        self.nodes.iter().map(|n| n.hop_id).max().unwrap_or(0)
    }

    /// Returns one record per broken invariant instance; empty when valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(n.id) {
                out.push(Violation::DuplicateNode(n.id));
            }
        }
        match self.node(self.gateway) {
            None => out.push(Violation::MissingGateway(self.gateway)),
            Some(g) if g.hop_id != 0 => out.push(Violation::GatewayHopId(g.hop_id)),
            Some(_) => {}
        }
        for n in &self.nodes {
            if !(n.rank > 0.0) {
                out.push(Violation::InvalidRank(n.id, n.rank));
            }
        }

        // Undirected adjacency, so connectivity is judged independently of
        // any asymmetry already reported.
        let mut adjacency: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for (&(a, b), ber) in &self.links {
            if a == b {
                out.push(Violation::SelfLink(a));
                continue;
            }
            if !seen.contains(&a) || !seen.contains(&b) {
                if a < b || !self.links.contains_key(&(b, a)) {
                    out.push(Violation::UnknownEndpoint(a, b));
                }
                continue;
            }
            match self.links.get(&(b, a)) {
                Some(back) if back == ber => {}
                // Report a mismatched pair once, from its smaller endpoint.
                Some(_) if a > b => {}
                _ => out.push(Violation::AsymmetricLink(a, b)),
            }
            adjacency.entry(a).or_default().insert(b);
            adjacency.entry(b).or_default().insert(a);
        }

        let hop = |id: NodeId| self.node(id).map(|n| n.hop_id);
        for n in &self.nodes {
            if n.id == self.gateway {
                continue;
            }
            let upstream = adjacency
                .get(&n.id)
                .into_iter()
                .flatten()
                .any(|&m| hop(m).is_some_and(|h| h < n.hop_id));
            if !upstream {
                out.push(Violation::NoUpstreamNeighbor(n.id));
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidTopology(v))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    TransmitPreamble,
    TransmitData,
    Receive,
    Elect,
    Suppress,
    DuplicateForward,
    GatewayArrival,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::TransmitPreamble => "transmit-preamble",
            EventKind::TransmitData => "transmit-data",
            EventKind::Receive => "receive",
            EventKind::Elect => "elect",
            EventKind::Suppress => "suppress",
            EventKind::DuplicateForward => "duplicate-forward",
            EventKind::GatewayArrival => "gateway-arrival",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    /// Slot index.
    pub time: u64,
    pub kind: EventKind,
    pub actor: NodeId,
    pub detail: String,
}

/// Event log and outcome of one source-to-gateway delivery.
#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryTrace {
    pub source: NodeId,
    pub events: Vec<Event>,
    pub delivered: bool,
    pub duplicate_arrivals: u32,
    pub duplicate_forwards: u32,
    pub transmissions: u32,
    /// Hops traversed by the first copy to reach the gateway.
    pub hops: Option<u32>,
    /// Bits put on air (preamble plus data per transmission).
    pub energy_bits: u64,
    /// Remaining path cost summed over duplicate-forward events.
    pub duplicate_cost: f64,
    /// Remaining cost of the candidate elected on the source's first
    /// transmission; zero when nobody heard it.
    pub first_elected_cost: f64,
}

impl DeliveryTrace {
    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// `delivered` and `duplicate_arrivals` agree with the event log.
    pub fn is_consistent(&self) -> bool {
        let arrivals = self.count(EventKind::GatewayArrival);
        self.delivered == (arrivals > 0)
            && self.duplicate_arrivals as usize == arrivals.saturating_sub(1)
            && self.transmissions as usize == self.count(EventKind::TransmitData)
            && self.duplicate_forwards as usize == self.count(EventKind::DuplicateForward)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    pub deliveries_attempted: u64,
    pub deliveries_succeeded: u64,
    pub pdr: f64,
    /// Mean duplicate-forward events per delivery.
    pub mean_duplicates: f64,
    /// Mean extra gateway arrivals per delivery.
    pub mean_duplicate_arrivals: f64,
    /// Mean per delivery of the remaining cost of every duplicate forwarder.
    pub empirical_coordination_overhead: f64,
    /// Sample standard error of `empirical_coordination_overhead`.
    pub overhead_std_error: f64,
    /// Mean remaining cost of the candidate elected on the source's first
    /// transmission (zero when nobody heard).
    pub mean_first_elected_cost: f64,
    pub first_elected_std_error: f64,
    pub mean_transmissions: f64,
    /// Mean hops of the first arriving copy, over delivered packets.
    pub mean_hops: f64,
    pub mean_energy_bits: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame() -> FrameParams {
        FrameParams::new(8, 2, 100).unwrap()
    }

    fn topo() -> Topology {
        Topology::new(NodeId(0), frame(), ChannelModel::single(1.0).unwrap())
    }

    #[test]
    fn gateway_only_topology_is_valid() {
        assert!(topo().validate().is_empty());
    }

    #[test]
    fn asymmetric_link_reports_one_violation() {
        let mut t = topo();
        t.add_node(NodeId(1), Position::default());
        t.node_mut(NodeId(1)).unwrap().hop_id = 1;
        t.links.insert((NodeId(0), NodeId(1)), BitErrorRate::ZERO);
        let v = t.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].kind(), "symmetry");
    }

    #[test]
    fn mismatched_mirror_reports_once() {
        let mut t = topo();
        t.add_node(NodeId(1), Position::default());
        t.node_mut(NodeId(1)).unwrap().hop_id = 1;
        t.links.insert((NodeId(0), NodeId(1)), BitErrorRate::ZERO);
        t.links
            .insert((NodeId(1), NodeId(0)), BitErrorRate::new(0.5).unwrap());
        let v = t.validate();
        assert_eq!(v, vec![Violation::AsymmetricLink(NodeId(0), NodeId(1))]);
    }

    #[test]
    fn gateway_hop_id_violation() {
        let mut t = topo();
        t.nodes[0].hop_id = 1;
        let v = t.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind(), "gateway hop id");
    }

    #[test]
    fn orphan_and_unknown_endpoint() {
        let mut t = topo();
        t.add_node(NodeId(1), Position::default());
        t.node_mut(NodeId(1)).unwrap().hop_id = 1;
        t.connect(NodeId(1), NodeId(9), BitErrorRate::ZERO);
        let kinds: Vec<_> = t.validate().iter().map(Violation::kind).collect();
        assert_eq!(kinds, vec!["unknown endpoint", "connectivity"]);
    }

    #[test]
    fn frame_rejects_zero_fields() {
        assert!(FrameParams::new(0, 1, 1).is_err());
        assert!(FrameParams::new(1, 0, 1).is_err());
        assert!(FrameParams::new(1, 1, 0).is_err());
        assert_eq!(frame().transmission_bits(), 116);
    }

    #[test]
    fn channel_model_bounds() {
        assert!(ChannelModel::new(vec![], 1.0, 0).is_err());
        let ch = Channel::new(0.5, 0.5, 2.0e6).unwrap();
        assert!(ChannelModel::new(vec![ch], 1.0, 1).is_err());
        assert!(ChannelModel::new(vec![ch], 0.0, 0).is_err());
        assert!(Channel::new(0.5, 0.5, 0.0).is_err());
    }

    #[test]
    fn duplicate_forwarder_rejected() {
        let e = ForwarderEntry::new(NodeId(3), 0.5, 1.0).unwrap();
        assert!(ForwarderSet::new(vec![e, e]).is_err());
    }

    proptest! {
        #[test]
        fn ber_accepts_exactly_unit_interval(p in -1.0f64..2.0) {
            prop_assert_eq!(BitErrorRate::new(p).is_ok(), (0.0..=1.0).contains(&p));
        }

        #[test]
        fn channel_accepts_iff_fields_valid(
            p_sw in -0.5f64..1.5, p_acc in -0.5f64..1.5, bw in -1.0e6f64..1.0e6,
        ) {
            let ok = (0.0..=1.0).contains(&p_sw) && (0.0..=1.0).contains(&p_acc) && bw > 0.0;
            prop_assert_eq!(Channel::new(p_sw, p_acc, bw).is_ok(), ok);
        }

        #[test]
        fn forwarder_entry_accepts_iff_fields_valid(p in -0.5f64..1.5, y in -5.0f64..5.0) {
            let ok = (0.0..=1.0).contains(&p) && y >= 0.0;
            prop_assert_eq!(ForwarderEntry::new(NodeId(1), p, y).is_ok(), ok);
        }

        #[test]
        fn frame_accepts_iff_positive(m in 0u32..4, r in 0u32..4, d in 0u32..4) {
            prop_assert_eq!(FrameParams::new(m, r, d).is_ok(), m >= 1 && r >= 1 && d >= 1);
        }

        #[test]
        fn forwarder_order_ignores_input_order(
            raw in prop::collection::vec((0.0f64..=1.0, 0usize..3), 1..8),
            seed in any::<u64>(),
        ) {
            let costs = [0.0, 1.0, 2.5];
            let entries: Vec<_> = raw
                .iter()
                .enumerate()
                .map(|(i, &(p, c))| ForwarderEntry::new(NodeId(i as u32), p, costs[c]).unwrap())
                .collect();
            let mut shuffled = entries.clone();
            // Deterministic Fisher-Yates driven by the proptest seed.
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            let a = ForwarderSet::new(entries).unwrap();
            let b = ForwarderSet::new(shuffled).unwrap();
            prop_assert_eq!(&a, &b);
            for w in a.entries().windows(2) {
                prop_assert!(w[0].priority_cmp(&w[1]) == Ordering::Less);
            }
        }
    }
}
