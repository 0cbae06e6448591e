//! Topology generation, association-phase hop IDs, ranks and forwarder sets.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{self, link_success, PathCostTable};
use crate::error::{Error, Result};
use crate::model::{
    BitErrorRate, ChannelModel, ForwarderEntry, ForwarderSet, FrameParams, NodeId, Position,
    Topology,
};

/// How generated links get their bit error rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BerModel {
    Fixed(BitErrorRate),
    /// `p_min + (p_max - p_min) * (distance / range)^2`, clamped to [0, 1].
    Distance {
        p_min: f64,
        p_max: f64,
    },
}

impl BerModel {
    pub fn ber_at(&self, distance: f64, range: f64) -> BitErrorRate {
        match *self {
            BerModel::Fixed(p) => p,
            BerModel::Distance { p_min, p_max } => {
                let x = if range > 0.0 { distance / range } else { 0.0 };
                BitErrorRate((p_min + (p_max - p_min) * x * x).clamp(0.0, 1.0))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    /// Total node count, gateway included.
    pub nodes: usize,
    pub area_side: f64,
    pub radio_range: f64,
    pub gateway_position: Position,
    pub ber: BerModel,
    pub frame: FrameParams,
    pub channel: ChannelModel,
}

/// Places `nodes - 1` nodes uniformly in the square area around a gateway
/// with id 0, links every pair within radio range, then assigns hop IDs and
/// ranks. Ranks use [`analysis::network_path_costs_lenient`], so nodes that
/// can never be heard end up with an infinite rank rather than an error.
pub fn generate(config: &GeneratorConfig, seed: u64) -> Result<Topology> {
    if config.nodes == 0 {
        return Err(Error::param("nodes", "at least the gateway is required"));
    }
    if !(config.area_side >= 0.0) || !(config.radio_range >= 0.0) {
        return Err(Error::param("area", "side and range must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Topology::new(NodeId(0), config.frame, config.channel.clone());
    t.nodes[0].position = config.gateway_position;
    for i in 1..config.nodes {
        let pos = Position::new(
            rng.random::<f64>() * config.area_side,
            rng.random::<f64>() * config.area_side,
        );
        t.add_node(NodeId(i as u32), pos);
    }
    for i in 0..t.nodes.len() {
        for j in i + 1..t.nodes.len() {
            let (a, b) = (t.nodes[i], t.nodes[j]);
            let dist = a.position.distance(&b.position);
            if dist <= config.radio_range {
                t.connect(a.id, b.id, config.ber.ber_at(dist, config.radio_range));
            }
        }
    }
    let t = match assign_hop_ids(&t) {
        Ok(t) => t,
        Err(Error::DisconnectedNode(_)) => return Err(Error::DisconnectedTopology),
        Err(e) => return Err(e),
    };
    compute_ranks_lenient(&t)
}

/// Breadth-first hop count from the gateway.
pub fn assign_hop_ids(topology: &Topology) -> Result<Topology> {
    topology.require(topology.gateway)?;
    let mut hops: BTreeMap<NodeId, u32> = BTreeMap::new();
    hops.insert(topology.gateway, 0);
    let mut queue = VecDeque::from([topology.gateway]);
    while let Some(u) = queue.pop_front() {
        let h = hops[&u];
        for (v, _) in topology.neighbors(u) {
            if let std::collections::btree_map::Entry::Vacant(e) = hops.entry(v) {
                e.insert(h + 1);
                queue.push_back(v);
            }
        }
    }
    let mut out = topology.clone();
    for n in &mut out.nodes {
        n.hop_id = *hops.get(&n.id).ok_or(Error::DisconnectedNode(n.id))?;
    }
    Ok(out)
}

/// Writes `rank = 1 + Y` for every node in `costs`.
pub fn apply_ranks(topology: &mut Topology, costs: &PathCostTable) {
    for n in &mut topology.nodes {
        if let Some(y) = costs.get(n.id) {
            n.rank = 1.0 + y;
        }
    }
}

/// `rank = 1 + Y` with `Y` from [`analysis::network_path_costs`]; the
/// gateway gets rank 1.
pub fn compute_ranks(topology: &Topology) -> Result<Topology> {
    let costs = analysis::network_path_costs(topology)?;
    let mut out = topology.clone();
    apply_ranks(&mut out, &costs);
    Ok(out)
}

pub fn compute_ranks_lenient(topology: &Topology) -> Result<Topology> {
    let costs = analysis::network_path_costs_lenient(topology)?;
    let mut out = topology.clone();
    apply_ranks(&mut out, &costs);
    Ok(out)
}

/// Neighbors of `node` with a strictly smaller hop id, in priority order.
pub fn forwarder_set(
    topology: &Topology,
    node: NodeId,
    costs: &PathCostTable,
) -> Result<ForwarderSet> {
    let me = topology.require(node)?;
    let p_sw = topology.channel.switch_probability();
    let mut entries = Vec::new();
    for (nbr, ber) in topology.neighbors(node) {
        let Some(other) = topology.node(nbr) else {
            continue;
        };
        if other.hop_id >= me.hop_id {
            continue;
        }
        let y = costs
            .get(nbr)
            .ok_or_else(|| Error::param("path_cost", format!("no cost recorded for node {nbr}")))?;
        entries.push(ForwarderEntry::new(
            nbr,
            link_success(ber, &topology.frame, p_sw),
            y,
        )?);
    }
    if entries.is_empty() && node != topology.gateway {
        return Err(Error::DisconnectedNode(node));
    }
    ForwarderSet::new(entries)
}

/// `|hop_id(a) - hop_id(b)|`.
pub fn hop_distance(topology: &Topology, a: NodeId, b: NodeId) -> Result<u32> {
    let ha = topology.require(a)?.hop_id;
    let hb = topology.require(b)?.hop_id;
    Ok(ha.abs_diff(hb))
}

/// `|rank(a) - rank(b)|`. Kept to show how far rank differences drift from
/// real hop counts on lossy links; the engine never uses it.
pub fn rank_difference_distance(topology: &Topology, a: NodeId, b: NodeId) -> Result<f64> {
    let ra = topology.require(a)?.rank;
    let rb = topology.require(b)?.rank;
    Ok((ra - rb).abs())
}

/// Small hand-built topologies used by tests, the CLI and benches.
pub mod fixtures {
    use super::*;

    pub fn default_frame() -> FrameParams {
        FrameParams::new(8, 2, 100).expect("valid frame")
    }

    /// Assigns hop IDs and (lenient) ranks.
    pub fn finish(t: Topology) -> Result<Topology> {
        compute_ranks_lenient(&assign_hop_ids(&t)?)
    }

    /// Gateway 0 followed by nodes `1..=bers.len()`, link `i-1 <-> i` using
    /// `bers[i-1]`.
    pub fn chain(
        frame: FrameParams,
        channel: ChannelModel,
        bers: &[BitErrorRate],
    ) -> Result<Topology> {
        let mut t = Topology::new(NodeId(0), frame, channel);
        for (i, &ber) in bers.iter().enumerate() {
            let id = NodeId(i as u32 + 1);
            t.add_node(id, Position::new(i as f64 + 1.0, 0.0));
            t.connect(NodeId(i as u32), id, ber);
        }
        finish(t)
    }

    /// Gateway 0, relays 1 and 2, source 3. `cross` links the two relays.
    pub fn diamond(
        frame: FrameParams,
        channel: ChannelModel,
        source_ber: BitErrorRate,
        relay_ber: BitErrorRate,
        cross: Option<BitErrorRate>,
    ) -> Result<Topology> {
        star(frame, channel, 2, source_ber, relay_ber, cross)
    }

    /// Gateway 0, relays `1..=n`, source `n + 1`. The source reaches every
    /// relay with `source_ber`, every relay reaches the gateway with
    /// `relay_ber`, and `cross` (when set) links every pair of relays.
    pub fn star(
        frame: FrameParams,
        channel: ChannelModel,
        n: u32,
        source_ber: BitErrorRate,
        relay_ber: BitErrorRate,
        cross: Option<BitErrorRate>,
    ) -> Result<Topology> {
        let mut t = Topology::new(NodeId(0), frame, channel);
        let source = NodeId(n + 1);
        for r in 1..=n {
            let angle = std::f64::consts::TAU * f64::from(r) / f64::from(n.max(1));
            t.add_node(NodeId(r), Position::new(angle.cos(), angle.sin()));
            t.connect(NodeId(0), NodeId(r), relay_ber);
            t.connect(source, NodeId(r), source_ber);
        }
        if let Some(c) = cross {
            for a in 1..=n {
                for b in a + 1..=n {
                    t.connect(NodeId(a), NodeId(b), c);
                }
            }
        }
        t.add_node(source, Position::new(2.0, 0.0));
        finish(t)
    }

    /// Identifier of the far node in [`witness`].
    pub const WITNESS_NODE: NodeId = NodeId(5);

    /// Success probability of both witness links: two hops of ETX
    /// `3.04 / 2` each.
    pub const WITNESS_LINK_SUCCESS: f64 = 2.0 / 3.04;

    /// Gateway 1, relay 3, node 5 on a two-hop line with lossy links tuned
    /// so node 5 ends up at rank 4.04 while sitting two hops out.
    pub fn witness() -> Result<Topology> {
        let frame = default_frame();
        let channel = ChannelModel::single(1.0)?;
        let ber = analysis::ber_for_link_success(WITNESS_LINK_SUCCESS, &frame, 1.0)?;
        let mut t = Topology::new(NodeId(1), frame, channel);
        t.add_node(NodeId(3), Position::new(1.0, 0.0));
        t.add_node(WITNESS_NODE, Position::new(2.0, 0.0));
        t.connect(NodeId(1), NodeId(3), ber);
        t.connect(NodeId(3), WITNESS_NODE, ber);
        let t = assign_hop_ids(&t)?;
        compute_ranks(&t)
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn lossless() -> ChannelModel {
        ChannelModel::single(1.0).unwrap()
    }

    fn ber(p: f64) -> BitErrorRate {
        BitErrorRate::new(p).unwrap()
    }

    fn success_ber(p: f64) -> BitErrorRate {
        analysis::ber_for_link_success(p, &default_frame(), 1.0).unwrap()
    }

    fn gen_config(nodes: usize) -> GeneratorConfig {
        GeneratorConfig {
            nodes,
            area_side: 100.0,
            radio_range: 45.0,
            gateway_position: Position::new(50.0, 50.0),
            ber: BerModel::Distance {
                p_min: 0.0,
                p_max: 0.01,
            },
            frame: default_frame(),
            channel: lossless(),
        }
    }

    #[test]
    fn generate_gateway_only() {
        let t = generate(&gen_config(1), 3).unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.validate().is_empty());
    }

    #[test]
    fn generate_two_nodes_in_range() {
        let mut cfg = gen_config(2);
        cfg.radio_range = 200.0;
        let t = generate(&cfg, 1).unwrap();
        assert_eq!(t.links.len(), 2);
        assert_eq!(t.link(NodeId(0), NodeId(1)), t.link(NodeId(1), NodeId(0)));
        assert!(t.validate().is_empty());
    }

    #[test]
    fn generate_is_deterministic() {
        let mut cfg = gen_config(20);
        cfg.radio_range = 60.0;
        let a = generate(&cfg, 7).unwrap();
        let b = generate(&cfg, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.validate().is_empty(), "{:?}", a.validate());
    }

    #[test]
    fn generate_reports_disconnection() {
        let mut cfg = gen_config(10);
        cfg.radio_range = 0.5;
        assert_eq!(generate(&cfg, 1), Err(Error::DisconnectedTopology));
    }

    #[test]
    fn distance_ber_model_clamps() {
        let m = BerModel::Distance {
            p_min: 0.1,
            p_max: 2.0,
        };
        assert_eq!(m.ber_at(0.0, 10.0).value(), 0.1);
        assert_eq!(m.ber_at(10.0, 10.0).value(), 1.0);
    }

    #[test]
    fn hop_ids_on_small_graphs() {
        let t = Topology::new(NodeId(0), default_frame(), lossless());
        let t = assign_hop_ids(&t).unwrap();
        assert_eq!(t.node(NodeId(0)).unwrap().hop_id, 0);

        let t = chain(default_frame(), lossless(), &[ber(0.0), ber(0.0)]).unwrap();
        let hops: Vec<_> = t.nodes.iter().map(|n| n.hop_id).collect();
        assert_eq!(hops, vec![0, 1, 2]);
    }

    #[test]
    fn unreachable_node_is_disconnected() {
        let mut t = Topology::new(NodeId(0), default_frame(), lossless());
        t.add_node(NodeId(4), Position::default());
        assert_eq!(assign_hop_ids(&t), Err(Error::DisconnectedNode(NodeId(4))));
    }

    #[test]
    fn ranks_follow_path_costs() {
        let t = chain(default_frame(), lossless(), &[]).unwrap();
        assert_eq!(t.node(NodeId(0)).unwrap().rank, 1.0);

        let t = compute_ranks(&chain(default_frame(), lossless(), &[ber(0.0)]).unwrap()).unwrap();
        assert_eq!(t.node(NodeId(1)).unwrap().rank, 2.0);

        let b = success_ber(0.8);
        let t = compute_ranks(&chain(default_frame(), lossless(), &[b, b]).unwrap()).unwrap();
        let r = t.node(NodeId(2)).unwrap().rank;
        assert!((r - 3.5).abs() < 1e-12, "{r}");
    }

    #[test]
    fn forwarder_sets_follow_hop_ids() {
        let t = chain(default_frame(), lossless(), &[ber(0.0)]).unwrap();
        let costs = analysis::network_path_costs(&t).unwrap();
        let fs = forwarder_set(&t, NodeId(1), &costs).unwrap();
        assert_eq!(fs.len(), 1);
        assert_eq!(fs.entries()[0].node, NodeId(0));
        assert_eq!(fs.entries()[0].remaining_cost, 0.0);
        assert!(forwarder_set(&t, NodeId(0), &costs).unwrap().is_empty());

        // Relay 1 sits behind a worse link to the gateway, so relay 2 leads.
        let mut d = diamond(default_frame(), lossless(), ber(0.0), ber(0.0), None).unwrap();
        d.connect(NodeId(0), NodeId(1), success_ber(0.5));
        let costs = analysis::network_path_costs(&d).unwrap();
        let fs = forwarder_set(&d, NodeId(3), &costs).unwrap();
        let order: Vec<_> = fs.iter().map(|e| e.node).collect();
        assert_eq!(order, vec![NodeId(2), NodeId(1)]);

        // Equal costs fall back to node id order.
        let d = diamond(
            default_frame(),
            lossless(),
            ber(0.0),
            ber(0.0),
            Some(ber(0.0)),
        )
        .unwrap();
        let costs = analysis::network_path_costs(&d).unwrap();
        let order: Vec<_> = forwarder_set(&d, NodeId(3), &costs)
            .unwrap()
            .iter()
            .map(|e| e.node)
            .collect();
        assert_eq!(order, vec![NodeId(1), NodeId(2)]);
    }

    #[test]
    fn distances_on_chain() {
        let t = chain(default_frame(), lossless(), &[ber(0.0), ber(0.0)]).unwrap();
        assert_eq!(hop_distance(&t, NodeId(1), NodeId(1)).unwrap(), 0);
        assert_eq!(hop_distance(&t, NodeId(0), NodeId(2)).unwrap(), 2);
        assert_eq!(
            rank_difference_distance(&t, NodeId(2), NodeId(2)).unwrap(),
            0.0
        );
        // Lossless links: ETX equals hop count.
        assert_eq!(
            rank_difference_distance(&t, NodeId(0), NodeId(2)).unwrap(),
            2.0
        );
        assert_eq!(
            hop_distance(&t, NodeId(0), NodeId(7)),
            Err(Error::UnknownNode(NodeId(7)))
        );
        assert!(rank_difference_distance(&t, NodeId(9), NodeId(0)).is_err());
    }

    #[test]
    fn witness_reproduces_rank_inflation() {
        let t = witness().unwrap();
        assert_eq!(t.node(WITNESS_NODE).unwrap().hop_id, 2);
        assert_eq!(hop_distance(&t, NodeId(1), WITNESS_NODE).unwrap(), 2);
        let r = t.node(WITNESS_NODE).unwrap().rank;
        assert!((r - 4.04).abs() < 1e-9, "{r}");
        let d = rank_difference_distance(&t, NodeId(1), WITNESS_NODE).unwrap();
        assert!((d - 3.04).abs() < 1e-9, "{d}");
    }
}
