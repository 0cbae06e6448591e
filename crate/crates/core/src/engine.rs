//! Slotted simulation of one packet's trip to the gateway.
//!
//! A holder broadcasts preamble plus data. Each eligible neighbor (strictly
//! smaller hop id) that decodes at least one micro-frame and the data frame
//! becomes a candidate. The candidate ordered first wins and forwards; the
//! others listen to that one forwarded transmission and either suppress or,
//! having missed both its preamble and its data, forward a duplicate.
//!
//! The two modes differ in who orders the candidates:
//! * [`ProtocolMode::ReceiverBased`]: candidates elect among themselves by
//!   rank-ordinal backoff. Suppression can be switched off.
//! * [`ProtocolMode::SenderPrioritized`]: the sender stamps its cost-ordered
//!   forwarder list in the header and members always listen before acting.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analysis::{self, PathCostTable};
use crate::error::{Error, Result};
use crate::model::{
    BitErrorRate, DeliveryTrace, Event, EventKind, FrameParams, Metrics, NodeId, Topology,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProtocolMode {
    ReceiverBased,
    SenderPrioritized,
}

impl ProtocolMode {
    pub const ALL: [ProtocolMode; 2] =
        [ProtocolMode::ReceiverBased, ProtocolMode::SenderPrioritized];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolMode::ReceiverBased => "receiver-based",
            ProtocolMode::SenderPrioritized => "sender-prioritized",
        }
    }
}

impl std::str::FromStr for ProtocolMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "receiver-based" => Ok(ProtocolMode::ReceiverBased),
            "sender-prioritized" => Ok(ProtocolMode::SenderPrioritized),
            other => Err(Error::param(
                "mode",
                format!("unknown protocol mode `{other}`"),
            )),
        }
    }
}

impl std::fmt::Display for ProtocolMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourcePolicy {
    Fixed(NodeId),
    /// Uniform over non-gateway nodes, drawn per replication.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub mode: ProtocolMode,
    pub replications: u64,
    pub seed: u64,
    pub source: SourcePolicy,
    /// Copies that would need more hops than this are dropped.
    pub max_hops: u32,
    /// Backoff slots available to candidates; ordinals past the window share
    /// the last slot.
    pub election_slots: u32,
    /// Receiver-based only: candidates suppress on overhearing the winner.
    pub suppression: bool,
    /// Transmissions per hop before a holder gives up when nobody hears it.
    pub max_attempts: u32,
}

impl SimConfig {
    pub fn new(mode: ProtocolMode, source: SourcePolicy) -> Self {
        SimConfig {
            mode,
            replications: 1000,
            seed: 0,
            source,
            max_hops: 64,
            election_slots: 8,
            suppression: true,
            max_attempts: 3,
        }
    }

    pub fn check(&self, topology: &Topology) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::param("replications", "must be at least 1"));
        }
        if self.election_slots == 0 {
            return Err(Error::param("election_slots", "must be at least 1"));
        }
        if self.max_attempts == 0 {
            return Err(Error::param("max_attempts", "must be at least 1"));
        }
        let diameter = topology.max_hop_id();
        if self.max_hops < diameter {
            return Err(Error::param(
                "max_hops",
                format!("{} is below the network depth {diameter}", self.max_hops),
            ));
        }
        if let SourcePolicy::Fixed(s) = self.source {
            topology.require(s)?;
        }
        Ok(())
    }
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replication `r`: `splitmix64(seed) ^ r`. Each replication's
/// stream depends only on `(seed, r)`, so adding replications never changes
/// earlier ones, and nearby master seeds do not share streams.
pub fn replication_seed(seed: u64, replication: u64) -> u64 {
    splitmix64(seed) ^ replication
}

#[derive(Debug, Clone, Copy)]
struct LinkQuality {
    micro_ok: f64,
    data_ok: f64,
}

impl LinkQuality {
    fn new(ber: BitErrorRate, frame: &FrameParams) -> Self {
        let ok = 1.0 - ber.value();
        LinkQuality {
            micro_ok: ok.powf(f64::from(frame.micro_frame_bits())),
            data_ok: ok.powf(f64::from(frame.data_bits())),
        }
    }
}

/// Topology flattened into index-based tables for the hot loop.
#[derive(Debug, Clone)]
pub struct Network {
    ids: Vec<NodeId>,
    gateway: usize,
    cost: Vec<f64>,
    /// Sorted by neighbor index.
    adjacency: Vec<Vec<(usize, LinkQuality)>>,
    by_rank: Vec<Vec<usize>>,
    by_cost: Vec<Vec<usize>>,
    p_sw: f64,
    micro_frames: u32,
    transmission_bits: u64,
}

impl Network {
    pub fn new(topology: &Topology, costs: &PathCostTable) -> Result<Self> {
        let mut ids: Vec<NodeId> = topology.node_ids().collect();
        ids.sort_unstable();
        let index: BTreeMap<NodeId, usize> =
            ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let gateway = *index
            .get(&topology.gateway)
            .ok_or(Error::UnknownNode(topology.gateway))?;
        let node = |i: usize| topology.node(ids[i]).expect("indexed node");
        let cost: Vec<f64> = ids
            .iter()
            .map(|&id| {
                costs
                    .get(id)
                    .ok_or_else(|| Error::param("path_cost", format!("no cost for node {id}")))
            })
            .collect::<Result<_>>()?;

        let mut adjacency = vec![Vec::new(); ids.len()];
        for (&(a, b), &ber) in &topology.links {
            if let (Some(&i), Some(&j)) = (index.get(&a), index.get(&b)) {
                adjacency[i].push((j, LinkQuality::new(ber, &topology.frame)));
            }
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|&(j, _)| j);
        }
        let mut by_rank = vec![Vec::new(); ids.len()];
        let mut by_cost = vec![Vec::new(); ids.len()];
        for i in 0..ids.len() {
            let hop = node(i).hop_id;
            let eligible: Vec<usize> = adjacency[i]
                .iter()
                .map(|&(j, _)| j)
                .filter(|&j| node(j).hop_id < hop)
                .collect();
            let mut r = eligible.clone();
            r.sort_by(|&x, &y| node(x).rank.total_cmp(&node(y).rank).then(x.cmp(&y)));
            let mut c = eligible;
            c.sort_by(|&x, &y| cost[x].total_cmp(&cost[y]).then(x.cmp(&y)));
            by_rank[i] = r;
            by_cost[i] = c;
        }
        Ok(Network {
            ids,
            gateway,
            cost,
            adjacency,
            by_rank,
            by_cost,
            p_sw: topology.channel.switch_probability(),
            micro_frames: topology.frame.micro_frames(),
            transmission_bits: topology.frame.transmission_bits(),
        })
    }

    fn index_of(&self, id: NodeId) -> Result<usize> {
        self.ids
            .binary_search(&id)
            .map_err(|_| Error::UnknownNode(id))
    }

    fn link(&self, a: usize, b: usize) -> Option<LinkQuality> {
        let adj = &self.adjacency[a];
        adj.binary_search_by_key(&b, |&(j, _)| j)
            .ok()
            .map(|k| adj[k].1)
    }
}

#[derive(Debug, Clone, Copy)]
struct Listener {
    node: usize,
    /// Slot at which this candidate would transmit if it does not suppress.
    slot: u64,
    hops: u32,
}

#[derive(Debug)]
struct Pending {
    node: usize,
    hops: u32,
    attempt: u32,
    from_source: bool,
    listeners: Vec<Listener>,
}

struct Run<'a> {
    net: &'a Network,
    config: &'a SimConfig,
    rng: ChaCha8Rng,
    trace: DeliveryTrace,
    log: bool,
    handled: Vec<bool>,
    queue: BTreeMap<(u64, u64), Pending>,
    seq: u64,
    arrivals: u32,
}

impl Run<'_> {
    fn event(&mut self, time: u64, kind: EventKind, actor: usize, detail: impl FnOnce() -> String) {
        if self.log {
            self.trace.events.push(Event {
                time,
                kind,
                actor: self.net.ids[actor],
                detail: detail(),
            });
        }
    }

    fn schedule(&mut self, time: u64, p: Pending) {
        // A copy that still has to travel but is out of hop budget dies here.
        if p.node != self.net.gateway && p.hops >= self.config.max_hops {
            return;
        }
        self.queue.insert((time, self.seq), p);
        self.seq += 1;
    }

    /// `(decoded some micro-frame, decoded the data frame)`.
    fn decode(&mut self, q: LinkQuality) -> (bool, bool) {
        let mut any_micro = false;
        for _ in 0..self.net.micro_frames {
            any_micro |= self.rng.random::<f64>() < q.micro_ok;
        }
        let data = self.rng.random::<f64>() < q.data_ok;
        (any_micro, data)
    }

    fn on_channel(&mut self) -> bool {
        self.rng.random::<f64>() < self.net.p_sw
    }

    /// Whether `listener` picks up the preamble or data `speaker` sends on a
    /// transmission whose channel draw was `on`.
    fn overhears(&mut self, speaker: usize, listener: usize, on: bool) -> bool {
        match self.net.link(speaker, listener) {
            None => false,
            Some(_) if !on => true,
            Some(q) => {
                let (micro, data) = self.decode(q);
                micro || data
            }
        }
    }

    fn duplicate(&mut self, l: Listener, now: u64) {
        if self.handled[l.node] {
            return;
        }
        self.handled[l.node] = true;
        self.trace.duplicate_forwards += 1;
        self.trace.duplicate_cost += self.net.cost[l.node];
        let slot = l.slot.max(now + 1);
        self.event(slot, EventKind::DuplicateForward, l.node, || {
            format!("missed the elected forwarder, hop {}", l.hops)
        });
        self.schedule(
            slot,
            Pending {
                node: l.node,
                hops: l.hops,
                attempt: 1,
                from_source: false,
                listeners: Vec::new(),
            },
        );
    }

    /// Resolves a waiting candidate once the winner's frame is on air.
    fn settle(&mut self, speaker: usize, l: Listener, on: bool, now: u64) {
        if self.handled[l.node] {
            return;
        }
        let heard = self.overhears(speaker, l.node, on);
        let forward = match self.config.mode {
            ProtocolMode::ReceiverBased => !heard,
            // The header puts the winner ahead of every other member, so a
            // member that overheard it knows of a better receiver; one that
            // did not knows only of itself and forwards.
            ProtocolMode::SenderPrioritized => {
                let best_known = if heard { speaker } else { l.node };
                best_known == l.node
            }
        };
        if forward {
            self.duplicate(l, now);
        } else {
            let who = self.net.ids[speaker];
            self.event(now, EventKind::Suppress, l.node, || {
                format!("overheard {who}")
            });
        }
    }

    fn transmit(&mut self, now: u64, p: Pending) {
        let v = p.node;
        self.trace.transmissions += 1;
        self.trace.energy_bits += self.net.transmission_bits;
        let attempt = p.attempt;
        self.event(now, EventKind::TransmitPreamble, v, || {
            format!("attempt {attempt}")
        });
        self.event(now, EventKind::TransmitData, v, || {
            format!("hop {}", p.hops)
        });
        let on = self.on_channel();

        for l in p.listeners {
            self.settle(v, l, on, now);
        }

        let net = self.net;
        let order = match self.config.mode {
            ProtocolMode::ReceiverBased => &net.by_rank[v],
            ProtocolMode::SenderPrioritized => &net.by_cost[v],
        };
        // Reception draws run in neighbor-index order so both modes consume
        // the stream identically.
        let mut eligible: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&c| c == self.net.gateway || !self.handled[c])
            .collect();
        eligible.sort_unstable();
        let mut heard = Vec::with_capacity(eligible.len());
        for c in eligible {
            let q = self.net.link(v, c).expect("eligible neighbor is linked");
            let ok = if on {
                let (micro, data) = self.decode(q);
                micro && data
            } else {
                true
            };
            if ok {
                heard.push(c);
            }
        }
        heard.sort_by_key(|c| order.iter().position(|o| o == c));
        let from = net.ids[v];
        for &c in &heard {
            self.event(now, EventKind::Receive, c, || format!("from {from}"));
        }
        if p.from_source && attempt == 1 {
            self.trace.first_elected_cost = heard.first().map_or(0.0, |&w| self.net.cost[w]);
        }

        let Some((&winner, rest)) = heard.split_first() else {
            if attempt < self.config.max_attempts {
                self.schedule(
                    now + 1,
                    Pending {
                        attempt: attempt + 1,
                        listeners: Vec::new(),
                        ..p
                    },
                );
            }
            return;
        };

        let hops = p.hops + 1;
        let window = u64::from(self.config.election_slots - 1);
        let listeners: Vec<Listener> = rest
            .iter()
            .enumerate()
            .map(|(k, &c)| Listener {
                node: c,
                slot: now + 1 + (k as u64 + 1).min(window),
                hops,
            })
            .collect();
        self.event(now + 1, EventKind::Elect, winner, || {
            "first in backoff order".into()
        });

        let suppress = match self.config.mode {
            ProtocolMode::ReceiverBased => self.config.suppression,
            ProtocolMode::SenderPrioritized => true,
        };
        if !suppress {
            for l in &listeners {
                self.duplicate(*l, now + 1);
            }
        }

        if winner == self.net.gateway {
            self.trace.hops.get_or_insert(hops);
            self.arrivals += 1;
            self.event(now + 1, EventKind::GatewayArrival, winner, || {
                format!("hop {hops}")
            });
            if suppress {
                // The gateway's claim of the packet is what the others
                // listen for.
                let on = self.on_channel();
                for l in listeners {
                    self.settle(winner, l, on, now + 1);
                }
            }
            return;
        }

        self.handled[winner] = true;
        self.schedule(
            now + 1,
            Pending {
                node: winner,
                hops,
                attempt: 1,
                from_source: false,
                listeners: if suppress { listeners } else { Vec::new() },
            },
        );
    }
}

fn pick_source(net: &Network, policy: SourcePolicy, rng: &mut ChaCha8Rng) -> Result<usize> {
    match policy {
        SourcePolicy::Fixed(id) => net.index_of(id),
        SourcePolicy::Uniform => {
            let n = net.ids.len();
            if n == 1 {
                return Ok(net.gateway);
            }
            let k = rng.random_range(0..n - 1);
            Ok(if k >= net.gateway { k + 1 } else { k })
        }
    }
}

fn run_delivery(
    net: &Network,
    config: &SimConfig,
    replication: u64,
    log: bool,
) -> Result<DeliveryTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(replication_seed(config.seed, replication));
    let source = pick_source(net, config.source, &mut rng)?;
    let mut run = Run {
        net,
        config,
        rng,
        trace: DeliveryTrace {
            source: net.ids[source],
            events: Vec::new(),
            delivered: false,
            duplicate_arrivals: 0,
            duplicate_forwards: 0,
            transmissions: 0,
            hops: None,
            energy_bits: 0,
            duplicate_cost: 0.0,
            first_elected_cost: 0.0,
        },
        log,
        handled: vec![false; net.ids.len()],
        queue: BTreeMap::new(),
        seq: 0,
        arrivals: 0,
    };
    if source == net.gateway {
        run.trace.hops = Some(0);
        run.arrivals = 1;
        run.event(0, EventKind::GatewayArrival, source, || {
            "source is the gateway".into()
        });
    } else {
        run.handled[source] = true;
        run.schedule(
            0,
            Pending {
                node: source,
                hops: 0,
                attempt: 1,
                from_source: true,
                listeners: Vec::new(),
            },
        );
    }
    while let Some(((now, _), p)) = run.queue.pop_first() {
        run.transmit(now, p);
    }

    let arrivals = run.arrivals;
    let mut trace = run.trace;
    trace.events.sort_by_key(|e| e.time);
    trace.delivered = trace.hops.is_some();
    trace.duplicate_arrivals = arrivals.saturating_sub(1);
    Ok(trace)
}

/// Simulates one delivery with a full event log. Deterministic for fixed
/// `(topology, costs, config, replication_index)`.
pub fn simulate_delivery(
    topology: &Topology,
    costs: &PathCostTable,
    config: &SimConfig,
    replication_index: u64,
) -> Result<DeliveryTrace> {
    config.check(topology)?;
    let net = Network::new(topology, costs)?;
    run_delivery(&net, config, replication_index, true)
}

struct Sums {
    n: f64,
    delivered: u64,
    duplicates: f64,
    duplicate_arrivals: f64,
    overhead: f64,
    overhead_sq: f64,
    first: f64,
    first_sq: f64,
    transmissions: f64,
    hops: f64,
    energy: f64,
}

fn std_error(sum: f64, sum_sq: f64, n: f64) -> f64 {
    if n < 2.0 {
        return 0.0;
    }
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    (var / n).sqrt()
}

/// Aggregates per-delivery traces into experiment metrics.
pub fn aggregate(traces: &[DeliveryTrace]) -> Metrics {
    let mut s = Sums {
        n: traces.len() as f64,
        delivered: 0,
        duplicates: 0.0,
        duplicate_arrivals: 0.0,
        overhead: 0.0,
        overhead_sq: 0.0,
        first: 0.0,
        first_sq: 0.0,
        transmissions: 0.0,
        hops: 0.0,
        energy: 0.0,
    };
    for t in traces {
        s.delivered += u64::from(t.delivered);
        s.duplicates += f64::from(t.duplicate_forwards);
        s.duplicate_arrivals += f64::from(t.duplicate_arrivals);
        s.overhead += t.duplicate_cost;
        s.overhead_sq += t.duplicate_cost * t.duplicate_cost;
        s.first += t.first_elected_cost;
        s.first_sq += t.first_elected_cost * t.first_elected_cost;
        s.transmissions += f64::from(t.transmissions);
        s.hops += f64::from(t.hops.unwrap_or(0));
        s.energy += t.energy_bits as f64;
    }
    if traces.is_empty() {
        return Metrics::default();
    }
    Metrics {
        deliveries_attempted: traces.len() as u64,
        deliveries_succeeded: s.delivered,
        pdr: s.delivered as f64 / s.n,
        mean_duplicates: s.duplicates / s.n,
        mean_duplicate_arrivals: s.duplicate_arrivals / s.n,
        empirical_coordination_overhead: s.overhead / s.n,
        overhead_std_error: std_error(s.overhead, s.overhead_sq, s.n),
        mean_first_elected_cost: s.first / s.n,
        first_elected_std_error: std_error(s.first, s.first_sq, s.n),
        mean_transmissions: s.transmissions / s.n,
        mean_hops: if s.delivered > 0 {
            s.hops / s.delivered as f64
        } else {
            0.0
        },
        mean_energy_bits: s.energy / s.n,
    }
}

/// Runs `config.replications` independent deliveries (in parallel) and
/// aggregates them in replication order, so results do not depend on
/// scheduling.
pub fn run_experiment(topology: &Topology, config: &SimConfig) -> Result<Metrics> {
    topology.ensure_valid()?;
    config.check(topology)?;
    let costs = analysis::network_path_costs_lenient(topology)?;
    let net = Network::new(topology, &costs)?;
    let traces = (0..config.replications)
        .into_par_iter()
        .map(|r| run_delivery(&net, config, r, false))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(&traces))
}

/// Bit-level Monte Carlo estimate of the probability that `b` decodes at
/// least one micro-frame and the data frame sent by `a`. Channel switching
/// is not applied.
pub fn empirical_link_success(
    topology: &Topology,
    link: (NodeId, NodeId),
    frame: &FrameParams,
    trials: u64,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::param("trials", "at least one trial is required"));
    }
    let p = topology
        .link(link.0, link.1)
        .ok_or_else(|| Error::param("link", format!("no link {}-{}", link.0, link.1)))?
        .value();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bit_ok = |bits: u32| (0..bits).fold(true, |ok, _| (rng.random::<f64>() >= p) & ok);
    let mut heard = 0u64;
    for _ in 0..trials {
        let mut micro = false;
        for _ in 0..frame.micro_frames() {
            micro |= bit_ok(frame.micro_frame_bits());
        }
        let data = bit_ok(frame.data_bits());
        heard += u64::from(micro && data);
    }
    Ok(heard as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{ber_for_reception, reception_probability};
    use crate::model::ChannelModel;
    use crate::topology::fixtures::{self, default_frame};

    fn ber(p: f64) -> BitErrorRate {
        BitErrorRate::new(p).unwrap()
    }

    fn channel() -> ChannelModel {
        ChannelModel::single(1.0).unwrap()
    }

    fn config(mode: ProtocolMode, source: u32, reps: u64) -> SimConfig {
        let mut c = SimConfig::new(mode, SourcePolicy::Fixed(NodeId(source)));
        c.replications = reps;
        c.seed = 11;
        c
    }

    fn within(mean: f64, expect: f64, se: f64) -> bool {
        (mean - expect).abs() <= 3.0 * se.max(1e-12)
    }

    #[test]
    fn lossless_single_link() {
        let t = fixtures::chain(default_frame(), channel(), &[ber(0.0)]).unwrap();
        let costs = analysis::network_path_costs(&t).unwrap();
        for mode in ProtocolMode::ALL {
            let tr = simulate_delivery(&t, &costs, &config(mode, 1, 1), 0).unwrap();
            assert!(tr.delivered);
            assert_eq!(tr.hops, Some(1));
            assert_eq!(tr.duplicate_arrivals, 0);
            assert_eq!(tr.duplicate_forwards, 0);
            assert_eq!(tr.transmissions, 1);
            assert_eq!(tr.energy_bits, 116);
            assert!(tr.is_consistent());
        }
    }

    #[test]
    fn source_at_gateway() {
        let t = fixtures::chain(default_frame(), channel(), &[ber(0.0)]).unwrap();
        let costs = analysis::network_path_costs(&t).unwrap();
        let tr =
            simulate_delivery(&t, &costs, &config(ProtocolMode::ReceiverBased, 0, 1), 0).unwrap();
        assert!(tr.delivered);
        assert_eq!(tr.transmissions, 0);
        assert!(tr.is_consistent());
    }

    #[test]
    fn hopeless_links_retry_then_drop() {
        let t = fixtures::chain(default_frame(), channel(), &[ber(1.0)]).unwrap();
        let costs = analysis::network_path_costs_lenient(&t).unwrap();
        let mut c = config(ProtocolMode::ReceiverBased, 1, 1);
        c.max_attempts = 4;
        let tr = simulate_delivery(&t, &costs, &c, 0).unwrap();
        assert!(!tr.delivered);
        assert_eq!(tr.transmissions, 4);
        assert_eq!(tr.first_elected_cost, 0.0);
    }

    #[test]
    fn trace_is_deterministic() {
        let src = ber_for_reception(0.6, &default_frame(), 1.0).unwrap();
        let t = fixtures::diamond(default_frame(), channel(), src, ber(0.001), Some(src)).unwrap();
        let costs = analysis::network_path_costs(&t).unwrap();
        let c = config(ProtocolMode::ReceiverBased, 3, 1);
        for r in 0..20 {
            let a = simulate_delivery(&t, &costs, &c, r).unwrap();
            let b = simulate_delivery(&t, &costs, &c, r).unwrap();
            assert_eq!(a, b);
            assert!(a.is_consistent());
        }
    }

    #[test]
    fn config_checks() {
        let t = fixtures::chain(default_frame(), channel(), &[ber(0.0), ber(0.0)]).unwrap();
        let mut c = config(ProtocolMode::ReceiverBased, 2, 1);
        c.max_hops = 1;
        assert!(c.check(&t).is_err());
        c.max_hops = 2;
        assert!(c.check(&t).is_ok());
        c.replications = 0;
        assert!(c.check(&t).is_err());
        let c = config(ProtocolMode::ReceiverBased, 9, 1);
        assert_eq!(c.check(&t), Err(Error::UnknownNode(NodeId(9))));
    }

    #[test]
    fn unsuppressed_diamond_duplicates_match_enumeration() {
        let frame = default_frame();
        let src = ber_for_reception(0.7, &frame, 1.0).unwrap();
        let q = reception_probability(src, &frame, 1.0);
        let t = fixtures::diamond(frame, channel(), src, ber(0.0), None).unwrap();
        let mut c = config(ProtocolMode::ReceiverBased, 3, 100_000);
        c.suppression = false;
        c.max_attempts = 1;
        let m = run_experiment(&t, &c).unwrap();
        // Exactly one duplicate iff both relays hear the single attempt.
        let p_both = q * q;
        let se = (p_both * (1.0 - p_both) / 1e5).sqrt();
        assert!(
            within(m.mean_duplicates, p_both, se),
            "{} vs {p_both}",
            m.mean_duplicates
        );
        assert!(within(m.mean_duplicate_arrivals, p_both, se));
        assert!(m.mean_duplicate_arrivals > 0.0);
    }

    #[test]
    fn lossless_chain_experiment() {
        let t = fixtures::chain(default_frame(), channel(), &[ber(0.0); 3]).unwrap();
        for mode in ProtocolMode::ALL {
            let m = run_experiment(&t, &config(mode, 3, 100)).unwrap();
            assert_eq!(m.pdr, 1.0);
            assert_eq!(m.mean_duplicates, 0.0);
            assert_eq!(m.mean_hops, 3.0);
            assert_eq!(m.mean_transmissions, 3.0);
        }
    }

    #[test]
    fn all_bits_lost_means_nothing_delivered() {
        let t = fixtures::star(
            default_frame(),
            channel(),
            3,
            ber(1.0),
            ber(1.0),
            Some(ber(1.0)),
        )
        .unwrap();
        for mode in ProtocolMode::ALL {
            let m = run_experiment(&t, &config(mode, 4, 200)).unwrap();
            assert_eq!(m.pdr, 0.0);
            assert_eq!(m.deliveries_succeeded, 0);
        }
    }

    #[test]
    fn two_forwarder_star_without_suppression() {
        let frame = default_frame();
        let half = ber_for_reception(0.5, &frame, 1.0).unwrap();
        let t = fixtures::star(frame, channel(), 2, half, ber(0.0), None).unwrap();
        let mut c = config(ProtocolMode::ReceiverBased, 3, 100_000);
        c.suppression = false;
        c.max_attempts = 1;
        let m = run_experiment(&t, &c).unwrap();
        let se = (0.25f64 * 0.75 / 1e5).sqrt();
        assert!(within(m.mean_duplicates, 0.25, se), "{}", m.mean_duplicates);
    }

    #[test]
    fn off_channel_transmissions_always_land() {
        let ch = ChannelModel::single(0.0).unwrap();
        let t = fixtures::chain(default_frame(), ch, &[ber(1.0), ber(1.0)]).unwrap();
        let m = run_experiment(&t, &config(ProtocolMode::ReceiverBased, 2, 50)).unwrap();
        assert_eq!(m.pdr, 1.0);
    }

    #[test]
    fn uniform_sources_skip_gateway() {
        let t = fixtures::chain(default_frame(), channel(), &[ber(0.0); 2]).unwrap();
        let costs = analysis::network_path_costs(&t).unwrap();
        let mut c = config(ProtocolMode::SenderPrioritized, 1, 1);
        c.source = SourcePolicy::Uniform;
        for r in 0..50 {
            let tr = simulate_delivery(&t, &costs, &c, r).unwrap();
            assert_ne!(tr.source, NodeId(0));
        }
    }

    #[test]
    fn link_success_estimates() {
        let frame = default_frame();
        let mk = |p| fixtures::chain(frame, channel(), &[ber(p)]).unwrap();
        let link = (NodeId(0), NodeId(1));
        assert_eq!(
            empirical_link_success(&mk(0.0), link, &frame, 1000, 1).unwrap(),
            1.0
        );
        assert_eq!(
            empirical_link_success(&mk(1.0), link, &frame, 1000, 1).unwrap(),
            0.0
        );
        assert!(empirical_link_success(&mk(0.0), (NodeId(0), NodeId(5)), &frame, 10, 1).is_err());
    }

    #[test]
    fn replication_seeds_are_stable() {
        assert_eq!(replication_seed(7, 3), replication_seed(7, 3));
        assert_ne!(replication_seed(0, 1), replication_seed(1, 0));
    }
}
