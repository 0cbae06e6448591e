//! Subcommands. Each writes to the sink it is given; `main` owns `--out`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use orsim_core::analysis::{self, network_path_costs_lenient};
use orsim_core::engine::run_experiment;
use orsim_core::topology::{self, fixtures};
use orsim_core::{ForwarderEntry, ForwarderSet, FrameParams, NodeId, SourcePolicy, Topology};
use serde_json::{json, Value};

use crate::config::{self, Axis, Config};
use crate::error::{CliError, Result};
use crate::verify::{self, ClosedForm, Grid};

/// Attached to every record and row.
pub const CHI_CONVENTION: &str = "chi = f/(1-f): retransmissions after the first attempt";

#[derive(Debug, Parser)]
#[command(
    name = "orsim",
    version,
    about = "Opportunistic forwarding analysis and simulation"
)]
pub struct Cli {
    /// Write results to this file instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also write the fully defaulted config to this file.
    #[arg(long, global = true)]
    pub emit_config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form link, path cost, overhead and distance records.
    Analyze { config: PathBuf },
    /// Monte Carlo metrics per protocol mode.
    Simulate { config: PathBuf },
    /// Oracle-versus-closed-form checks.
    Verify {
        /// e.g. `sizes=1-4;p=0,0.25,0.5,0.75,1;cost=0,1,2.5;trials=200000;seed=0`
        #[arg(long)]
        grid: Option<String>,
    },
    /// One-axis parameter sweep as CSV.
    Sweep { config: PathBuf },
}

/// Runs `cli` against `out`. Verification failures come back as
/// [`CliError::VerificationFailed`] after the report is written.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let load = |path: &Path| -> Result<Config> {
        let config = Config::load(path)?;
        if let Some(dest) = &cli.emit_config {
            std::fs::write(dest, config.effective()).map_err(|source| CliError::Io {
                path: dest.clone(),
                source,
            })?;
        }
        Ok(config)
    };
    match &cli.command {
        Command::Analyze { config } => analyze(&load(config)?, out),
        Command::Simulate { config } => simulate(&load(config)?, out),
        Command::Sweep { config } => sweep(&load(config)?, out),
        Command::Verify { grid } => {
            let grid = match grid {
                Some(spec) => spec.parse()?,
                None => Grid::default(),
            };
            verify_with(&verify::Analytic, &grid, out)
        }
    }
}

fn provenance(config: &Config, hash: &str, mut record: Value) -> Value {
    let map = record.as_object_mut().expect("records are objects");
    map.insert("seed".into(), json!(config.seed));
    map.insert("config_hash".into(), json!(hash));
    map.insert("chi_convention".into(), json!(CHI_CONVENTION));
    record
}

fn emit(out: &mut dyn Write, record: &Value) -> Result<()> {
    writeln!(out, "{record}")?;
    Ok(())
}

/// Retransmissions until some member of `fs` hears, or `None` if none can.
fn set_retransmissions(fs: &ForwarderSet) -> Option<f64> {
    let none = fs.iter().map(|e| 1.0 - e.p_link).product::<f64>();
    analysis::expected_retransmissions(none).ok()
}

fn entries_json(fs: &ForwarderSet) -> Value {
    fs.iter()
        .map(|e| json!({"node": e.node.0, "p_link": e.p_link, "remaining_cost": e.remaining_cost}))
        .collect()
}

pub fn analyze(config: &Config, out: &mut dyn Write) -> Result<()> {
    let hash = config.hash();
    let model = config.channel_model()?;
    for (i, c) in model.channels().iter().enumerate() {
        emit(
            out,
            &provenance(
                config,
                &hash,
                json!({
                    "record": "channel",
                    "channel": i,
                    "evaluated": i == model.evaluated_index(),
                    "p_sw": c.p_sw,
                    "p_acc": c.p_acc,
                    "bandwidth_hz": c.bandwidth_hz,
                    "potential_bandwidth_hz": analysis::potential_bandwidth(c.p_acc, c.bandwidth_hz),
                }),
            ),
        )?;
    }
    if config.topology.is_some() {
        let t = config.topology()?;
        analyze_topology(config, &hash, &t, out)?;
    }
    for (i, set) in config.forwarder_sets.iter().enumerate() {
        let entries = set
            .entries
            .iter()
            .map(|e| ForwarderEntry::new(NodeId(e.node), e.p, e.cost))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::config(format!("forwarder_sets[{i}]"), e.to_string()))?;
        let fs = ForwarderSet::new(entries)
            .map_err(|e| CliError::config(format!("forwarder_sets[{i}]"), e.to_string()))?;
        let cost = match analysis::total_path_cost(&fs) {
            Ok(y) => Some(y),
            Err(orsim_core::Error::UnreachableForwarderSet) => None,
            Err(e) => {
                return Err(CliError::config(
                    format!("forwarder_sets[{i}]"),
                    e.to_string(),
                ))
            }
        };
        emit(
            out,
            &provenance(
                config,
                &hash,
                json!({
                    "record": "forwarder_set",
                    "name": set.name,
                    "entries": entries_json(&fs),
                    "total_path_cost": cost,
                    "coordination_overhead": analysis::coordination_overhead(&fs),
                    "chi": set_retransmissions(&fs),
                }),
            ),
        )?;
    }
    Ok(())
}

fn analyze_topology(config: &Config, hash: &str, t: &Topology, out: &mut dyn Write) -> Result<()> {
    let costs = network_path_costs_lenient(t)?;
    let p_sw = t.channel.switch_probability();
    let mut order: Vec<_> = t.nodes.iter().map(|n| (n.hop_id, n.id)).collect();
    order.sort_unstable();
    for (hop_id, id) in order {
        let node = t.require(id)?;
        let mut record = json!({
            "record": "node",
            "node": id.0,
            "hop_id": hop_id,
            "rank": node.rank,
            "path_cost": costs.get(id),
        });
        if id != t.gateway {
            let fs = topology::forwarder_set(t, id, &costs)?;
            let map = record.as_object_mut().expect("object");
            map.insert("forwarder_set".into(), entries_json(&fs));
            map.insert(
                "coordination_overhead".into(),
                json!(analysis::coordination_overhead(&fs)),
            );
            map.insert("chi".into(), json!(set_retransmissions(&fs)));
        }
        emit(out, &provenance(config, hash, record))?;
    }
    for (&(a, b), &ber) in t.links.iter().filter(|((a, b), _)| a < b) {
        let f = analysis::failure_probability(ber, &t.frame, p_sw);
        emit(
            out,
            &provenance(
                config,
                hash,
                json!({
                    "record": "link",
                    "a": a.0,
                    "b": b.0,
                    "ber": ber.value(),
                    "preamble_miss": analysis::preamble_miss_probability(ber, &t.frame),
                    "data_miss": analysis::data_miss_probability(ber, &t.frame),
                    "failure_probability": f,
                    "link_success": 1.0 - f,
                    "reception_probability": analysis::reception_probability(ber, &t.frame, p_sw),
                    "chi": analysis::expected_retransmissions(f).ok(),
                }),
            ),
        )?;
    }
    for &[a, b] in &config.analyze.distance_pairs {
        let (a, b) = (NodeId(a), NodeId(b));
        emit(
            out,
            &provenance(
                config,
                hash,
                json!({
                    "record": "distance",
                    "a": a.0,
                    "b": b.0,
                    "hop_distance": topology::hop_distance(t, a, b)?,
                    "rank_difference_distance": topology::rank_difference_distance(t, a, b)?,
                }),
            ),
        )?;
    }
    Ok(())
}

pub fn simulate(config: &Config, out: &mut dyn Write) -> Result<()> {
    let hash = config.hash();
    let t = config.topology()?;
    for mode in config.simulation.mode.modes() {
        let sim = config.sim_config(mode, &t)?;
        let m = run_experiment(&t, &sim)?;
        let source = match sim.source {
            SourcePolicy::Fixed(id) => json!(id.0),
            SourcePolicy::Uniform => json!("uniform"),
        };
        emit(
            out,
            &provenance(
                config,
                &hash,
                json!({
                    "record": "metrics",
                    "mode": mode.as_str(),
                    "source": source,
                    "replications": m.deliveries_attempted,
                    "delivered": m.deliveries_succeeded,
                    "pdr": m.pdr,
                    "mean_duplicates": m.mean_duplicates,
                    "mean_duplicate_arrivals": m.mean_duplicate_arrivals,
                    "empirical_coordination_overhead": m.empirical_coordination_overhead,
                    "overhead_std_error": m.overhead_std_error,
                    "mean_first_elected_cost": m.mean_first_elected_cost,
                    "mean_transmissions": m.mean_transmissions,
                    "mean_hops": m.mean_hops,
                    "mean_energy_bits": m.mean_energy_bits,
                }),
            ),
        )?;
    }
    Ok(())
}

pub const SWEEP_COLUMNS: [&str; 12] = [
    "axis",
    "value",
    "mode",
    "analytic_overhead",
    "empirical_overhead",
    "pdr",
    "mean_duplicates",
    "chi",
    "mean_transmissions",
    "seed",
    "config_hash",
    "chi_convention",
];

/// One sweep point: the topology to run and the source to run it from.
struct Point {
    value: String,
    topology: Topology,
    source: SourcePolicy,
}

fn rebuild(
    t: &Topology,
    frame: FrameParams,
    channel: orsim_core::ChannelModel,
) -> Result<Topology> {
    let mut t = t.clone();
    t.frame = frame;
    t.channel = channel;
    config::finish(t)
}

fn sweep_points(config: &Config, axis: &Axis) -> Result<Vec<Point>> {
    let frame = config.frame()?;
    let channel = config.channel_model()?;
    if let Axis::ForwarderCount(counts) = axis {
        let star = &config.sweep.as_ref().expect("sweep configured").star;
        let p_sw = channel.switch_probability();
        let source = star.source.resolve("sweep.star.source", &frame, p_sw)?;
        let relay = star.relay.resolve("sweep.star.relay", &frame, p_sw)?;
        let cross = match &star.cross {
            Some(q) => Some(q.resolve("sweep.star.cross", &frame, p_sw)?),
            None => None,
        };
        return counts
            .iter()
            .map(|&n| {
                if n == 0 {
                    return Err(CliError::config(
                        "sweep.forwarder_count",
                        "counts start at 1",
                    ));
                }
                Ok(Point {
                    value: n.to_string(),
                    topology: fixtures::star(frame, channel.clone(), n, source, relay, cross)?,
                    source: SourcePolicy::Fixed(NodeId(n + 1)),
                })
            })
            .collect();
    }
    let base = config.topology()?;
    let source = config.simulation.source.policy()?;
    let point = |value: String, topology: Topology| Point {
        value,
        topology,
        source,
    };
    let bad = |field: &str, e: orsim_core::Error| {
        CliError::config(format!("sweep.{field}"), e.to_string())
    };
    match axis {
        Axis::ForwarderCount(_) => unreachable!("handled above"),
        Axis::Ber(values) => values
            .iter()
            .map(|&p| {
                let ber = orsim_core::BitErrorRate::new(p).map_err(|e| bad("ber", e))?;
                let mut t = base.clone();
                t.links.values_mut().for_each(|b| *b = ber);
                Ok(point(p.to_string(), rebuild(&t, frame, channel.clone())?))
            })
            .collect(),
        Axis::SwitchProbability(values) => values
            .iter()
            .map(|&p| {
                let ch = channel
                    .with_switch_probability(p)
                    .map_err(|e| bad("p_sw", e))?;
                Ok(point(p.to_string(), rebuild(&base, frame, ch)?))
            })
            .collect(),
        Axis::MicroFrames(values) => values
            .iter()
            .map(|&r| {
                let f = FrameParams::new(frame.micro_frame_bits(), r, frame.data_bits())
                    .map_err(|e| bad("micro_frames", e))?;
                Ok(point(r.to_string(), rebuild(&base, f, channel.clone())?))
            })
            .collect(),
        Axis::DataBits(values) => values
            .iter()
            .map(|&d| {
                let f = FrameParams::new(frame.micro_frame_bits(), frame.micro_frames(), d)
                    .map_err(|e| bad("data_bits", e))?;
                Ok(point(d.to_string(), rebuild(&base, f, channel.clone())?))
            })
            .collect(),
    }
}

/// Analytic overhead and chi at the source's forwarder set, averaged over
/// sources when the source is uniform.
fn analytic_at(t: &Topology, source: SourcePolicy) -> Result<(f64, f64)> {
    let costs = network_path_costs_lenient(t)?;
    let sources: Vec<NodeId> = match source {
        SourcePolicy::Fixed(id) => vec![id],
        SourcePolicy::Uniform => t.node_ids().filter(|&id| id != t.gateway).collect(),
    };
    if sources.is_empty() || sources == [t.gateway] {
        return Ok((0.0, 0.0));
    }
    let (mut overhead, mut chi) = (0.0, 0.0);
    for &s in &sources {
        let fs = topology::forwarder_set(t, s, &costs)?;
        overhead += analysis::coordination_overhead(&fs);
        chi += set_retransmissions(&fs).unwrap_or(f64::INFINITY);
    }
    let n = sources.len() as f64;
    Ok((overhead / n, chi / n))
}

pub fn sweep(config: &Config, out: &mut dyn Write) -> Result<()> {
    let spec = config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::config("sweep", "no [sweep] table"))?;
    let axis = spec.axis()?;
    let points = sweep_points(config, &axis)?;
    let hash = config.hash();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for point in points {
        let (analytic, chi) = analytic_at(&point.topology, point.source)?;
        for mode in config.simulation.mode.modes() {
            let mut sim = config.sim_config(mode, &point.topology)?;
            sim.source = point.source;
            sim.check(&point.topology)?;
            let m = run_experiment(&point.topology, &sim)?;
            w.write_record([
                axis.name().to_string(),
                point.value.clone(),
                mode.as_str().to_string(),
                analytic.to_string(),
                m.empirical_coordination_overhead.to_string(),
                m.pdr.to_string(),
                m.mean_duplicates.to_string(),
                chi.to_string(),
                m.mean_transmissions.to_string(),
                config.seed.to_string(),
                hash.clone(),
                CHI_CONVENTION.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes one line per case plus a summary.
pub fn verify_with(closed: &dyn ClosedForm, grid: &Grid, out: &mut dyn Write) -> Result<()> {
    let cases = verify::run(closed, grid)?;
    let failed = cases.iter().filter(|c| !c.passed()).count();
    for c in &cases {
        writeln!(out, "{}", c.line())?;
    }
    writeln!(out, "verify: {} cases, {failed} failed", cases.len())?;
    if failed > 0 {
        return Err(CliError::VerificationFailed(failed));
    }
    Ok(())
}
