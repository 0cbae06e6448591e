//! Experiment configuration (TOML).
//!
//! Every table is optional and falls back to defaults. [`Config::effective`]
//! renders the fully defaulted config; reading it back yields the same
//! experiment and the same [`Config::hash`].

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use orsim_core::analysis;
use orsim_core::topology::{self, BerModel, GeneratorConfig};
use orsim_core::{
    BitErrorRate, Channel, ChannelModel, FrameParams, NodeId, Position, ProtocolMode, SimConfig,
    SourcePolicy, Topology,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::topofile::{self, TopologyDescription};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub frame: FrameConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologyConfig>,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub forwarder_sets: Vec<ForwarderSetConfig>,
    #[serde(default)]
    pub analyze: AnalyzeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    pub micro_frame_bits: u32,
    pub micro_frames: u32,
    pub data_bits: u32,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            micro_frame_bits: 8,
            micro_frames: 2,
            data_bits: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default = "default_noise")]
    pub noise_power: f64,
    /// Index of the channel whose switching probability gates links.
    #[serde(default)]
    pub evaluated: usize,
    #[serde(default = "default_channels")]
    pub channels: Vec<ChannelEntry>,
}

fn default_noise() -> f64 {
    1e-12
}

fn default_channels() -> Vec<ChannelEntry> {
    vec![ChannelEntry {
        p_sw: 1.0,
        p_acc: 1.0,
        bandwidth_hz: 1e6,
    }]
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            noise_power: default_noise(),
            evaluated: 0,
            channels: default_channels(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelEntry {
    pub p_sw: f64,
    pub p_acc: f64,
    pub bandwidth_hz: f64,
}

/// Exactly one of `nodes`/`links`, `file` or `generate` describes the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    #[serde(default)]
    pub gateway: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<NodeEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<LinkEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenerateConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub id: u32,
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub y: f64,
}

/// Link quality given as a raw bit error rate, as the target of the
/// closed-form link success, or as the target probability that a receiver
/// decodes both a micro-frame and the data frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quality {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ber: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reception: Option<f64>,
}

impl Quality {
    pub fn ber(p: f64) -> Self {
        Quality {
            ber: Some(p),
            ..Quality::default()
        }
    }

    pub fn resolve(&self, field: &str, frame: &FrameParams, p_sw: f64) -> Result<BitErrorRate> {
        match (self.ber, self.success, self.reception) {
            (Some(p), None, None) => Ok(BitErrorRate::new(p)?),
            (None, Some(s), None) => Ok(analysis::ber_for_link_success(s, frame, p_sw)?),
            (None, None, Some(r)) => Ok(analysis::ber_for_reception(r, frame, p_sw)?),
            _ => Err(CliError::config(
                field,
                "give exactly one of `ber`, `success` or `reception`",
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkEntry {
    pub a: u32,
    pub b: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ber: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reception: Option<f64>,
}

impl LinkEntry {
    pub fn quality(&self) -> Quality {
        Quality {
            ber: self.ber,
            success: self.success,
            reception: self.reception,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    /// Total node count, gateway included (the generated gateway is node 0).
    pub nodes: usize,
    #[serde(default = "default_area")]
    pub area_side: f64,
    #[serde(default = "default_range")]
    pub radio_range: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gateway_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gateway_y: Option<f64>,
    /// Fixed bit error rate; otherwise `ber_min`..`ber_max` by distance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ber: Option<f64>,
    #[serde(default)]
    pub ber_min: f64,
    #[serde(default = "default_ber_max")]
    pub ber_max: f64,
    /// Placement seed; defaults to the top-level seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Consecutive placement seeds tried until one is connected.
    #[serde(default = "default_attempts")]
    pub attempts: u64,
}

fn default_area() -> f64 {
    100.0
}
fn default_range() -> f64 {
    35.0
}
fn default_ber_max() -> f64 {
    0.01
}
fn default_attempts() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeChoice {
    ReceiverBased,
    SenderPrioritized,
    #[default]
    Both,
}

impl ModeChoice {
    pub fn modes(self) -> Vec<ProtocolMode> {
        match self {
            ModeChoice::ReceiverBased => vec![ProtocolMode::ReceiverBased],
            ModeChoice::SenderPrioritized => vec![ProtocolMode::SenderPrioritized],
            ModeChoice::Both => ProtocolMode::ALL.to_vec(),
        }
    }
}

/// A node id, or the string `"uniform"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceChoice {
    Node(u32),
    Policy(String),
}

impl Default for SourceChoice {
    fn default() -> Self {
        SourceChoice::Policy("uniform".into())
    }
}

impl SourceChoice {
    pub fn policy(&self) -> Result<SourcePolicy> {
        match self {
            SourceChoice::Node(id) => Ok(SourcePolicy::Fixed(NodeId(*id))),
            SourceChoice::Policy(s) if s == "uniform" => Ok(SourcePolicy::Uniform),
            SourceChoice::Policy(s) => Err(CliError::config(
                "simulation.source",
                format!("expected a node id or \"uniform\", got \"{s}\""),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default)]
    pub mode: ModeChoice,
    #[serde(default = "default_replications")]
    pub replications: u64,
    #[serde(default)]
    pub source: SourceChoice,
    /// Defaults to the larger of 64 and the network depth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_hops: Option<u32>,
    #[serde(default = "default_slots")]
    pub election_slots: u32,
    #[serde(default = "default_true")]
    pub suppression: bool,
    #[serde(default = "default_attempts_per_hop")]
    pub max_attempts: u32,
}

fn default_replications() -> u64 {
    1000
}
fn default_slots() -> u32 {
    8
}
fn default_true() -> bool {
    true
}
fn default_attempts_per_hop() -> u32 {
    3
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            mode: ModeChoice::default(),
            replications: default_replications(),
            source: SourceChoice::default(),
            max_hops: None,
            election_slots: default_slots(),
            suppression: true,
            max_attempts: default_attempts_per_hop(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwarderSetConfig {
    pub name: String,
    pub entries: Vec<ForwarderEntryConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwarderEntryConfig {
    pub node: u32,
    pub p: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    /// Node pairs reported with both distance measures.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub distance_pairs: Vec<[u32; 2]>,
}

/// One swept axis with its values. The `forwarder_count` axis builds a star
/// from `star`; the other axes modify the configured topology.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forwarder_count: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ber: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_sw: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub micro_frames: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_bits: Option<Vec<u32>>,
    #[serde(default)]
    pub star: StarConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarConfig {
    pub source: Quality,
    pub relay: Quality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross: Option<Quality>,
}

impl Default for StarConfig {
    fn default() -> Self {
        StarConfig {
            source: Quality {
                success: Some(0.5),
                ..Quality::default()
            },
            relay: Quality::ber(0.0),
            cross: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Axis {
    ForwarderCount(Vec<u32>),
    Ber(Vec<f64>),
    SwitchProbability(Vec<f64>),
    MicroFrames(Vec<u32>),
    DataBits(Vec<u32>),
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::ForwarderCount(_) => "forwarder_count",
            Axis::Ber(_) => "ber",
            Axis::SwitchProbability(_) => "p_sw",
            Axis::MicroFrames(_) => "micro_frames",
            Axis::DataBits(_) => "data_bits",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Axis::ForwarderCount(v) | Axis::MicroFrames(v) | Axis::DataBits(v) => v.len(),
            Axis::Ber(v) | Axis::SwitchProbability(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SweepConfig {
    pub fn axis(&self) -> Result<Axis> {
        let mut axes = Vec::new();
        if let Some(v) = &self.forwarder_count {
            axes.push(Axis::ForwarderCount(v.clone()));
        }
        if let Some(v) = &self.ber {
            axes.push(Axis::Ber(v.clone()));
        }
        if let Some(v) = &self.p_sw {
            axes.push(Axis::SwitchProbability(v.clone()));
        }
        if let Some(v) = &self.micro_frames {
            axes.push(Axis::MicroFrames(v.clone()));
        }
        if let Some(v) = &self.data_bits {
            axes.push(Axis::DataBits(v.clone()));
        }
        match axes.len() {
            0 => Err(CliError::config("sweep", "no swept axis")),
            1 => {
                let axis = axes.pop().expect("one axis");
                if axis.is_empty() {
                    return Err(CliError::config(
                        format!("sweep.{}", axis.name()),
                        "empty value list",
                    ));
                }
                Ok(axis)
            }
            _ => Err(CliError::config("sweep", "single-axis sweeps only")),
        }
    }
}

impl Config {
    /// Reads a config; relative topology file paths resolve against the
    /// config's directory.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Config::parse(&text, path)?;
        if let Some(file) = config.topology.as_mut().and_then(|t| t.file.as_mut()) {
            if file.is_relative() {
                *file = path.parent().unwrap_or(Path::new("")).join(&*file);
            }
        }
        Ok(config)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Config> {
        toml::from_str(text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string().trim_end().to_string(),
        })
    }

    /// The config with every default spelled out.
    pub fn effective(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`Config::effective`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.effective().as_bytes()))
    }

    pub fn frame(&self) -> Result<FrameParams> {
        let f = self.frame;
        Ok(FrameParams::new(
            f.micro_frame_bits,
            f.micro_frames,
            f.data_bits,
        )?)
    }

    pub fn channel_model(&self) -> Result<ChannelModel> {
        let channels = self
            .channel
            .channels
            .iter()
            .map(|c| Channel::new(c.p_sw, c.p_acc, c.bandwidth_hz))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ChannelModel::new(
            channels,
            self.channel.noise_power,
            self.channel.evaluated,
        )?)
    }

    pub fn sim_config(&self, mode: ProtocolMode, topology: &Topology) -> Result<SimConfig> {
        let s = &self.simulation;
        let mut c = SimConfig::new(mode, s.source.policy()?);
        c.replications = s.replications;
        c.seed = self.seed;
        c.max_hops = s.max_hops.unwrap_or_else(|| topology.max_hop_id().max(64));
        c.election_slots = s.election_slots;
        c.suppression = s.suppression;
        c.max_attempts = s.max_attempts;
        c.check(topology)?;
        Ok(c)
    }

    /// The configured topology with hop IDs and ranks assigned. Nodes that
    /// can never be heard get an infinite rank.
    pub fn topology(&self) -> Result<Topology> {
        let spec = self
            .topology
            .as_ref()
            .ok_or_else(|| CliError::config("topology", "no topology configured"))?;
        let frame = self.frame()?;
        let channel = self.channel_model()?;
        let inline = !spec.nodes.is_empty() || !spec.links.is_empty();
        let sources = usize::from(inline)
            + usize::from(spec.file.is_some())
            + usize::from(spec.generate.is_some());
        if sources != 1 {
            return Err(CliError::config(
                "topology",
                "give exactly one of inline `nodes`/`links`, `file` or `generate`",
            ));
        }
        if let Some(g) = &spec.generate {
            return self.generate(g, frame, channel);
        }
        let desc = match &spec.file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                    path: path.clone(),
                    source,
                })?;
                topofile::parse(&text, path)?
            }
            None => self.inline_description(spec, &frame, channel.switch_probability())?,
        };
        finish(desc.build(frame, channel)?)
    }

    fn inline_description(
        &self,
        spec: &TopologyConfig,
        frame: &FrameParams,
        p_sw: f64,
    ) -> Result<TopologyDescription> {
        let mut pairs = BTreeSet::new();
        let mut links = Vec::new();
        for (i, l) in spec.links.iter().enumerate() {
            let field = format!("topology.links[{i}]");
            if !pairs.insert((l.a.min(l.b), l.a.max(l.b))) {
                return Err(CliError::config(
                    field,
                    format!("link {}-{} listed twice", l.a, l.b),
                ));
            }
            let ber = l.quality().resolve(&field, frame, p_sw)?;
            links.push((NodeId(l.a), NodeId(l.b), ber.value()));
        }
        Ok(TopologyDescription {
            gateway: NodeId(spec.gateway),
            nodes: spec
                .nodes
                .iter()
                .map(|n| (NodeId(n.id), Position::new(n.x, n.y)))
                .collect(),
            links,
        })
    }

    fn generate(
        &self,
        g: &GenerateConfig,
        frame: FrameParams,
        channel: ChannelModel,
    ) -> Result<Topology> {
        let ber = match g.ber {
            Some(p) => BerModel::Fixed(BitErrorRate::new(p)?),
            None => BerModel::Distance {
                p_min: g.ber_min,
                p_max: g.ber_max,
            },
        };
        let config = GeneratorConfig {
            nodes: g.nodes,
            area_side: g.area_side,
            radio_range: g.radio_range,
            gateway_position: Position::new(
                g.gateway_x.unwrap_or(g.area_side / 2.0),
                g.gateway_y.unwrap_or(g.area_side / 2.0),
            ),
            ber,
            frame,
            channel,
        };
        let first = g.seed.unwrap_or(self.seed);
        for k in 0..g.attempts.max(1) {
            match topology::generate(&config, first.wrapping_add(k)) {
                Err(orsim_core::Error::DisconnectedTopology) => continue,
                other => return Ok(other?),
            }
        }
        Err(orsim_core::Error::DisconnectedTopology.into())
    }
}

/// Structural checks, then hop IDs and lenient ranks, then the full
/// invariant check.
pub fn finish(t: Topology) -> Result<Topology> {
    let structural: Vec<_> = t
        .validate()
        .into_iter()
        .filter(|v| {
            !matches!(
                v,
                orsim_core::Violation::NoUpstreamNeighbor(_)
                    | orsim_core::Violation::GatewayHopId(_)
            )
        })
        .collect();
    if !structural.is_empty() {
        return Err(orsim_core::Error::InvalidTopology(structural).into());
    }
    let t = topology::compute_ranks_lenient(&topology::assign_hop_ids(&t)?)?;
    t.ensure_valid()?;
    Ok(t)
}
