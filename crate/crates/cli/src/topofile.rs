//! Line-oriented topology text format.
//!
//! ```text
//! # comments and blank lines are ignored
//! nodes 3 gateway 0
//! node 0 0 0
//! node 1 10 0
//! node 2 20 0
//! link 0 1 0.001
//! link 1 2 0.002
//! ```
//!
//! The header comes first and gives the node count and gateway id. Every
//! `link a b p` is undirected with bit error rate `p`. Hop IDs and ranks are
//! not stored; they are recomputed on load.

use std::fmt::Write as _;
use std::path::Path;

use orsim_core::{BitErrorRate, ChannelModel, FrameParams, NodeId, Position, Topology};

use crate::error::{CliError, Result};

/// Nodes, gateway and links read from a topology file, before frame and
/// channel parameters are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyDescription {
    pub gateway: NodeId,
    pub nodes: Vec<(NodeId, Position)>,
    pub links: Vec<(NodeId, NodeId, f64)>,
}

impl TopologyDescription {
    /// Builds the topology graph; hop IDs and ranks are left for the caller.
    pub fn build(&self, frame: FrameParams, channel: ChannelModel) -> Result<Topology> {
        let mut t = Topology::new(self.gateway, frame, channel);
        t.nodes.clear();
        for &(id, pos) in &self.nodes {
            t.add_node(id, pos);
        }
        for &(a, b, p) in &self.links {
            t.connect(a, b, BitErrorRate::new(p)?);
        }
        Ok(t)
    }

    pub fn from_topology(t: &Topology) -> Self {
        TopologyDescription {
            gateway: t.gateway,
            nodes: t.nodes.iter().map(|n| (n.id, n.position)).collect(),
            links: t
                .links
                .iter()
                .filter(|((a, b), _)| a < b)
                .map(|(&(a, b), ber)| (a, b, ber.value()))
                .collect(),
        }
    }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T, String> {
    let tok = tok.ok_or_else(|| format!("missing {what}"))?;
    tok.parse().map_err(|_| format!("bad {what} `{tok}`"))
}

pub fn parse(text: &str, path: &Path) -> Result<TopologyDescription> {
    let err = |line: usize, message: String| CliError::TopologyFile {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut header: Option<(usize, NodeId)> = None;
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tok = content.split_whitespace();
        let keyword = tok.next().unwrap_or_default();
        let parsed: Result<(), String> = (|| {
            match (keyword, header.is_some()) {
                ("nodes", false) => {
                    let n: usize = field(tok.next(), "node count")?;
                    if tok.next() != Some("gateway") {
                        return Err("expected `gateway` after the node count".into());
                    }
                    let g: u32 = field(tok.next(), "gateway id")?;
                    header = Some((n, NodeId(g)));
                }
                ("nodes", true) => return Err("duplicate header".into()),
                (_, false) => return Err("expected header `nodes N gateway G`".into()),
                ("node", true) => {
                    let id: u32 = field(tok.next(), "node id")?;
                    let x: f64 = field(tok.next(), "x coordinate")?;
                    let y: f64 = field(tok.next(), "y coordinate")?;
                    nodes.push((NodeId(id), Position::new(x, y)));
                }
                ("link", true) => {
                    let a: u32 = field(tok.next(), "link endpoint")?;
                    let b: u32 = field(tok.next(), "link endpoint")?;
                    let p: f64 = field(tok.next(), "bit error rate")?;
                    if !(0.0..=1.0).contains(&p) {
                        return Err(format!("bit error rate {p} outside [0, 1]"));
                    }
                    links.push((NodeId(a), NodeId(b), p));
                }
                (other, true) => return Err(format!("unknown keyword `{other}`")),
            }
            match tok.next() {
                Some(extra) => Err(format!("unexpected trailing `{extra}`")),
                None => Ok(()),
            }
        })();
        parsed.map_err(|m| err(line, m))?;
    }
    let (count, gateway) = header.ok_or_else(|| err(0, "empty topology file".into()))?;
    if count != nodes.len() {
        return Err(err(
            0,
            format!("header declares {count} nodes, found {}", nodes.len()),
        ));
    }
    Ok(TopologyDescription {
        gateway,
        nodes,
        links,
    })
}

pub fn write(desc: &TopologyDescription) -> String {
    let mut out = format!("nodes {} gateway {}\n", desc.nodes.len(), desc.gateway);
    for (id, pos) in &desc.nodes {
        let _ = writeln!(out, "node {id} {} {}", pos.x, pos.y);
    }
    for (a, b, p) in &desc.links {
        let _ = writeln!(out, "link {a} {b} {p}");
    }
    out
}
