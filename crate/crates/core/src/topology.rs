// Copyright 2026 The fhsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Physical fronthaul topology and logical link patterns.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Port(pub u16);

impl Port {
    /// The node-internal attachment point: regulator ingress at a source,
    /// delivery at a destination.
    pub const LOCAL: Port = Port(u16::MAX);
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Port::LOCAL {
            write!(f, "local")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Rrh,
    Bbu,
    FhSwitch,
    TimingSource,
}

impl NodeKind {
    pub fn min_ports(self) -> u16 {
        match self {
            NodeKind::FhSwitch => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::Rrh => "rrh",
            NodeKind::Bbu => "bbu",
            NodeKind::FhSwitch => "switch",
            NodeKind::TimingSource => "timing",
        })
    }
}

impl FromStr for NodeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rrh" => Ok(NodeKind::Rrh),
            "bbu" => Ok(NodeKind::Bbu),
            "switch" => Ok(NodeKind::FhSwitch),
            "timing" => Ok(NodeKind::TimingSource),
            _ => Err(format!("unknown node kind '{s}' (expected rrh, bbu, switch, timing)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub kind: NodeKind,
    pub ports: u16,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LinkClass {
    Fiber,
    Wireless,
}

impl fmt::Display for LinkClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkClass::Fiber => "fiber",
            LinkClass::Wireless => "wireless",
        })
    }
}

impl FromStr for LinkClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fiber" => Ok(LinkClass::Fiber),
            "wireless" => Ok(LinkClass::Wireless),
            _ => Err(format!("unknown link class '{s}' (expected fiber, wireless)")),
        }
    }
}

/// Per-direction parameters of a full-duplex link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkParams {
    /// Bits per second in each direction.
    pub capacity: u64,
    /// Seconds.
    pub propagation_delay: f64,
    /// Standard deviation of the timing jitter added to a clock crossing the link, seconds.
    pub jitter_std: f64,
    pub class: LinkClass,
}

impl LinkParams {
    pub fn fiber(capacity: u64, propagation_delay: f64) -> Self {
        LinkParams {
            capacity,
            propagation_delay,
            jitter_std: 0.0,
            class: LinkClass::Fiber,
        }
    }

    pub fn with_jitter(mut self, jitter_std: f64) -> Self {
        self.jitter_std = jitter_std;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhysLink {
    pub id: LinkId,
    pub a: (NodeId, Port),
    pub b: (NodeId, Port),
    pub params: LinkParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    AToB,
    BToA,
}

/// One transmission direction of a link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DirLink {
    pub link: LinkId,
    pub dir: Direction,
}

impl PhysLink {
    pub fn other_end(&self, node: NodeId) -> Option<(NodeId, Port)> {
        if self.a.0 == node {
            Some(self.b)
        } else if self.b.0 == node {
            Some(self.a)
        } else {
            None
        }
    }

    pub fn port_at(&self, node: NodeId) -> Option<Port> {
        if self.a.0 == node {
            Some(self.a.1)
        } else if self.b.0 == node {
            Some(self.b.1)
        } else {
            None
        }
    }

    /// Direction of travel when leaving `from`.
    pub fn direction_from(&self, from: NodeId) -> Option<DirLink> {
        let dir = if self.a.0 == from {
            Direction::AToB
        } else if self.b.0 == from {
            Direction::BToA
        } else {
            return None;
        };
        Some(DirLink { link: self.id, dir })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("duplicate node name '{0}'")]
    DuplicateName(String),
    #[error("unknown node {0:?}")]
    UnknownNode(NodeId),
    #[error("link {0:?} connects a node to itself")]
    SelfLoop(LinkId),
    #[error("link {0:?}: {1}")]
    InvalidLink(LinkId, String),
    #[error("node '{name}' has {declared} ports but {used} links")]
    PortsExhausted { name: String, declared: u16, used: u16 },
    #[error("node '{0}' has no links")]
    Isolated(String),
    #[error("topology is not connected: '{0}' unreachable from '{1}'")]
    Disconnected(String, String),
    #[error("topology has no nodes")]
    Empty,
    #[error("generator: {0}")]
    Generator(String),
}

/// Immutable validated topology. Node ids are dense indices.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalTopology {
    nodes: Vec<Node>,
    links: Vec<PhysLink>,
    /// Per node: (neighbor, link) sorted ascending.
    adjacency: Vec<Vec<(NodeId, LinkId)>>,
    /// Per node: link attached at each port index.
    port_links: Vec<Vec<Option<LinkId>>>,
}

impl PhysicalTopology {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[PhysLink] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0 as usize]
    }

    pub fn link(&self, id: LinkId) -> &PhysLink {
        &self.links[id.0 as usize]
    }

    pub fn contains(&self, id: NodeId) -> bool {
        (id.0 as usize) < self.nodes.len()
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.name == name).map(|n| n.id)
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.node(id).name
    }

    pub fn neighbors(&self, id: NodeId) -> &[(NodeId, LinkId)] {
        &self.adjacency[id.0 as usize]
    }

    pub fn link_at(&self, node: NodeId, port: Port) -> Option<LinkId> {
        self.port_links
            .get(node.0 as usize)
            .and_then(|p| p.get(port.0 as usize))
            .copied()
            .flatten()
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(move |n| n.kind == kind).map(|n| n.id)
    }

    /// Uses the links between consecutive nodes of `path`, picking the
    /// lowest link id when parallel links exist.
    pub fn path_links(&self, path: &[NodeId]) -> Option<Vec<LinkId>> {
        path.windows(2)
            .map(|w| self.neighbors(w[0]).iter().find(|(n, _)| *n == w[1]).map(|&(_, l)| l))
            .collect()
    }
}

/// Incremental construction; ports are assigned in link-insertion order.
#[derive(Clone, Debug, Default)]
pub struct TopologyBuilder {
    nodes: Vec<(String, NodeKind, Option<u16>)>,
    links: Vec<(NodeId, NodeId, LinkParams)>,
}

impl TopologyBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: impl Into<String>, kind: NodeKind) -> NodeId {
        self.nodes.push((name.into(), kind, None));
        NodeId((self.nodes.len() - 1) as u32)
    }

    pub fn add_node_with_ports(&mut self, name: impl Into<String>, kind: NodeKind, ports: u16) -> NodeId {
        self.nodes.push((name.into(), kind, Some(ports)));
        NodeId((self.nodes.len() - 1) as u32)
    }

    pub fn add_link(&mut self, a: NodeId, b: NodeId, params: LinkParams) -> LinkId {
        self.links.push((a, b, params));
        LinkId((self.links.len() - 1) as u32)
    }

    pub fn build(self) -> Result<PhysicalTopology, TopologyError> {
        if self.nodes.is_empty() {
            return Err(TopologyError::Empty);
        }
        let mut seen = BTreeMap::new();
        for (i, (name, _, _)) in self.nodes.iter().enumerate() {
            if seen.insert(name.clone(), i).is_some() {
                return Err(TopologyError::DuplicateName(name.clone()));
            }
        }
        let n = self.nodes.len();
        let mut used = vec![0u16; n];
        let mut links = Vec::with_capacity(self.links.len());
        for (i, &(a, b, params)) in self.links.iter().enumerate() {
            let id = LinkId(i as u32);
            for end in [a, b] {
                if end.0 as usize >= n {
                    return Err(TopologyError::UnknownNode(end));
                }
            }
            if a == b {
                return Err(TopologyError::SelfLoop(id));
            }
            if params.capacity == 0 {
                return Err(TopologyError::InvalidLink(id, "capacity must be positive".into()));
            }
            if !(params.propagation_delay >= 0.0) || !params.propagation_delay.is_finite() {
                return Err(TopologyError::InvalidLink(id, "propagation delay must be >= 0".into()));
            }
            if !(params.jitter_std >= 0.0) || !params.jitter_std.is_finite() {
                return Err(TopologyError::InvalidLink(id, "jitter must be >= 0".into()));
            }
            let pa = Port(used[a.0 as usize]);
            used[a.0 as usize] += 1;
            let pb = Port(used[b.0 as usize]);
            used[b.0 as usize] += 1;
            links.push(PhysLink {
                id,
                a: (a, pa),
                b: (b, pb),
                params,
            });
        }

        let mut nodes = Vec::with_capacity(n);
        for (i, (name, kind, declared)) in self.nodes.into_iter().enumerate() {
            if used[i] == 0 {
                return Err(TopologyError::Isolated(name));
            }
            let ports = match declared {
                Some(d) if d < used[i] => {
                    return Err(TopologyError::PortsExhausted {
                        name,
                        declared: d,
                        used: used[i],
                    })
                }
                Some(d) => d.max(kind.min_ports()),
                None => used[i].max(kind.min_ports()),
            };
            nodes.push(Node {
                id: NodeId(i as u32),
                name,
                kind,
                ports,
            });
        }

        let mut adjacency = vec![Vec::new(); n];
        let mut port_links: Vec<Vec<Option<LinkId>>> = nodes.iter().map(|nd| vec![None; nd.ports as usize]).collect();
        for l in &links {
            adjacency[l.a.0 .0 as usize].push((l.b.0, l.id));
            adjacency[l.b.0 .0 as usize].push((l.a.0, l.id));
            port_links[l.a.0 .0 as usize][l.a.1 .0 as usize] = Some(l.id);
            port_links[l.b.0 .0 as usize][l.b.1 .0 as usize] = Some(l.id);
        }
        for adj in &mut adjacency {
            adj.sort();
        }

        let mut reached = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        reached[0] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adjacency[u] {
                if !reached[v.0 as usize] {
                    reached[v.0 as usize] = true;
                    queue.push_back(v.0 as usize);
                }
            }
        }
        if let Some(i) = reached.iter().position(|r| !r) {
            return Err(TopologyError::Disconnected(nodes[i].name.clone(), nodes[0].name.clone()));
        }

        Ok(PhysicalTopology {
            nodes,
            links,
            adjacency,
            port_links,
        })
    }
}

/// An end device hung off a switch of a generated layout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Attachment {
    /// Index of the switch along the ring or chain.
    pub switch: usize,
    pub kind: NodeKind,
    pub link: LinkParams,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TopologySpec {
    Ring {
        n_switches: usize,
        trunk: LinkParams,
        attachments: Vec<Attachment>,
    },
    Chain {
        n_switches: usize,
        trunk: LinkParams,
        attachments: Vec<Attachment>,
    },
    /// One hub switch; each leaf is a device of the given kind.
    Star { leaves: Vec<(NodeKind, LinkParams)> },
}

/// Generates the ring, chain and star layouts. Switches get ids first, in
/// position order, followed by attachments in declaration order. Names are
/// `sw<i>` for switches and `<kind><j>` for devices, counted per kind.
pub fn build_topology(spec: &TopologySpec) -> Result<PhysicalTopology, TopologyError> {
    let mut b = TopologyBuilder::new();
    let mut counters: BTreeMap<NodeKind, usize> = BTreeMap::new();
    let mut device_name = |kind: NodeKind| {
        let c = counters.entry(kind).or_insert(0);
        let name = match kind {
            NodeKind::TimingSource => format!("ts{c}"),
            _ => format!("{kind}{c}"),
        };
        *c += 1;
        name
    };
    match spec {
        TopologySpec::Ring {
            n_switches,
            trunk,
            attachments,
        }
        | TopologySpec::Chain {
            n_switches,
            trunk,
            attachments,
        } => {
            let ring = matches!(spec, TopologySpec::Ring { .. });
            if *n_switches < 1 {
                return Err(TopologyError::Generator("at least one switch is required".into()));
            }
            if ring && *n_switches < 3 {
                return Err(TopologyError::Generator("a ring needs at least three switches".into()));
            }
            if attachments.is_empty() {
                return Err(TopologyError::Generator("no end devices attached".into()));
            }
            let switches: Vec<NodeId> = (0..*n_switches)
                .map(|i| b.add_node(format!("sw{i}"), NodeKind::FhSwitch))
                .collect();
            for w in switches.windows(2) {
                b.add_link(w[0], w[1], *trunk);
            }
            if ring {
                b.add_link(switches[n_switches - 1], switches[0], *trunk);
            }
            for att in attachments {
                if att.kind == NodeKind::FhSwitch {
                    return Err(TopologyError::Generator("attachments must be end devices".into()));
                }
                let sw = *switches.get(att.switch).ok_or_else(|| {
                    TopologyError::Generator(format!(
                        "attachment references switch {} of {}",
                        att.switch, n_switches
                    ))
                })?;
                let dev = b.add_node(device_name(att.kind), att.kind);
                b.add_link(dev, sw, att.link);
            }
        }
        TopologySpec::Star { leaves } => {
            if leaves.is_empty() {
                return Err(TopologyError::Generator("a star needs at least one leaf".into()));
            }
            let hub = b.add_node("sw0", NodeKind::FhSwitch);
            for &(kind, params) in leaves {
                if kind == NodeKind::FhSwitch {
                    return Err(TopologyError::Generator("star leaves must be end devices".into()));
                }
                let dev = b.add_node(device_name(kind), kind);
                b.add_link(dev, hub, params);
            }
        }
    }
    b.build()
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkId>,
}

impl Path {
    pub fn hops(&self) -> usize {
        self.links.len()
    }
}

/// Every loop-free path from `src` to `dst` with at most `max_hops` links,
/// sorted by node sequence, then link sequence.
pub fn enumerate_simple_paths(topo: &PhysicalTopology, src: NodeId, dst: NodeId, max_hops: usize) -> Vec<Path> {
    enumerate_simple_paths_filtered(topo, src, dst, max_hops, |_| true)
}

/// As [`enumerate_simple_paths`], restricted to links accepted by `usable`.
pub fn enumerate_simple_paths_filtered(
    topo: &PhysicalTopology,
    src: NodeId,
    dst: NodeId,
    max_hops: usize,
    usable: impl Fn(LinkId) -> bool,
) -> Vec<Path> {
    if src == dst || !topo.contains(src) || !topo.contains(dst) || max_hops == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut on_path = vec![false; topo.nodes().len()];
    let mut nodes = vec![src];
    let mut links = Vec::new();
    on_path[src.0 as usize] = true;
    dfs(topo, dst, max_hops, &usable, &mut on_path, &mut nodes, &mut links, &mut out);
    out.sort();
    out
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    topo: &PhysicalTopology,
    dst: NodeId,
    max_hops: usize,
    usable: &impl Fn(LinkId) -> bool,
    on_path: &mut [bool],
    nodes: &mut Vec<NodeId>,
    links: &mut Vec<LinkId>,
    out: &mut Vec<Path>,
) {
    let here = *nodes.last().unwrap();
    for &(next, link) in topo.neighbors(here) {
        if on_path[next.0 as usize] || !usable(link) {
            continue;
        }
        nodes.push(next);
        links.push(link);
        if next == dst {
            out.push(Path {
                nodes: nodes.clone(),
                links: links.clone(),
            });
        } else if links.len() < max_hops {
            on_path[next.0 as usize] = true;
            dfs(topo, dst, max_hops, usable, on_path, nodes, links, out);
            on_path[next.0 as usize] = false;
        }
        nodes.pop();
        links.pop();
    }
}

/// Routing granularity of a logical link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Granularity {
    CellLevel,
    PerUeFlow(u32),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PatternShape {
    PointToPoint { rrh: NodeId, bbu: NodeId },
    AggregationToOneBbu { rrhs: Vec<NodeId>, bbu: NodeId },
    RrhToMultiBbu { rrh: NodeId, bbus: Vec<NodeId> },
    BbuToBbu { src_bbu: NodeId, dst_bbu: NodeId },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LogicalPattern {
    pub shape: PatternShape,
    pub granularity: Granularity,
}

impl LogicalPattern {
    pub fn cell(shape: PatternShape) -> Self {
        LogicalPattern {
            shape,
            granularity: Granularity::CellLevel,
        }
    }

    /// Payload sources, one circuit per source.
    pub fn sources(&self) -> Vec<NodeId> {
        match &self.shape {
            PatternShape::PointToPoint { rrh, .. } => vec![*rrh],
            PatternShape::AggregationToOneBbu { rrhs, .. } => rrhs.clone(),
            PatternShape::RrhToMultiBbu { rrh, .. } => vec![*rrh],
            PatternShape::BbuToBbu { src_bbu, .. } => vec![*src_bbu],
        }
    }

    pub fn destinations(&self) -> Vec<NodeId> {
        match &self.shape {
            PatternShape::PointToPoint { bbu, .. } => vec![*bbu],
            PatternShape::AggregationToOneBbu { bbu, .. } => vec![*bbu],
            PatternShape::RrhToMultiBbu { bbus, .. } => bbus.clone(),
            PatternShape::BbuToBbu { dst_bbu, .. } => vec![*dst_bbu],
        }
    }

    /// Endpoint kinds must match the shape; multi-endpoint lists must be
    /// non-empty and free of duplicates.
    pub fn validate(&self, topo: &PhysicalTopology) -> Result<(), String> {
        let expect = |id: NodeId, kind: NodeKind| -> Result<(), String> {
            if !topo.contains(id) {
                return Err(format!("unknown node {id:?}"));
            }
            let node = topo.node(id);
            if node.kind != kind {
                return Err(format!("'{}' is a {} but the pattern needs a {}", node.name, node.kind, kind));
            }
            Ok(())
        };
        let unique = |ids: &[NodeId]| -> Result<(), String> {
            if ids.is_empty() {
                return Err("endpoint list is empty".into());
            }
            let mut v = ids.to_vec();
            v.sort();
            v.dedup();
            if v.len() != ids.len() {
                return Err("endpoint list has duplicates".into());
            }
            Ok(())
        };
        match &self.shape {
            PatternShape::PointToPoint { rrh, bbu } => {
                expect(*rrh, NodeKind::Rrh)?;
                expect(*bbu, NodeKind::Bbu)
            }
            PatternShape::AggregationToOneBbu { rrhs, bbu } => {
                unique(rrhs)?;
                rrhs.iter().try_for_each(|&r| expect(r, NodeKind::Rrh))?;
                expect(*bbu, NodeKind::Bbu)
            }
            PatternShape::RrhToMultiBbu { rrh, bbus } => {
                unique(bbus)?;
                expect(*rrh, NodeKind::Rrh)?;
                bbus.iter().try_for_each(|&b| expect(b, NodeKind::Bbu))
            }
            PatternShape::BbuToBbu { src_bbu, dst_bbu } => {
                expect(*src_bbu, NodeKind::Bbu)?;
                expect(*dst_bbu, NodeKind::Bbu)?;
                if src_bbu == dst_bbu {
                    return Err("source and destination BBU are the same node".into());
                }
                Ok(())
            }
        }
    }
}
