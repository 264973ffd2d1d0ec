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

//! Clock distribution, decoupled from payload routing.
//!
//! The tree depends only on the physical topology and the declared timing
//! sources. Sessions, label tables and link failures seen by the controller
//! never feed into it.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, VecDeque};
use std::hash::{Hash, Hasher};
use std::io::{self, Write};

use thiserror::Error;

use crate::topology::{LinkId, NodeId, NodeKind, PhysicalTopology};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClockSource {
    pub node: NodeId,
    /// Lower is better.
    pub quality_rank: i32,
    pub frequency_offset_ppb: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyncError {
    #[error("clock source on unknown node {0:?}")]
    UnknownNode(NodeId),
    #[error("clock source on '{0}': RRHs are slaves and cannot source timing")]
    SourceOnRrh(String),
    #[error("two clock sources declared on '{0}'")]
    DuplicateSource(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClockTree {
    /// Upstream neighbor and the link the clock arrives on.
    pub parent: BTreeMap<NodeId, (NodeId, LinkId)>,
    /// Source feeding each tree, keyed by its root node.
    pub roots: BTreeMap<NodeId, ClockSource>,
    /// Root serving every synchronized node (roots map to themselves).
    pub root_of: BTreeMap<NodeId, NodeId>,
    /// Breadth-first order, parents before children.
    pub order: Vec<NodeId>,
    /// Nodes with no path to any source.
    pub unsynchronized: Vec<NodeId>,
}

impl ClockTree {
    pub fn is_synchronized(&self, node: NodeId) -> bool {
        self.root_of.contains_key(&node)
    }

    /// Stable digest of the tree structure and its sources.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.parent.hash(&mut h);
        for (node, src) in &self.roots {
            node.hash(&mut h);
            src.node.hash(&mut h);
            src.quality_rank.hash(&mut h);
            src.frequency_offset_ppb.to_bits().hash(&mut h);
        }
        self.root_of.hash(&mut h);
        self.order.hash(&mut h);
        self.unsynchronized.hash(&mut h);
        h.finish()
    }
}

/// Every node is synchronized from the best source it can reach, lowest
/// `quality_rank` first and lowest node id on ties, along a shortest-hop
/// path. Among equal-length paths the lexicographically smallest node
/// sequence from the source wins. RRHs terminate the clock and never relay it.
pub fn build_sync_tree(topo: &PhysicalTopology, sources: &[ClockSource]) -> Result<ClockTree, SyncError> {
    let mut by_node = BTreeMap::new();
    for s in sources {
        if !topo.contains(s.node) {
            return Err(SyncError::UnknownNode(s.node));
        }
        let node = topo.node(s.node);
        if node.kind == NodeKind::Rrh {
            return Err(SyncError::SourceOnRrh(node.name.clone()));
        }
        if by_node.insert(s.node, *s).is_some() {
            return Err(SyncError::DuplicateSource(node.name.clone()));
        }
    }
    let mut ranked: Vec<ClockSource> = by_node.values().copied().collect();
    ranked.sort_by_key(|s| (s.quality_rank, s.node));

    let mut tree = ClockTree {
        parent: BTreeMap::new(),
        roots: BTreeMap::new(),
        root_of: BTreeMap::new(),
        order: Vec::new(),
        unsynchronized: Vec::new(),
    };
    for src in ranked {
        if tree.root_of.contains_key(&src.node) {
            // a better source already reaches this one
            continue;
        }
        tree.roots.insert(src.node, src);
        tree.root_of.insert(src.node, src.node);
        tree.order.push(src.node);
        let mut queue = VecDeque::from([src.node]);
        while let Some(u) = queue.pop_front() {
            if topo.node(u).kind == NodeKind::Rrh {
                continue;
            }
            for &(v, link) in topo.neighbors(u) {
                if tree.root_of.contains_key(&v) {
                    continue;
                }
                tree.root_of.insert(v, src.node);
                tree.parent.insert(v, (u, link));
                tree.order.push(v);
                queue.push_back(v);
            }
        }
    }
    tree.unsynchronized = topo
        .nodes()
        .iter()
        .map(|n| n.id)
        .filter(|id| !tree.root_of.contains_key(id))
        .collect();
    Ok(tree)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyncStatus {
    pub node: NodeId,
    pub source: NodeId,
    /// RMS jitter accumulated from the source, seconds.
    pub accumulated_jitter: f64,
    pub effective_offset_ppb: f64,
    pub hops_from_source: u32,
}

/// Jitter composes in RMS per hop; a switch parent regenerates the clock and
/// scales incoming jitter by `regen_factor` before the next link adds its own.
pub fn propagate_sync(tree: &ClockTree, topo: &PhysicalTopology, regen_factor: f64) -> BTreeMap<NodeId, SyncStatus> {
    let regen_factor = regen_factor.clamp(0.0, 1.0);
    let mut out: BTreeMap<NodeId, SyncStatus> = BTreeMap::new();
    for &node in &tree.order {
        let root = tree.root_of[&node];
        let offset = tree.roots[&root].frequency_offset_ppb;
        let status = match tree.parent.get(&node) {
            None => SyncStatus {
                node,
                source: root,
                accumulated_jitter: 0.0,
                effective_offset_ppb: offset,
                hops_from_source: 0,
            },
            Some(&(parent, link)) => {
                let up = out[&parent];
                let regen = if topo.node(parent).kind == NodeKind::FhSwitch {
                    regen_factor
                } else {
                    1.0
                };
                let carried = up.accumulated_jitter * regen;
                let own = topo.link(link).params.jitter_std;
                SyncStatus {
                    node,
                    source: root,
                    accumulated_jitter: (carried * carried + own * own).sqrt(),
                    effective_offset_ppb: offset,
                    hops_from_source: up.hops_from_source + 1,
                }
            }
        };
        out.insert(node, status);
    }
    out
}

/// Columns: node_id, source_id, hops, jitter_ns, offset_ppb. Unsynchronized
/// nodes are listed last with source `none` and empty measurements.
pub fn write_sync_csv<W: Write>(
    mut w: W,
    topo: &PhysicalTopology,
    tree: &ClockTree,
    status: &BTreeMap<NodeId, SyncStatus>,
) -> io::Result<()> {
    writeln!(w, "node_id,source_id,hops,jitter_ns,offset_ppb")?;
    for s in status.values() {
        writeln!(
            w,
            "{},{},{},{:.6},{}",
            topo.name(s.node),
            topo.name(s.source),
            s.hops_from_source,
            s.accumulated_jitter * 1e9,
            s.effective_offset_ppb
        )?;
    }
    for &n in &tree.unsynchronized {
        writeln!(w, "{},none,,,", topo.name(n))?;
    }
    Ok(())
}
