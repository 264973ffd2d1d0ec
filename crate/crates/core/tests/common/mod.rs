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

//! Random graphs and control workloads shared by the integration suites.

#![allow(dead_code)]

use fhsim::packet::engine::{SourceSpec, World};
use fhsim::packet::regulator::{ArrivalMode, RegulatorPolicy};
use fhsim::session::{request, Controller, Ledger, SessionRequest, SessionState, NUM_CLASSES};
use fhsim::time::SimTime;
use fhsim::topology::{
    Granularity, LinkId, LinkParams, LogicalPattern, NodeId, NodeKind, PatternShape, PhysicalTopology,
    TopologyBuilder,
};
use rand::seq::SliceRandom;
use rand::Rng;

/// Connected graph of `n` nodes: node 0 is an RRH, node 1 a BBU, the rest
/// mostly switches. Delays are whole microseconds so equal-cost routes are
/// common.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize) -> PhysicalTopology {
    assert!(n >= 2);
    let mut b = TopologyBuilder::new();
    let mut ids = Vec::new();
    for i in 0..n {
        let kind = match i {
            0 => NodeKind::Rrh,
            1 => NodeKind::Bbu,
            _ => match rng.gen_range(0..10) {
                0 => NodeKind::Rrh,
                1 => NodeKind::Bbu,
                _ => NodeKind::FhSwitch,
            },
        };
        ids.push(b.add_node(format!("n{i}"), kind));
    }
    let caps = [1_000_000_000u64, 2_500_000_000, 10_000_000_000];
    let link = |rng: &mut R, b: &mut TopologyBuilder, x: usize, y: usize| {
        let p = LinkParams::fiber(*caps.choose(rng).unwrap(), rng.gen_range(0..4) as f64 * 1e-6);
        b.add_link(ids[x], ids[y], p);
    };
    for i in 1..n {
        let j = rng.gen_range(0..i);
        link(rng, &mut b, i, j);
    }
    for _ in 0..rng.gen_range(0..=n + 2) {
        let x = rng.gen_range(0..n);
        let y = rng.gen_range(0..n);
        if x != y {
            link(rng, &mut b, x, y);
        }
    }
    b.build().expect("connected by construction")
}

/// Per-node header delays of 0 or 100 ns.
pub fn random_header_delays<R: Rng>(rng: &mut R, topo: &PhysicalTopology) -> Vec<SimTime> {
    topo.nodes()
        .iter()
        .map(|_| SimTime::from_nanos(if rng.gen_bool(0.5) { 0 } else { 100 }))
        .collect()
}

pub fn random_fractions<R: Rng>(rng: &mut R) -> [f64; NUM_CLASSES] {
    let mut f = [1.0f64; NUM_CLASSES];
    if rng.gen_bool(0.5) {
        f[0] = [0.3, 0.5, 0.8][rng.gen_range(0..3)];
        f[1] = f[0].max([0.5, 0.9][rng.gen_range(0..2)]);
    }
    f
}

/// Random point-to-point, aggregation or multi-BBU pattern over the nodes
/// of `topo`, or `None` when the graph lacks suitable endpoints.
pub fn random_pattern<R: Rng>(rng: &mut R, topo: &PhysicalTopology) -> Option<LogicalPattern> {
    let rrhs: Vec<NodeId> = topo.nodes_of_kind(NodeKind::Rrh).collect();
    let bbus: Vec<NodeId> = topo.nodes_of_kind(NodeKind::Bbu).collect();
    if rrhs.is_empty() || bbus.is_empty() {
        return None;
    }
    let shape = match rng.gen_range(0..4) {
        0 | 1 => PatternShape::PointToPoint {
            rrh: *rrhs.choose(rng)?,
            bbu: *bbus.choose(rng)?,
        },
        2 => {
            let k = rng.gen_range(1..=rrhs.len());
            PatternShape::AggregationToOneBbu {
                rrhs: rrhs.choose_multiple(rng, k).copied().collect(),
                bbu: *bbus.choose(rng)?,
            }
        }
        _ => {
            let k = rng.gen_range(1..=bbus.len());
            PatternShape::RrhToMultiBbu {
                rrh: *rrhs.choose(rng)?,
                bbus: bbus.choose_multiple(rng, k).copied().collect(),
            }
        }
    };
    Some(LogicalPattern::cell(shape))
}

pub fn random_request<R: Rng>(rng: &mut R, topo: &PhysicalTopology) -> Option<SessionRequest> {
    let pattern = random_pattern(rng, topo)?;
    let peak = [2e8, 1e9, 3e9][rng.gen_range(0..3)];
    let mut r = request(pattern, peak, rng.gen_range(0..3), [50e-6, 1e-3][rng.gen_range(0..2)]);
    if rng.gen_bool(0.3) {
        r.pattern.granularity = Granularity::PerUeFlow(rng.gen_range(0..4));
    }
    Some(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Setup,
    Teardown,
    Migrate,
    Reroute,
}

/// Applies one random control operation and reports which kind it was.
pub fn random_op<R: Rng>(rng: &mut R, ctl: &mut Controller, allow_failures: bool) -> Op {
    let active: Vec<u16> = ctl
        .sessions()
        .values()
        .filter(|s| s.state == fhsim::session::SessionState::Active)
        .map(|s| s.id)
        .collect();
    let roll = rng.gen_range(0..10);
    let topo = ctl.topology().clone();
    if roll < 4 || active.is_empty() {
        if let Some(r) = random_request(rng, &topo) {
            let _ = ctl.setup(r);
        }
        Op::Setup
    } else if roll < 6 {
        let _ = ctl.teardown(*active.choose(rng).unwrap());
        Op::Teardown
    } else if roll < 9 || !allow_failures {
        let id = *active.choose(rng).unwrap();
        let g = ctl.session(id).unwrap().request.pattern.granularity;
        if let Some(mut p) = random_pattern(rng, &topo) {
            p.granularity = g;
            let _ = ctl.migrate(id, p);
        }
        Op::Migrate
    } else {
        let l = LinkId(rng.gen_range(0..topo.links().len()) as u32);
        let _ = ctl.reroute_on_failure(l);
        Op::Reroute
    }
}

/// Same nodes and links as `topo`, with random per-link clock jitter.
pub fn with_random_jitter<R: Rng>(rng: &mut R, topo: &PhysicalTopology) -> PhysicalTopology {
    let mut b = TopologyBuilder::new();
    for n in topo.nodes() {
        b.add_node_with_ports(n.name.clone(), n.kind, n.ports);
    }
    for l in topo.links() {
        let j = rng.gen_range(0..20) as f64 * 1e-9;
        b.add_link(l.a.0, l.b.0, l.params.with_jitter(j));
    }
    b.build().expect("same shape as the input")
}

/// Engine world over the controller's installed tables with one regulated
/// source per active circuit.
pub fn world_from_controller<R: Rng>(rng: &mut R, ctl: &Controller, subframe: SimTime, n_subframes: usize) -> World {
    let mut w = World::new(ctl.topology().clone());
    w.tables = ctl.tables().clone();
    w.config.trace_paths = true;
    for s in ctl.sessions().values().filter(|s| s.state == SessionState::Active) {
        let arrival = if rng.gen_bool(0.5) { ArrivalMode::Fluid } else { ArrivalMode::Burst };
        let policy = RegulatorPolicy {
            max_frame_bytes: [64, 512, 1500, 9000][rng.gen_range(0..4)],
            frame_timeout: [5e-6, 50e-6][rng.gen_range(0..2)],
        };
        let sf = subframe.as_secs();
        for c in &s.circuits {
            let volumes = (0..n_subframes)
                .map(|_| (s.request.peak_rate * sf * rng.gen_range(0.0..1.2)) as u64)
                .collect();
            w.sources.push(SourceSpec {
                flow: c.uid,
                node: c.source,
                label: c.ingress_label,
                latency_class: s.request.latency_class,
                volumes,
                subframe,
                arrival,
                policy,
                window: (SimTime::ZERO, SimTime::MAX),
            });
        }
    }
    w
}

pub fn ledger_safe(l: &Ledger) -> bool {
    l.is_safe() && l.iter().all(|(dl, _, _)| l.residual(dl) >= 0)
}
