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

//! Discrete-event loop.
//!
//! Links are store-and-forward: a packet reaches the far end one
//! serialization time plus the propagation delay after its transmission
//! starts. Switches hold arrivals in a bounded per-input-port buffer served
//! by a serial header processor, then move processed packets to egress queues
//! in round-robin order over input ports. Other node kinds look up and
//! enqueue without delay.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use super::regulator::{ArrivalMode, Regulator, RegulatorPolicy};
use super::switch::{DropCause, ForwardResult, ForwardingTable, Scheduler, SwitchState};
use super::{FhHeader, FhPacket};
use crate::time::{serialization_time, SimTime};
use crate::topology::{DirLink, LinkId, NodeId, NodeKind, PhysicalTopology, Port};

pub const DEFAULT_QUEUE_BYTES: u64 = 256 * 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct NodeConfig {
    pub scheduler: Scheduler,
    /// Seconds per packet, switches only.
    pub header_processing_delay: f64,
    pub queue_bytes_per_class: u64,
    pub input_buffer_bytes: u64,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            scheduler: Scheduler::StrictPriority,
            header_processing_delay: 0.0,
            queue_bytes_per_class: DEFAULT_QUEUE_BYTES,
            input_buffer_bytes: DEFAULT_QUEUE_BYTES,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EngineConfig {
    pub default_node: NodeConfig,
    pub per_node: BTreeMap<NodeId, NodeConfig>,
    /// Record the node sequence of every delivered packet.
    pub trace_paths: bool,
}

impl EngineConfig {
    pub fn node(&self, id: NodeId) -> &NodeConfig {
        self.per_node.get(&id).unwrap_or(&self.default_node)
    }
}

/// A regulated stream entering the network at `node`.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceSpec {
    pub flow: u32,
    pub node: NodeId,
    /// Ingress label, looked up at `(node, Port::LOCAL)`.
    pub label: u16,
    pub latency_class: u8,
    pub volumes: Vec<u64>,
    pub subframe: SimTime,
    pub arrival: ArrivalMode,
    pub policy: RegulatorPolicy,
    /// Bits arriving in `[start, stop)` are taken.
    pub window: (SimTime, SimTime),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ControlAction {
    SetEntry {
        node: NodeId,
        in_port: Port,
        label: u16,
        outputs: Vec<(Port, u16)>,
    },
    /// Removes the entry only while it still maps to `outputs`.
    RemoveEntry {
        node: NodeId,
        in_port: Port,
        label: u16,
        outputs: Vec<(Port, u16)>,
    },
    /// Packets waiting for or in transmission on the link are lost.
    LinkDown(LinkId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimedAction {
    pub at: SimTime,
    pub action: ControlAction,
}

#[derive(Clone, Debug)]
pub struct World {
    pub topology: PhysicalTopology,
    pub tables: BTreeMap<NodeId, ForwardingTable>,
    pub sources: Vec<SourceSpec>,
    pub actions: Vec<TimedAction>,
    pub config: EngineConfig,
}

impl World {
    pub fn new(topology: PhysicalTopology) -> Self {
        World {
            topology,
            tables: BTreeMap::new(),
            sources: Vec::new(),
            actions: Vec::new(),
            config: EngineConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowStats {
    pub latency_class: u8,
    /// Includes replicas made at branch points.
    pub injected: u64,
    pub injected_payload_bits: u64,
    pub delivered: u64,
    pub dropped_unroutable: u64,
    pub dropped_overflow: u64,
    pub in_flight: u64,
    /// Picoseconds from oldest-bit arrival to delivery, in delivery order.
    pub latencies: Vec<u64>,
    pub delivered_source_bits: u64,
    pub delivered_payload_bits: u64,
    pub delivered_wire_bits: u64,
    /// Deliveries whose seq did not advance past the previous one at the same node.
    pub out_of_order: u64,
    pub paths: BTreeSet<Vec<NodeId>>,
    pub peak_regulator_backlog_bits: u64,
}

impl FlowStats {
    pub fn conserved(&self) -> bool {
        self.injected == self.delivered + self.dropped_unroutable + self.dropped_overflow + self.in_flight
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinkStats {
    pub busy: u64,
    pub utilization: f64,
    pub peak_queue_bytes: u64,
    pub packets: u64,
    pub wire_bits: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOutcome {
    pub horizon: SimTime,
    pub flows: BTreeMap<u32, FlowStats>,
    pub links: BTreeMap<DirLink, LinkStats>,
    pub events: u64,
}

impl RunOutcome {
    pub fn total(&self) -> FlowStats {
        let mut t = FlowStats::default();
        for f in self.flows.values() {
            t.injected += f.injected;
            t.injected_payload_bits += f.injected_payload_bits;
            t.delivered += f.delivered;
            t.dropped_unroutable += f.dropped_unroutable;
            t.dropped_overflow += f.dropped_overflow;
            t.in_flight += f.in_flight;
            t.delivered_source_bits += f.delivered_source_bits;
            t.delivered_payload_bits += f.delivered_payload_bits;
            t.delivered_wire_bits += f.delivered_wire_bits;
            t.out_of_order += f.out_of_order;
        }
        t
    }
}

#[derive(Clone, Debug)]
enum Event {
    Action(usize),
    Emit(usize),
    Arrive(NodeId, Port, FhPacket),
    ProcDone(NodeId, Port),
    Transfer(NodeId),
    TxDone(NodeId, Port),
}

struct Entry {
    time: u64,
    seq: u64,
    event: Event,
}

impl PartialEq for Entry {
    fn eq(&self, o: &Self) -> bool {
        (self.time, self.seq) == (o.time, o.seq)
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        (o.time, o.seq).cmp(&(self.time, self.seq))
    }
}

#[derive(Default)]
struct EventQueue {
    heap: BinaryHeap<Entry>,
    seq: u64,
}

impl EventQueue {
    fn push(&mut self, time: SimTime, event: Event) {
        self.heap.push(Entry {
            time: time.0,
            seq: self.seq,
            event,
        });
        self.seq += 1;
    }
}

struct TxPort {
    link: Option<(LinkId, DirLink)>,
    peer: (NodeId, Port),
    capacity: u64,
    propagation: SimTime,
    busy: bool,
    in_service: Option<FhPacket>,
}

#[derive(Default)]
struct InPort {
    waiting: VecDeque<FhPacket>,
    bytes: u64,
    processing: bool,
    ready: VecDeque<FhPacket>,
}

struct NodeState {
    sw: SwitchState,
    is_switch: bool,
    proc_delay: SimTime,
    input_cap: u64,
    inputs: Vec<InPort>,
    tx: Vec<TxPort>,
    rr: usize,
    transfer_pending: bool,
}

struct Sim<'w> {
    topo: &'w PhysicalTopology,
    trace: bool,
    nodes: Vec<NodeState>,
    queue: EventQueue,
    flows: BTreeMap<u32, FlowStats>,
    links: BTreeMap<DirLink, LinkStats>,
    last_seq: BTreeMap<(u32, NodeId), u16>,
    horizon: u64,
}

pub fn run(world: &World, horizon: SimTime) -> RunOutcome {
    let topo = &world.topology;
    let mut nodes = Vec::with_capacity(topo.nodes().len());
    let mut links = BTreeMap::new();
    for node in topo.nodes() {
        let cfg = world.config.node(node.id);
        let mut sw = SwitchState::new(node.ports, cfg.scheduler.clone(), cfg.queue_bytes_per_class);
        if let Some(t) = world.tables.get(&node.id) {
            sw.table = t.clone();
        }
        let tx = (0..node.ports)
            .map(|p| match topo.link_at(node.id, Port(p)) {
                Some(lid) => {
                    let l = topo.link(lid);
                    let dl = l.direction_from(node.id).expect("link touches node");
                    links.insert(dl, LinkStats::default());
                    TxPort {
                        link: Some((lid, dl)),
                        peer: l.other_end(node.id).expect("link touches node"),
                        capacity: l.params.capacity,
                        propagation: SimTime::from_secs(l.params.propagation_delay),
                        busy: false,
                        in_service: None,
                    }
                }
                None => TxPort {
                    link: None,
                    peer: (node.id, Port(p)),
                    capacity: 1,
                    propagation: SimTime::ZERO,
                    busy: false,
                    in_service: None,
                },
            })
            .collect();
        let is_switch = node.kind == NodeKind::FhSwitch;
        nodes.push(NodeState {
            sw,
            is_switch,
            proc_delay: if is_switch {
                SimTime::from_secs(cfg.header_processing_delay)
            } else {
                SimTime::ZERO
            },
            input_cap: cfg.input_buffer_bytes,
            inputs: (0..node.ports).map(|_| InPort::default()).collect(),
            tx,
            rr: 0,
            transfer_pending: false,
        });
    }
    // unused ports start down so that forwarding to them is unroutable
    for (i, n) in nodes.iter_mut().enumerate() {
        for (p, t) in n.tx.iter().enumerate() {
            if t.link.is_none() {
                n.sw.down.insert(Port(p as u16));
            }
        }
        debug_assert_eq!(topo.nodes()[i].id, NodeId(i as u32));
    }

    let mut sim = Sim {
        topo,
        trace: world.config.trace_paths,
        nodes,
        queue: EventQueue::default(),
        flows: BTreeMap::new(),
        links,
        last_seq: BTreeMap::new(),
        horizon: horizon.0,
    };
    for s in &world.sources {
        let f = sim.flows.entry(s.flow).or_default();
        f.latency_class = s.latency_class & 0xF;
    }
    for (i, a) in world.actions.iter().enumerate() {
        sim.queue.push(a.at, Event::Action(i));
    }
    let mut regs: Vec<Regulator<'_>> = world
        .sources
        .iter()
        .map(|s| {
            Regulator::new(
                &s.volumes,
                s.subframe,
                s.arrival,
                s.window,
                s.policy,
                s.label,
                s.latency_class,
            )
        })
        .collect();
    let mut pending: Vec<Option<super::Emission>> = regs.iter_mut().map(|r| r.next()).collect();
    for (i, e) in pending.iter().enumerate() {
        if let Some(e) = e {
            sim.queue.push(e.at, Event::Emit(i));
        }
    }

    let mut events = 0u64;
    while let Some(top) = sim.queue.heap.peek() {
        if top.time > sim.horizon {
            break;
        }
        let Entry { time, event, .. } = sim.queue.heap.pop().expect("peeked");
        let now = SimTime(time);
        events += 1;
        match event {
            Event::Action(i) => sim.apply(&world.actions[i].action, now),
            Event::Emit(i) => {
                let e = pending[i].take().expect("scheduled emission");
                let src = &world.sources[i];
                sim.inject(src, e.header, e.created_at, e.source_bits, now);
                pending[i] = regs[i].next();
                if let Some(n) = &pending[i] {
                    sim.queue.push(n.at, Event::Emit(i));
                }
            }
            Event::Arrive(node, port, pkt) => sim.arrive(node, port, pkt, now),
            Event::ProcDone(node, port) => sim.proc_done(node, port, now),
            Event::Transfer(node) => sim.transfer(node, now),
            Event::TxDone(node, port) => sim.tx_done(node, port, now),
        }
    }

    for (i, r) in regs.iter().enumerate() {
        let f = sim.flows.get_mut(&world.sources[i].flow).expect("flow registered");
        f.peak_regulator_backlog_bits = f.peak_regulator_backlog_bits.max(r.peak_backlog_bits());
    }
    sim.count_in_flight();
    let h = horizon.0.max(1);
    for l in sim.links.values_mut() {
        l.utilization = (l.busy as f64 / h as f64).min(1.0);
    }
    RunOutcome {
        horizon,
        flows: sim.flows,
        links: sim.links,
        events,
    }
}

impl Sim<'_> {
    fn flow(&mut self, flow: u32) -> &mut FlowStats {
        self.flows.entry(flow).or_default()
    }

    fn inject(&mut self, src: &SourceSpec, header: FhHeader, created_at: SimTime, source_bits: u64, now: SimTime) {
        let pkt = FhPacket {
            header,
            flow: src.flow,
            created_at,
            delivered_at: None,
            source_bits,
            trace: self.trace.then(|| vec![src.node]),
        };
        let f = self.flow(src.flow);
        f.injected += 1;
        f.injected_payload_bits += pkt.payload_bits();
        self.dispatch(src.node, Port::LOCAL, pkt, now);
    }

    fn apply(&mut self, action: &ControlAction, now: SimTime) {
        match action {
            ControlAction::SetEntry {
                node,
                in_port,
                label,
                outputs,
            } => self.nodes[node.0 as usize].sw.table.set(*in_port, *label, outputs.clone()),
            ControlAction::RemoveEntry {
                node,
                in_port,
                label,
                outputs,
            } => {
                self.nodes[node.0 as usize].sw.table.remove_if(*in_port, *label, outputs);
            }
            ControlAction::LinkDown(lid) => {
                let l = self.topo.link(*lid);
                for (node, port) in [l.a, l.b] {
                    let n = &mut self.nodes[node.0 as usize];
                    n.sw.down.insert(port);
                    let mut lost = n.sw.outputs.get_mut(&port).map(|q| q.drain()).unwrap_or_default();
                    if let Some(p) = n.tx[port.0 as usize].in_service.take() {
                        lost.push(p);
                    }
                    for p in lost {
                        self.flow(p.flow).dropped_unroutable += 1;
                    }
                }
                let _ = now;
            }
        }
    }

    fn arrive(&mut self, node: NodeId, port: Port, mut pkt: FhPacket, now: SimTime) {
        if let Some(t) = pkt.trace.as_mut() {
            t.push(node);
        }
        let n = &mut self.nodes[node.0 as usize];
        if !n.is_switch {
            self.dispatch(node, port, pkt, now);
            return;
        }
        let inp = &mut n.inputs[port.0 as usize];
        let b = pkt.wire_bytes();
        if inp.bytes + b > n.input_cap {
            self.flow(pkt.flow).dropped_overflow += 1;
            return;
        }
        inp.bytes += b;
        inp.waiting.push_back(pkt);
        if !inp.processing {
            inp.processing = true;
            let d = n.proc_delay;
            self.queue.push(now + d, Event::ProcDone(node, port));
        }
    }

    fn proc_done(&mut self, node: NodeId, port: Port, now: SimTime) {
        let n = &mut self.nodes[node.0 as usize];
        let inp = &mut n.inputs[port.0 as usize];
        let pkt = inp.waiting.pop_front().expect("processor had work");
        inp.ready.push_back(pkt);
        if inp.waiting.is_empty() {
            inp.processing = false;
        } else {
            let d = n.proc_delay;
            self.queue.push(now + d, Event::ProcDone(node, port));
        }
        if !n.transfer_pending {
            n.transfer_pending = true;
            self.queue.push(now, Event::Transfer(node));
        }
    }

    fn transfer(&mut self, node: NodeId, now: SimTime) {
        let ports = self.nodes[node.0 as usize].inputs.len();
        self.nodes[node.0 as usize].transfer_pending = false;
        loop {
            let mut moved = false;
            for k in 0..ports {
                let n = &mut self.nodes[node.0 as usize];
                let p = (n.rr + k) % ports;
                let inp = &mut n.inputs[p];
                if let Some(pkt) = inp.ready.pop_front() {
                    inp.bytes -= pkt.wire_bytes();
                    n.rr = (p + 1) % ports;
                    self.dispatch(node, Port(p as u16), pkt, now);
                    moved = true;
                    break;
                }
            }
            if !moved {
                break;
            }
        }
    }

    fn dispatch(&mut self, node: NodeId, in_port: Port, pkt: FhPacket, now: SimTime) {
        let flow = pkt.flow;
        let bits = pkt.payload_bits();
        let results = self.nodes[node.0 as usize].sw.forward(pkt, in_port);
        if results.len() > 1 {
            let extra = results.len() as u64 - 1;
            let f = self.flow(flow);
            f.injected += extra;
            f.injected_payload_bits += extra * bits;
        }
        for r in results {
            match r {
                ForwardResult::Delivered(mut p) => {
                    p.delivered_at = Some(now);
                    self.deliver(node, p, now);
                }
                ForwardResult::Dropped(p, DropCause::Unroutable) => self.flow(p.flow).dropped_unroutable += 1,
                ForwardResult::Dropped(p, DropCause::Overflow) => self.flow(p.flow).dropped_overflow += 1,
                ForwardResult::Enqueued(port) => {
                    let n = &self.nodes[node.0 as usize];
                    let q = n.sw.outputs[&port].total_bytes();
                    if let Some((_, dl)) = n.tx[port.0 as usize].link {
                        let ls = self.links.get_mut(&dl).expect("link registered");
                        ls.peak_queue_bytes = ls.peak_queue_bytes.max(q);
                    }
                    self.try_start(node, port, now);
                }
            }
        }
    }

    fn deliver(&mut self, node: NodeId, p: FhPacket, now: SimTime) {
        let key = (p.flow, node);
        let seq = p.header.seq;
        let in_order = match self.last_seq.get(&key) {
            None => true,
            Some(&last) => {
                let d = seq.wrapping_sub(last);
                d != 0 && d < 0x8000
            }
        };
        self.last_seq.insert(key, seq);
        let f = self.flows.entry(p.flow).or_default();
        if !in_order {
            f.out_of_order += 1;
        }
        f.delivered += 1;
        f.latencies.push((now - p.created_at).0);
        f.delivered_source_bits += p.source_bits;
        f.delivered_payload_bits += p.payload_bits();
        f.delivered_wire_bits += p.wire_bits();
        if let Some(t) = p.trace {
            f.paths.insert(t);
        }
    }

    fn try_start(&mut self, node: NodeId, port: Port, now: SimTime) {
        let n = &mut self.nodes[node.0 as usize];
        let tx = &mut n.tx[port.0 as usize];
        if tx.busy || n.sw.down.contains(&port) {
            return;
        }
        let Some(q) = n.sw.outputs.get_mut(&port) else {
            return;
        };
        let Some(pkt) = q.pop(&n.sw.scheduler) else {
            return;
        };
        let ser = serialization_time(pkt.wire_bits(), tx.capacity);
        tx.busy = true;
        if let Some((_, dl)) = tx.link {
            let ls = self.links.get_mut(&dl).expect("link registered");
            let end = (now + ser).0.min(self.horizon);
            ls.busy += end.saturating_sub(now.0.min(self.horizon));
            ls.packets += 1;
            ls.wire_bits += pkt.wire_bits();
        }
        tx.in_service = Some(pkt);
        self.queue.push(now + ser, Event::TxDone(node, port));
    }

    fn tx_done(&mut self, node: NodeId, port: Port, now: SimTime) {
        let tx = &mut self.nodes[node.0 as usize].tx[port.0 as usize];
        tx.busy = false;
        if let Some(pkt) = tx.in_service.take() {
            let (peer, pport) = tx.peer;
            let at = now + tx.propagation;
            self.queue.push(at, Event::Arrive(peer, pport, pkt));
        }
        self.try_start(node, port, now);
    }

    fn count_in_flight(&mut self) {
        let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
        for n in &self.nodes {
            for inp in &n.inputs {
                for p in inp.waiting.iter().chain(inp.ready.iter()) {
                    *counts.entry(p.flow).or_default() += 1;
                }
            }
            for q in n.sw.outputs.values() {
                for p in q.iter() {
                    *counts.entry(p.flow).or_default() += 1;
                }
            }
            for t in &n.tx {
                if let Some(p) = &t.in_service {
                    *counts.entry(p.flow).or_default() += 1;
                }
            }
        }
        for e in self.queue.heap.iter() {
            if let Event::Arrive(_, _, p) = &e.event {
                *counts.entry(p.flow).or_default() += 1;
            }
        }
        for (flow, c) in counts {
            self.flow(flow).in_flight += c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{LinkParams, TopologyBuilder};

    const MS: SimTime = SimTime(1_000_000_000);

    fn two_node(cap: u64, prop: f64) -> (PhysicalTopology, NodeId, NodeId) {
        let mut b = TopologyBuilder::new();
        let r = b.add_node("r", NodeKind::Rrh);
        let u = b.add_node("u", NodeKind::Bbu);
        b.add_link(r, u, LinkParams::fiber(cap, prop));
        (b.build().unwrap(), r, u)
    }

    type Entry = (NodeId, Port, u16, Vec<(Port, u16)>);

    fn tables(entries: &[Entry]) -> BTreeMap<NodeId, ForwardingTable> {
        let mut m: BTreeMap<NodeId, ForwardingTable> = BTreeMap::new();
        for (n, p, l, o) in entries {
            m.entry(*n).or_default().set(*p, *l, o.clone());
        }
        m
    }

    fn source(flow: u32, node: NodeId, label: u16, class: u8, volumes: Vec<u64>, bytes: u16, arrival: ArrivalMode) -> SourceSpec {
        SourceSpec {
            flow,
            node,
            label,
            latency_class: class,
            volumes,
            subframe: MS,
            arrival,
            policy: RegulatorPolicy {
                max_frame_bytes: bytes,
                frame_timeout: 1e-3,
            },
            window: (SimTime::ZERO, SimTime::MAX),
        }
    }

    #[test]
    fn single_packet_latency() {
        let (topo, r, u) = two_node(1_000_000_000, 10e-6);
        let mut w = World::new(topo);
        w.tables = tables(&[(r, Port::LOCAL, 0, vec![(Port(0), 5)]), (u, Port(0), 5, vec![(Port::LOCAL, 0)])]);
        w.sources.push(source(1, r, 0, 0, vec![8000, 0], 1000, ArrivalMode::Burst));
        let out = run(&w, SimTime(10 * MS.0));
        let f = &out.flows[&1];
        assert_eq!(f.delivered, 1);
        assert_eq!(f.latencies, vec![18_064_000]);
        assert!(f.conserved());
    }

    #[test]
    fn back_to_back_queueing() {
        let (topo, r, u) = two_node(1_000_000_000, 10e-6);
        let mut w = World::new(topo);
        w.tables = tables(&[(r, Port::LOCAL, 0, vec![(Port(0), 5)]), (u, Port(0), 5, vec![(Port::LOCAL, 0)])]);
        w.sources.push(source(1, r, 0, 0, vec![16000], 1000, ArrivalMode::Burst));
        let out = run(&w, SimTime(10 * MS.0));
        let l = &out.flows[&1].latencies;
        assert_eq!(l.len(), 2);
        assert_eq!(l[1], l[0] + 8_064_000);
    }

    #[test]
    fn empty_world() {
        let (topo, _, _) = two_node(1_000_000_000, 0.0);
        let out = run(&World::new(topo), SimTime(MS.0));
        assert!(out.flows.is_empty());
        assert!(out.links.values().all(|l| l.packets == 0 && l.utilization == 0.0));
        assert_eq!(out.events, 0);
    }

    #[test]
    fn missing_entry_counts_unroutable() {
        let (topo, r, _) = two_node(1_000_000_000, 0.0);
        let mut w = World::new(topo);
        w.tables = tables(&[(r, Port::LOCAL, 0, vec![(Port(0), 5)])]);
        w.sources.push(source(1, r, 0, 0, vec![8000; 3], 1000, ArrivalMode::Fluid));
        let out = run(&w, SimTime(10 * MS.0));
        let f = &out.flows[&1];
        assert_eq!((f.injected, f.delivered, f.dropped_unroutable), (3, 0, 3));
    }

    fn switched(sched: Scheduler) -> World {
        // two sources behind a switch share one 1 Gbps trunk
        let mut b = TopologyBuilder::new();
        let a = b.add_node("a", NodeKind::Rrh);
        let c = b.add_node("c", NodeKind::Rrh);
        let s = b.add_node("s", NodeKind::FhSwitch);
        let u = b.add_node("u", NodeKind::Bbu);
        b.add_link(a, s, LinkParams::fiber(10_000_000_000, 1e-6));
        b.add_link(c, s, LinkParams::fiber(10_000_000_000, 1e-6));
        b.add_link(s, u, LinkParams::fiber(1_000_000_000, 1e-6));
        let topo = b.build().unwrap();
        let sa = topo.link(topo.link_at(a, Port(0)).unwrap()).port_at(s).unwrap();
        let sc = topo.link(topo.link_at(c, Port(0)).unwrap()).port_at(s).unwrap();
        let su = topo.link(topo.link_at(u, Port(0)).unwrap()).port_at(s).unwrap();
        let mut w = World::new(topo);
        w.tables = tables(&[
            (a, Port::LOCAL, 0, vec![(Port(0), 1)]),
            (c, Port::LOCAL, 0, vec![(Port(0), 1)]),
            (s, sa, 1, vec![(su, 1)]),
            (s, sc, 1, vec![(su, 2)]),
            (u, Port(0), 1, vec![(Port::LOCAL, 0)]),
            (u, Port(0), 2, vec![(Port::LOCAL, 0)]),
        ]);
        w.config.default_node.scheduler = sched;
        w.config.default_node.header_processing_delay = 500e-9;
        w.config.trace_paths = true;
        w.sources.push(source(1, a, 0, 3, vec![400_000; 20], 2000, ArrivalMode::Burst));
        w.sources.push(source(2, c, 0, 0, vec![40_000; 20], 200, ArrivalMode::Fluid));
        w
    }

    fn p99(v: &[u64]) -> u64 {
        let mut s = v.to_vec();
        s.sort();
        s[(s.len() * 99).div_ceil(100) - 1]
    }

    #[test]
    fn strict_priority_beats_fifo_for_class_0() {
        let sp = run(&switched(Scheduler::StrictPriority), SimTime(30 * MS.0));
        let fifo = run(&switched(Scheduler::Fifo), SimTime(30 * MS.0));
        assert_eq!(sp.flows[&2].delivered, fifo.flows[&2].delivered);
        assert!(p99(&sp.flows[&2].latencies) < p99(&fifo.flows[&2].latencies));
        for o in [&sp, &fifo] {
            for f in o.flows.values() {
                assert!(f.conserved());
                assert_eq!(f.out_of_order, 0);
            }
        }
    }

    #[test]
    fn paths_are_traced() {
        let out = run(&switched(Scheduler::Fifo), SimTime(30 * MS.0));
        let names: Vec<Vec<u32>> = out.flows[&1].paths.iter().map(|p| p.iter().map(|n| n.0).collect()).collect();
        assert_eq!(names, vec![vec![0, 2, 3]]);
    }

    #[test]
    fn deterministic() {
        let a = run(&switched(Scheduler::WeightedRoundRobin(vec![4, 1, 1, 1])), SimTime(30 * MS.0));
        let b = run(&switched(Scheduler::WeightedRoundRobin(vec![4, 1, 1, 1])), SimTime(30 * MS.0));
        assert_eq!(a, b);
    }

    #[test]
    fn outage_midway_is_conserved() {
        let mut w = switched(Scheduler::StrictPriority);
        let trunk = w.topology.link_at(NodeId(3), Port(0)).unwrap();
        w.actions.push(TimedAction {
            at: SimTime(5 * MS.0 + 123),
            action: ControlAction::LinkDown(trunk),
        });
        let out = run(&w, SimTime(30 * MS.0));
        for f in out.flows.values() {
            assert!(f.conserved());
            assert!(f.dropped_unroutable > 0);
        }
    }

    #[test]
    fn in_flight_counted_at_horizon() {
        let (topo, r, u) = two_node(1_000_000, 0.0);
        let mut w = World::new(topo);
        w.tables = tables(&[(r, Port::LOCAL, 0, vec![(Port(0), 5)]), (u, Port(0), 5, vec![(Port::LOCAL, 0)])]);
        w.sources.push(source(1, r, 0, 0, vec![80_000], 100, ArrivalMode::Burst));
        let out = run(&w, SimTime(MS.0 * 5));
        let f = &out.flows[&1];
        assert_eq!(f.injected, 100);
        assert!(f.in_flight > 0 && f.delivered > 0);
        assert!(f.conserved());
        let busy: Vec<_> = out.links.values().map(|l| l.utilization).collect();
        assert!(busy.contains(&1.0));
    }

    #[test]
    fn multicast_replicas_are_counted() {
        let mut b = TopologyBuilder::new();
        let r = b.add_node("r", NodeKind::Rrh);
        let s = b.add_node("s", NodeKind::FhSwitch);
        let u1 = b.add_node("u1", NodeKind::Bbu);
        let u2 = b.add_node("u2", NodeKind::Bbu);
        b.add_link(r, s, LinkParams::fiber(1_000_000_000, 0.0));
        b.add_link(s, u1, LinkParams::fiber(1_000_000_000, 0.0));
        b.add_link(s, u2, LinkParams::fiber(1_000_000_000, 0.0));
        let topo = b.build().unwrap();
        let mut w = World::new(topo);
        w.tables = tables(&[
            (r, Port::LOCAL, 0, vec![(Port(0), 3)]),
            (s, Port(0), 3, vec![(Port(1), 0), (Port(2), 0)]),
            (u1, Port(0), 0, vec![(Port::LOCAL, 0)]),
            (u2, Port(0), 0, vec![(Port::LOCAL, 0)]),
        ]);
        w.sources.push(source(1, r, 0, 0, vec![8000; 4], 1000, ArrivalMode::Fluid));
        let out = run(&w, SimTime(MS.0 * 10));
        let f = &out.flows[&1];
        assert_eq!((f.injected, f.delivered), (8, 8));
    }
}
