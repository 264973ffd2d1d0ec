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

//! Virtual-circuit control: admission, constrained routing, label
//! installation and circuit lifecycle.
//!
//! A session holds one circuit per payload source. A circuit is a tree rooted
//! at its source; unicast circuits are trees with a single branch. Every
//! control operation works on a copy of the ledger and tables and commits
//! only when it succeeds as a whole.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use thiserror::Error;

use crate::packet::ForwardingTable;
use crate::time::{serialization_time, SimTime};
use crate::topology::{DirLink, Direction, LinkId, LogicalPattern, NodeId, NodeKind, Path, PatternShape, PhysicalTopology, Port};
use crate::traffic::SplitScheme;

pub const NUM_CLASSES: usize = 16;

/// Header bytes added to every frame on the wire.
const HEADER_BYTES: u64 = crate::packet::HEADER_LEN as u64;

#[derive(Clone, Debug, PartialEq)]
pub struct SessionRequest {
    pub pattern: LogicalPattern,
    /// Bits per second, per source.
    pub mean_rate: f64,
    /// Bits per second, per source. This is what gets reserved.
    pub peak_rate: f64,
    pub latency_class: u8,
    /// Seconds.
    pub latency_bound: f64,
    pub scheme: SplitScheme,
    /// Largest payload the source regulator emits.
    pub frame_bytes: u16,
}

impl SessionRequest {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.mean_rate > 0.0) || !self.mean_rate.is_finite() {
            return Err("mean_rate must be positive".into());
        }
        if !(self.peak_rate >= self.mean_rate) || !self.peak_rate.is_finite() {
            return Err("peak_rate must be at least mean_rate".into());
        }
        if self.latency_class as usize >= NUM_CLASSES {
            return Err("latency_class must be 0..=15".into());
        }
        if !(self.latency_bound > 0.0) || !self.latency_bound.is_finite() {
            return Err("latency_bound must be positive".into());
        }
        if self.frame_bytes == 0 {
            return Err("frame_bytes must be at least 1".into());
        }
        Ok(())
    }

    /// Reserved bits per second on each crossed link.
    pub fn reservation(&self) -> u64 {
        self.peak_rate.ceil() as u64
    }

    pub fn bound(&self) -> SimTime {
        SimTime::from_secs(self.latency_bound)
    }

    fn frame_wire_bits(&self) -> u64 {
        (self.frame_bytes as u64 + HEADER_BYTES) * 8
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InfeasibleCause {
    /// No sequence of working links and switches joins the endpoints.
    NoRoute,
    /// Every route that could meet the bound lacks residual capacity.
    NoBandwidth,
    /// Even the fastest route is slower than the bound.
    LatencyUnreachable,
}

impl fmt::Display for InfeasibleCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InfeasibleCause::NoRoute => "no_route",
            InfeasibleCause::NoBandwidth => "no_bandwidth",
            InfeasibleCause::LatencyUnreachable => "latency_unreachable",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("infeasible: {0}")]
    Infeasible(InfeasibleCause),
    #[error("unknown session {0}")]
    UnknownSession(u16),
    #[error("session {0} is not active")]
    NotActive(u16),
    #[error("label space exhausted")]
    LabelsExhausted,
}

/// Per directed link reservations, split by latency class.
///
/// With class fractions `f`, every class `c` keeps the reservations of
/// classes `0..=c` at or below `f[c]` of the capacity. All fractions default
/// to 1, which leaves only the capacity limit.
#[derive(Clone, Debug, PartialEq)]
pub struct Ledger {
    capacity: BTreeMap<DirLink, u64>,
    reserved: BTreeMap<DirLink, [u64; NUM_CLASSES]>,
    fractions: [f64; NUM_CLASSES],
}

impl Ledger {
    pub fn new(topo: &PhysicalTopology) -> Self {
        Self::with_fractions(topo, [1.0; NUM_CLASSES])
    }

    pub fn with_fractions(topo: &PhysicalTopology, fractions: [f64; NUM_CLASSES]) -> Self {
        let mut capacity = BTreeMap::new();
        for l in topo.links() {
            for dir in [Direction::AToB, Direction::BToA] {
                capacity.insert(DirLink { link: l.id, dir }, l.params.capacity);
            }
        }
        let reserved = capacity.keys().map(|&d| (d, [0; NUM_CLASSES])).collect();
        Ledger {
            capacity,
            reserved,
            fractions,
        }
    }

    pub fn fractions(&self) -> &[f64; NUM_CLASSES] {
        &self.fractions
    }

    pub fn capacity(&self, dl: DirLink) -> u64 {
        self.capacity.get(&dl).copied().unwrap_or(0)
    }

    pub fn reserved(&self, dl: DirLink) -> u64 {
        self.reserved.get(&dl).map(|r| r.iter().sum()).unwrap_or(0)
    }

    pub fn reserved_class(&self, dl: DirLink, class: u8) -> u64 {
        self.reserved.get(&dl).map(|r| r[class as usize]).unwrap_or(0)
    }

    /// May go negative only if the ledger was corrupted; see [`Ledger::is_safe`].
    pub fn residual(&self, dl: DirLink) -> i128 {
        self.capacity(dl) as i128 - self.reserved(dl) as i128
    }

    fn class_limit(&self, dl: DirLink, c: usize) -> u64 {
        (self.fractions[c].clamp(0.0, 1.0) * self.capacity(dl) as f64).floor() as u64
    }

    fn fits(&self, dl: DirLink, r: &[u64; NUM_CLASSES]) -> bool {
        let cap = self.capacity(dl);
        let mut cum = 0u64;
        for (c, v) in r.iter().enumerate() {
            cum += v;
            if cum > 0 && cum > self.class_limit(dl, c) {
                return false;
            }
        }
        cum <= cap
    }

    pub fn admits(&self, dl: DirLink, class: u8, amount: u64) -> bool {
        let Some(r) = self.reserved.get(&dl) else {
            return false;
        };
        let mut r = *r;
        r[class as usize] += amount;
        // only the classes at or after the new one see a larger sum
        let mut cum: u64 = r[..class as usize].iter().sum();
        for (c, v) in r.iter().enumerate().skip(class as usize) {
            cum += v;
            if cum > self.class_limit(dl, c) {
                return false;
            }
        }
        cum <= self.capacity(dl)
    }

    pub fn debit(&mut self, dl: DirLink, class: u8, amount: u64) -> bool {
        if !self.admits(dl, class, amount) {
            return false;
        }
        self.reserved.get_mut(&dl).expect("admitted link exists")[class as usize] += amount;
        true
    }

    pub fn credit(&mut self, dl: DirLink, class: u8, amount: u64) {
        let r = &mut self.reserved.get_mut(&dl).expect("credited link exists")[class as usize];
        *r = r.checked_sub(amount).expect("credit exceeds reservation");
    }

    /// Residual non-negative and every class limit respected on every link.
    pub fn is_safe(&self) -> bool {
        self.reserved.iter().all(|(dl, r)| self.fits(*dl, r))
    }

    pub fn iter(&self) -> impl Iterator<Item = (DirLink, u64, u64)> + '_ {
        self.capacity.iter().map(|(&dl, &c)| (dl, c, self.reserved(dl)))
    }
}

/// Inputs shared by all path computations.
#[derive(Clone, Copy, Debug)]
pub struct PathContext<'a> {
    pub topo: &'a PhysicalTopology,
    /// Header processing delay per node id; applied at intermediate switches.
    pub header_delay: &'a [SimTime],
    pub failed: &'a BTreeSet<LinkId>,
}

impl PathContext<'_> {
    fn delay_at(&self, n: NodeId) -> SimTime {
        self.header_delay.get(n.0 as usize).copied().unwrap_or(SimTime::ZERO)
    }

    fn hop_cost(&self, l: LinkId, frame_wire_bits: u64) -> u64 {
        let p = &self.topo.link(l).params;
        SimTime::from_secs(p.propagation_delay).0 + serialization_time(frame_wire_bits, p.capacity).0
    }
}

/// Fixed latency of a route: propagation plus one max-size frame
/// serialization per link, plus header processing at each intermediate node.
pub fn fixed_latency(ctx: &PathContext<'_>, path: &Path, frame_wire_bits: u64) -> SimTime {
    let links: u64 = path.links.iter().map(|&l| ctx.hop_cost(l, frame_wire_bits)).sum();
    let proc: u64 = path.nodes[1..path.nodes.len().saturating_sub(1)]
        .iter()
        .map(|&n| ctx.delay_at(n).0)
        .sum();
    SimTime(links + proc)
}

type Label = (u64, Vec<NodeId>, Vec<LinkId>);

/// Least-cost routes from `src` to every reachable node, ties broken by the
/// node sequence and then the link sequence. Only switches relay.
fn shortest_tree(
    ctx: &PathContext<'_>,
    src: NodeId,
    frame_wire_bits: u64,
    usable: &dyn Fn(DirLink) -> bool,
) -> BTreeMap<NodeId, Label> {
    let mut settled: BTreeMap<NodeId, Label> = BTreeMap::new();
    let mut heap: BinaryHeap<Reverse<Label>> = BinaryHeap::new();
    heap.push(Reverse((0, vec![src], Vec::new())));
    while let Some(Reverse((cost, nodes, links))) = heap.pop() {
        let u = *nodes.last().expect("non-empty");
        if settled.contains_key(&u) {
            continue;
        }
        settled.insert(u, (cost, nodes.clone(), links.clone()));
        if u != src && ctx.topo.node(u).kind != NodeKind::FhSwitch {
            continue;
        }
        let relay = if u == src { 0 } else { ctx.delay_at(u).0 };
        for &(v, l) in ctx.topo.neighbors(u) {
            if settled.contains_key(&v) || ctx.failed.contains(&l) {
                continue;
            }
            let dl = ctx.topo.link(l).direction_from(u).expect("adjacent");
            if !usable(dl) {
                continue;
            }
            let mut n2 = nodes.clone();
            n2.push(v);
            let mut l2 = links.clone();
            l2.push(l);
            heap.push(Reverse((cost + relay + ctx.hop_cost(l, frame_wire_bits), n2, l2)));
        }
    }
    settled
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PathChoice {
    pub path: Path,
    pub fixed_latency: SimTime,
    /// Queueing allowance per link: `(bound - fixed) / hops`.
    pub per_hop_budget: SimTime,
}

fn choice(bound: SimTime, (cost, nodes, links): Label) -> PathChoice {
    let hops = links.len().max(1) as u64;
    PathChoice {
        path: Path { nodes, links },
        fixed_latency: SimTime(cost),
        per_hop_budget: SimTime((bound.0 - cost) / hops),
    }
}

fn classify(
    ctx: &PathContext<'_>,
    src: NodeId,
    dsts: &[NodeId],
    request: &SessionRequest,
    ledger: &Ledger,
) -> Result<Vec<PathChoice>, InfeasibleCause> {
    let bits = request.frame_wire_bits();
    let bound = request.bound();
    let amount = request.reservation();
    let class = request.latency_class;
    let admitted = shortest_tree(ctx, src, bits, &|dl| ledger.admits(dl, class, amount));
    let mut out = Vec::with_capacity(dsts.len());
    let mut structural: Option<BTreeMap<NodeId, Label>> = None;
    for &d in dsts {
        match admitted.get(&d) {
            Some(l) if l.0 <= bound.0 => out.push(choice(bound, l.clone())),
            _ => {
                let s = structural.get_or_insert_with(|| shortest_tree(ctx, src, bits, &|_| true));
                return Err(match s.get(&d) {
                    None => InfeasibleCause::NoRoute,
                    Some(l) if l.0 > bound.0 => InfeasibleCause::LatencyUnreachable,
                    Some(_) => InfeasibleCause::NoBandwidth,
                });
            }
        }
    }
    Ok(out)
}

/// Fastest route from `src` to `dst` whose every link admits the request's
/// peak rate and whose fixed latency meets its bound.
pub fn compute_path(
    ctx: &PathContext<'_>,
    src: NodeId,
    dst: NodeId,
    request: &SessionRequest,
    ledger: &Ledger,
) -> Result<PathChoice, InfeasibleCause> {
    if src == dst {
        return Err(InfeasibleCause::NoRoute);
    }
    classify(ctx, src, &[dst], request, ledger).map(|mut v| v.remove(0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SessionState {
    Active,
    TornDown,
}

/// One installed forwarding entry.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HopEntry {
    pub node: NodeId,
    pub in_port: Port,
    pub label_in: u16,
    pub outputs: Vec<(Port, u16)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Circuit {
    /// Engine flow id, unique for the controller's lifetime.
    pub uid: u32,
    pub source: NodeId,
    pub ingress_label: u16,
    /// One route per destination, sharing prefixes.
    pub branches: Vec<PathChoice>,
    pub entries: Vec<HopEntry>,
    pub debits: BTreeSet<DirLink>,
}

impl Circuit {
    pub fn destinations(&self) -> Vec<NodeId> {
        self.branches.iter().map(|b| *b.path.nodes.last().expect("non-empty")).collect()
    }

    fn same_route(&self, branches: &[PathChoice]) -> bool {
        self.branches.len() == branches.len() && self.branches.iter().zip(branches).all(|(a, b)| a.path == b.path)
    }

    pub fn uses_link(&self, l: LinkId) -> bool {
        self.debits.iter().any(|d| d.link == l)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    pub id: u16,
    pub request: SessionRequest,
    pub circuits: Vec<Circuit>,
    pub state: SessionState,
}

impl Session {
    /// Sum of reservations per directed link.
    pub fn debits(&self) -> BTreeMap<DirLink, u64> {
        let mut m = BTreeMap::new();
        for c in &self.circuits {
            for &d in &c.debits {
                *m.entry(d).or_insert(0) += self.request.reservation();
            }
        }
        m
    }

    pub fn entries(&self) -> Vec<HopEntry> {
        let mut v: Vec<HopEntry> = self.circuits.iter().flat_map(|c| c.entries.iter().cloned()).collect();
        v.sort();
        v
    }

    pub fn uses_link(&self, l: LinkId) -> bool {
        self.circuits.iter().any(|c| c.uses_link(l))
    }
}

/// Route text: nodes joined by '>', tree branches by '|', circuits by ';'.
pub fn describe_route(topo: &PhysicalTopology, circuits: &[Circuit]) -> String {
    circuits
        .iter()
        .map(|c| {
            c.branches
                .iter()
                .map(|b| b.path.nodes.iter().map(|&n| topo.name(n)).collect::<Vec<_>>().join(">"))
                .collect::<Vec<_>>()
                .join("|")
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// Table edits produced by one control operation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TableChanges {
    pub set: Vec<HopEntry>,
    pub remove: Vec<HopEntry>,
}

impl TableChanges {
    pub fn is_empty(&self) -> bool {
        self.set.is_empty() && self.remove.is_empty()
    }
}

/// Entries added or changed in `after`, and entries gone from it.
pub fn diff_tables(before: &BTreeMap<NodeId, ForwardingTable>, after: &BTreeMap<NodeId, ForwardingTable>) -> TableChanges {
    let mut ch = TableChanges::default();
    let empty = ForwardingTable::new();
    let nodes: BTreeSet<NodeId> = before.keys().chain(after.keys()).copied().collect();
    for n in nodes {
        let b = before.get(&n).unwrap_or(&empty);
        let a = after.get(&n).unwrap_or(&empty);
        for (&(p, l), o) in a.iter() {
            if b.lookup(p, l) != Some(o.as_slice()) {
                ch.set.push(HopEntry {
                    node: n,
                    in_port: p,
                    label_in: l,
                    outputs: o.clone(),
                });
            }
        }
        for (&(p, l), o) in b.iter() {
            if !a.contains(p, l) {
                ch.remove.push(HopEntry {
                    node: n,
                    in_port: p,
                    label_in: l,
                    outputs: o.clone(),
                });
            }
        }
    }
    ch
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ControlLogEntry {
    pub time: SimTime,
    pub op: &'static str,
    pub session_id: Option<u16>,
    pub outcome: String,
    pub path: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RerouteOutcome {
    Rerouted,
    Victim(InfeasibleCause),
}

/// What a migration changed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Migration {
    /// Entries to install before traffic moves.
    pub make: TableChanges,
    /// Entries to drop once the old routes have drained.
    pub brk: TableChanges,
    /// Circuits no longer carrying traffic.
    pub retired: Vec<u32>,
    /// Circuits created by the migration.
    pub started: Vec<u32>,
}

/// Working copy for an all-or-nothing operation.
struct Draft {
    ledger: Ledger,
    tables: BTreeMap<NodeId, ForwardingTable>,
}

/// Centralized controller owning the authoritative ledger and tables.
#[derive(Clone, Debug)]
pub struct Controller {
    topo: PhysicalTopology,
    header_delay: Vec<SimTime>,
    ledger: Ledger,
    tables: BTreeMap<NodeId, ForwardingTable>,
    sessions: BTreeMap<u16, Session>,
    failed: BTreeSet<LinkId>,
    next_id: u16,
    next_uid: u32,
    now: SimTime,
    log: Vec<ControlLogEntry>,
}

impl Controller {
    pub fn new(topo: PhysicalTopology, header_delay: Vec<SimTime>, ledger: Ledger) -> Self {
        Controller {
            topo,
            header_delay,
            ledger,
            tables: BTreeMap::new(),
            sessions: BTreeMap::new(),
            failed: BTreeSet::new(),
            next_id: 1,
            next_uid: 1,
            now: SimTime::ZERO,
            log: Vec::new(),
        }
    }

    pub fn topology(&self) -> &PhysicalTopology {
        &self.topo
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn tables(&self) -> &BTreeMap<NodeId, ForwardingTable> {
        &self.tables
    }

    pub fn sessions(&self) -> &BTreeMap<u16, Session> {
        &self.sessions
    }

    pub fn session(&self, id: u16) -> Option<&Session> {
        self.sessions.get(&id)
    }

    pub fn failed_links(&self) -> &BTreeSet<LinkId> {
        &self.failed
    }

    pub fn log(&self) -> &[ControlLogEntry] {
        &self.log
    }

    /// Timestamp attached to subsequent log entries.
    pub fn set_time(&mut self, t: SimTime) {
        self.now = t;
    }

    pub fn context(&self) -> PathContext<'_> {
        PathContext {
            topo: &self.topo,
            header_delay: &self.header_delay,
            failed: &self.failed,
        }
    }

    fn record(&mut self, op: &'static str, session_id: Option<u16>, outcome: String, path: String) {
        self.log.push(ControlLogEntry {
            time: self.now,
            op,
            session_id,
            outcome,
            path,
        });
    }

    fn draft(&self) -> Draft {
        Draft {
            ledger: self.ledger.clone(),
            tables: self.tables.clone(),
        }
    }

    fn commit(&mut self, d: Draft) -> TableChanges {
        debug_assert!(d.ledger.is_safe());
        let ch = diff_tables(&self.tables, &d.tables);
        self.ledger = d.ledger;
        self.tables = d.tables;
        ch
    }

    /// Source and destination sets, one entry per circuit.
    fn plan(pattern: &LogicalPattern) -> Vec<(NodeId, Vec<NodeId>)> {
        match &pattern.shape {
            PatternShape::PointToPoint { rrh, bbu } => vec![(*rrh, vec![*bbu])],
            PatternShape::AggregationToOneBbu { rrhs, bbu } => rrhs.iter().map(|&r| (r, vec![*bbu])).collect(),
            PatternShape::RrhToMultiBbu { rrh, bbus } => {
                let mut b = bbus.clone();
                b.sort();
                vec![(*rrh, b)]
            }
            PatternShape::BbuToBbu { src_bbu, dst_bbu } => vec![(*src_bbu, vec![*dst_bbu])],
        }
    }

    fn check(&self, request: &SessionRequest) -> Result<(), SessionError> {
        request.validate().map_err(SessionError::Invalid)?;
        request.pattern.validate(&self.topo).map_err(SessionError::Invalid)
    }

    /// Routes, reserves and installs one circuit into the draft.
    fn build_circuit(
        &self,
        d: &mut Draft,
        request: &SessionRequest,
        src: NodeId,
        dsts: &[NodeId],
        ingress: Option<u16>,
        uid: u32,
    ) -> Result<Circuit, SessionError> {
        let ctx = self.context();
        let branches = classify(&ctx, src, dsts, request, &d.ledger).map_err(SessionError::Infeasible)?;
        self.install(d, request, src, branches, ingress, uid)
    }

    fn install(
        &self,
        d: &mut Draft,
        request: &SessionRequest,
        src: NodeId,
        branches: Vec<PathChoice>,
        ingress: Option<u16>,
        uid: u32,
    ) -> Result<Circuit, SessionError> {
        // tree edges: node -> sorted children with the link used
        let mut children: BTreeMap<NodeId, BTreeSet<(NodeId, LinkId)>> = BTreeMap::new();
        let mut debits = BTreeSet::new();
        let dsts: BTreeSet<NodeId> = branches.iter().map(|b| *b.path.nodes.last().expect("non-empty")).collect();
        for b in &branches {
            for (i, &l) in b.path.links.iter().enumerate() {
                let u = b.path.nodes[i];
                children.entry(u).or_default().insert((b.path.nodes[i + 1], l));
                debits.insert(self.topo.link(l).direction_from(u).expect("on path"));
            }
        }
        for &dl in &debits {
            if !d.ledger.debit(dl, request.latency_class, request.reservation()) {
                return Err(SessionError::Infeasible(InfeasibleCause::NoBandwidth));
            }
        }
        let label0 = match ingress {
            Some(l) => l,
            None => d
                .tables
                .entry(src)
                .or_default()
                .smallest_free_label(Port::LOCAL)
                .ok_or(SessionError::LabelsExhausted)?,
        };
        let mut entries = Vec::new();
        let mut stack = vec![(src, Port::LOCAL, label0)];
        while let Some((u, in_port, label_in)) = stack.pop() {
            // claim the key before allocating downstream labels
            d.tables.entry(u).or_default().set(in_port, label_in, Vec::new());
            let mut outputs = Vec::new();
            let mut next = Vec::new();
            for &(v, l) in children.get(&u).into_iter().flatten() {
                let link = self.topo.link(l);
                let out_port = link.port_at(u).expect("on path");
                let v_port = link.port_at(v).expect("on path");
                let t = d.tables.entry(v).or_default();
                let lbl = t.smallest_free_label(v_port).ok_or(SessionError::LabelsExhausted)?;
                t.set(v_port, lbl, Vec::new());
                outputs.push((out_port, lbl));
                next.push((v, v_port, lbl));
            }
            if dsts.contains(&u) {
                outputs.push((Port::LOCAL, 0));
            }
            d.tables.entry(u).or_default().set(in_port, label_in, outputs.clone());
            entries.push(HopEntry {
                node: u,
                in_port,
                label_in,
                outputs,
            });
            stack.extend(next.into_iter().rev());
        }
        entries.sort();
        Ok(Circuit {
            uid,
            source: src,
            ingress_label: label0,
            branches,
            entries,
            debits,
        })
    }

    fn release(&self, d: &mut Draft, request: &SessionRequest, c: &Circuit) {
        for &dl in &c.debits {
            d.ledger.credit(dl, request.latency_class, request.reservation());
        }
        for e in &c.entries {
            if let Some(t) = d.tables.get_mut(&e.node) {
                t.remove_if(e.in_port, e.label_in, &e.outputs);
            }
        }
    }

    /// Admits and installs `request`, or changes nothing.
    pub fn setup(&mut self, request: SessionRequest) -> Result<(u16, TableChanges), SessionError> {
        let res = self.try_setup(&request);
        match res {
            Ok((session, d)) => {
                let id = session.id;
                let path = describe_route(&self.topo, &session.circuits);
                self.next_id = self.next_id.wrapping_add(1).max(1);
                self.next_uid = session.circuits.iter().map(|c| c.uid + 1).max().unwrap_or(self.next_uid);
                self.sessions.insert(id, session);
                let ch = self.commit(d);
                self.record("setup", Some(id), "ok".into(), path);
                Ok((id, ch))
            }
            Err(e) => {
                self.record("setup", None, outcome_of(&e), String::new());
                Err(e)
            }
        }
    }

    fn try_setup(&self, request: &SessionRequest) -> Result<(Session, Draft), SessionError> {
        self.check(request)?;
        if self.sessions.contains_key(&self.next_id) {
            return Err(SessionError::LabelsExhausted);
        }
        let mut d = self.draft();
        let mut circuits = Vec::new();
        for (uid, (src, dsts)) in (self.next_uid..).zip(Self::plan(&request.pattern)) {
            circuits.push(self.build_circuit(&mut d, request, src, &dsts, None, uid)?);
        }
        Ok((
            Session {
                id: self.next_id,
                request: request.clone(),
                circuits,
                state: SessionState::Active,
            },
            d,
        ))
    }

    /// Removes every entry and reservation of the session. A torn-down
    /// session yields no changes.
    pub fn teardown(&mut self, id: u16) -> Result<TableChanges, SessionError> {
        let s = self.sessions.get(&id).ok_or(SessionError::UnknownSession(id))?.clone();
        if s.state == SessionState::TornDown {
            self.record("teardown", Some(id), "noop".into(), String::new());
            return Ok(TableChanges::default());
        }
        let mut d = self.draft();
        for c in &s.circuits {
            self.release(&mut d, &s.request, c);
        }
        let path = describe_route(&self.topo, &s.circuits);
        self.sessions.get_mut(&id).expect("present").state = SessionState::TornDown;
        let ch = self.commit(d);
        self.record("teardown", Some(id), "ok".into(), path);
        Ok(ch)
    }

    /// Marks `link` failed and moves every active session that crosses it.
    /// Sessions with no surviving route are torn down and reported as victims.
    pub fn reroute_on_failure(&mut self, link: LinkId) -> (Vec<(u16, RerouteOutcome)>, TableChanges) {
        self.failed.insert(link);
        let before = self.tables.clone();
        let affected: Vec<u16> = self
            .sessions
            .values()
            .filter(|s| s.state == SessionState::Active && s.uses_link(link))
            .map(|s| s.id)
            .collect();
        let mut outcomes = Vec::new();
        for id in affected {
            let s = self.sessions[&id].clone();
            let mut d = self.draft();
            let mut circuits = Vec::with_capacity(s.circuits.len());
            let mut victim = None;
            for c in &s.circuits {
                if !c.uses_link(link) {
                    circuits.push(c.clone());
                    continue;
                }
                self.release(&mut d, &s.request, c);
                let dsts = c.destinations();
                match self.build_circuit(&mut d, &s.request, c.source, &dsts, Some(c.ingress_label), c.uid) {
                    Ok(nc) => circuits.push(nc),
                    Err(SessionError::Infeasible(cause)) => {
                        victim = Some(cause);
                        break;
                    }
                    Err(_) => {
                        victim = Some(InfeasibleCause::NoRoute);
                        break;
                    }
                }
            }
            match victim {
                None => {
                    let path = describe_route(&self.topo, &circuits);
                    self.sessions.get_mut(&id).expect("present").circuits = circuits;
                    self.commit(d);
                    self.record("reroute", Some(id), "rerouted".into(), path);
                    outcomes.push((id, RerouteOutcome::Rerouted));
                }
                Some(cause) => {
                    let mut d = self.draft();
                    for c in &s.circuits {
                        self.release(&mut d, &s.request, c);
                    }
                    self.sessions.get_mut(&id).expect("present").state = SessionState::TornDown;
                    self.commit(d);
                    self.record("reroute", Some(id), format!("victim:{cause}"), String::new());
                    outcomes.push((id, RerouteOutcome::Victim(cause)));
                }
            }
        }
        let ch = diff_tables(&before, &self.tables);
        (outcomes, ch)
    }

    /// Make-before-break move of an active session onto `pattern`.
    ///
    /// Circuits whose source, destinations and route all stay the same keep
    /// their labels and entries. New routes are sized as if the old ones were
    /// gone, so while both coexist a shared link carries the larger of the
    /// two reservations rather than their sum.
    pub fn migrate(&mut self, id: u16, pattern: LogicalPattern) -> Result<Migration, SessionError> {
        let res = self.try_migrate(id, pattern);
        match res {
            Ok((m, circuits, d)) => {
                let path = describe_route(&self.topo, &circuits);
                self.next_uid = circuits.iter().map(|c| c.uid + 1).max().unwrap_or(1).max(self.next_uid);
                let outcome = if m.make.is_empty() && m.brk.is_empty() { "unchanged" } else { "ok" };
                let s = self.sessions.get_mut(&id).expect("present");
                s.circuits = circuits;
                s.request.pattern = d.pattern;
                self.ledger = d.ledger;
                self.tables = d.tables;
                self.record("migrate", Some(id), outcome.into(), path);
                Ok(m)
            }
            Err(e) => {
                self.record("migrate", Some(id), outcome_of(&e), String::new());
                Err(e)
            }
        }
    }

    fn try_migrate(&self, id: u16, pattern: LogicalPattern) -> Result<(Migration, Vec<Circuit>, MigrationDraft), SessionError> {
        let s = self.sessions.get(&id).ok_or(SessionError::UnknownSession(id))?;
        if s.state != SessionState::Active {
            return Err(SessionError::NotActive(id));
        }
        if s.request.pattern.granularity != pattern.granularity {
            return Err(SessionError::Invalid("migration must keep the granularity".into()));
        }
        let mut request = s.request.clone();
        request.pattern = pattern.clone();
        self.check(&request)?;
        if pattern == s.request.pattern {
            return Ok((
                Migration::default(),
                s.circuits.clone(),
                MigrationDraft {
                    ledger: self.ledger.clone(),
                    tables: self.tables.clone(),
                    pattern,
                },
            ));
        }
        let mut d = self.draft();
        for c in &s.circuits {
            for &dl in &c.debits {
                d.ledger.credit(dl, request.latency_class, request.reservation());
            }
        }
        let ctx = self.context();
        let mut uid = self.next_uid;
        let mut kept: BTreeSet<u32> = BTreeSet::new();
        let mut circuits = Vec::new();
        let mut started = Vec::new();
        for (src, dsts) in Self::plan(&pattern) {
            let branches = classify(&ctx, src, &dsts, &request, &d.ledger).map_err(SessionError::Infeasible)?;
            let old = s
                .circuits
                .iter()
                .find(|c| !kept.contains(&c.uid) && c.source == src && c.same_route(&branches));
            match old {
                Some(c) => {
                    for &dl in &c.debits {
                        if !d.ledger.debit(dl, request.latency_class, request.reservation()) {
                            return Err(SessionError::Infeasible(InfeasibleCause::NoBandwidth));
                        }
                    }
                    kept.insert(c.uid);
                    circuits.push(c.clone());
                }
                None => {
                    circuits.push(self.install(&mut d, &request, src, branches, None, uid)?);
                    started.push(uid);
                    uid += 1;
                }
            }
        }
        // both generations coexist until the break phase; shared links hold
        // the larger of the two reservations
        let mut coexist = self.ledger.clone();
        let count = |cs: &mut dyn Iterator<Item = &Circuit>| {
            let mut m: BTreeMap<DirLink, u64> = BTreeMap::new();
            for c in cs {
                for &dl in &c.debits {
                    *m.entry(dl).or_insert(0) += 1;
                }
            }
            m
        };
        let old_n = count(&mut s.circuits.iter().filter(|c| !kept.contains(&c.uid)));
        let new_n = count(&mut circuits.iter().filter(|c| started.contains(&c.uid)));
        for (dl, n) in new_n {
            let o = old_n.get(&dl).copied().unwrap_or(0);
            if n > o && !coexist.debit(dl, request.latency_class, (n - o) * request.reservation()) {
                return Err(SessionError::Infeasible(InfeasibleCause::NoBandwidth));
            }
        }
        debug_assert!(coexist.is_safe());
        let make = diff_tables(&self.tables, &d.tables);
        let after_make = d.tables.clone();
        for c in s.circuits.iter().filter(|c| !kept.contains(&c.uid)) {
            for e in &c.entries {
                if let Some(t) = d.tables.get_mut(&e.node) {
                    t.remove_if(e.in_port, e.label_in, &e.outputs);
                }
            }
        }
        let brk = diff_tables(&after_make, &d.tables);
        let retired = s.circuits.iter().filter(|c| !kept.contains(&c.uid)).map(|c| c.uid).collect();
        Ok((
            Migration {
                make,
                brk,
                retired,
                started,
            },
            circuits,
            MigrationDraft {
                ledger: d.ledger,
                tables: d.tables,
                pattern,
            },
        ))
    }
}

struct MigrationDraft {
    ledger: Ledger,
    tables: BTreeMap<NodeId, ForwardingTable>,
    pattern: LogicalPattern,
}

fn outcome_of(e: &SessionError) -> String {
    match e {
        SessionError::Infeasible(c) => format!("infeasible:{c}"),
        SessionError::Invalid(_) => "invalid".into(),
        SessionError::UnknownSession(_) => "unknown".into(),
        SessionError::NotActive(_) => "inactive".into(),
        SessionError::LabelsExhausted => "labels_exhausted".into(),
    }
}

/// Convenience for building requests in tests and scenarios.
pub fn request(pattern: LogicalPattern, peak_rate: f64, latency_class: u8, latency_bound: f64) -> SessionRequest {
    SessionRequest {
        pattern,
        mean_rate: peak_rate,
        peak_rate,
        latency_class,
        latency_bound,
        scheme: SplitScheme::ModulationBits,
        frame_bytes: 1000,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_topology, Attachment, Granularity, LinkParams, TopologyBuilder, TopologySpec};
    use proptest::prelude::*;

    const G: u64 = 1_000_000_000;

    fn star(rrhs: usize, bbus: usize, cap: u64) -> PhysicalTopology {
        let mut leaves = vec![(NodeKind::Rrh, LinkParams::fiber(cap, 1e-6)); rrhs];
        leaves.extend(vec![(NodeKind::Bbu, LinkParams::fiber(cap, 1e-6)); bbus]);
        build_topology(&TopologySpec::Star { leaves }).unwrap()
    }

    fn ring(n: usize) -> PhysicalTopology {
        let mut attachments: Vec<Attachment> = (0..n)
            .map(|i| Attachment {
                switch: i,
                kind: NodeKind::Rrh,
                link: LinkParams::fiber(10 * G, 1e-6),
            })
            .collect();
        attachments.push(Attachment {
            switch: 0,
            kind: NodeKind::Bbu,
            link: LinkParams::fiber(10 * G, 1e-6),
        });
        build_topology(&TopologySpec::Ring {
            n_switches: n,
            trunk: LinkParams::fiber(10 * G, 5e-6),
            attachments,
        })
        .unwrap()
    }

    fn id(t: &PhysicalTopology, n: &str) -> NodeId {
        t.node_by_name(n).unwrap()
    }

    fn ctl(t: PhysicalTopology) -> Controller {
        let n = t.nodes().len();
        let l = Ledger::new(&t);
        Controller::new(t, vec![SimTime::from_nanos(500); n], l)
    }

    fn p2p(t: &PhysicalTopology, r: &str, b: &str, rate: f64) -> SessionRequest {
        request(
            LogicalPattern::cell(PatternShape::PointToPoint {
                rrh: id(t, r),
                bbu: id(t, b),
            }),
            rate,
            0,
            1e-3,
        )
    }

    #[test]
    fn direct_link_is_chosen() {
        let mut b = TopologyBuilder::new();
        let r = b.add_node("r", NodeKind::Rrh);
        let u = b.add_node("u", NodeKind::Bbu);
        b.add_link(r, u, LinkParams::fiber(G, 10e-6));
        let t = b.build().unwrap();
        let c = ctl(t.clone());
        let req = p2p(&t, "r", "u", 1e6);
        let pc = compute_path(&c.context(), r, u, &req, c.ledger()).unwrap();
        assert_eq!(pc.path.nodes, vec![r, u]);
        assert_eq!(pc.fixed_latency, SimTime::from_nanos(18_064));
        assert_eq!(pc.per_hop_budget, SimTime(1_000_000_000 - 18_064_000));
    }

    #[test]
    fn oversized_rate_has_no_bandwidth() {
        let t = star(1, 1, G);
        let c = ctl(t.clone());
        let req = p2p(&t, "rrh0", "bbu0", 2e9);
        let e = compute_path(&c.context(), id(&t, "rrh0"), id(&t, "bbu0"), &req, c.ledger());
        assert_eq!(e, Err(InfeasibleCause::NoBandwidth));
    }

    #[test]
    fn slow_route_misses_bound() {
        let mut b = TopologyBuilder::new();
        let r = b.add_node("r", NodeKind::Rrh);
        let u = b.add_node("u", NodeKind::Bbu);
        b.add_link(r, u, LinkParams::fiber(10 * G, 150e-6));
        let t = b.build().unwrap();
        let c = ctl(t.clone());
        let mut req = p2p(&t, "r", "u", 1e6);
        req.latency_bound = 100e-6;
        let e = compute_path(&c.context(), r, u, &req, c.ledger());
        assert_eq!(e, Err(InfeasibleCause::LatencyUnreachable));
    }

    #[test]
    fn endpoints_do_not_relay() {
        // r - u1 - u2 with no switch: u1 must not carry traffic onward
        let mut b = TopologyBuilder::new();
        let r = b.add_node("r", NodeKind::Rrh);
        let u1 = b.add_node("u1", NodeKind::Bbu);
        let u2 = b.add_node("u2", NodeKind::Bbu);
        b.add_link(r, u1, LinkParams::fiber(G, 0.0));
        b.add_link(u1, u2, LinkParams::fiber(G, 0.0));
        let t = b.build().unwrap();
        let c = ctl(t.clone());
        let req = p2p(&t, "r", "u2", 1e6);
        assert_eq!(compute_path(&c.context(), r, u2, &req, c.ledger()), Err(InfeasibleCause::NoRoute));
    }

    #[test]
    fn p2p_on_star_goes_through_hub() {
        let t = star(1, 1, G);
        let mut c = ctl(t.clone());
        let (sid, ch) = c.setup(p2p(&t, "rrh0", "bbu0", 1e8)).unwrap();
        assert_eq!(sid, 1);
        let s = c.session(sid).unwrap();
        assert_eq!(s.circuits[0].branches[0].path.nodes, vec![id(&t, "rrh0"), id(&t, "sw0"), id(&t, "bbu0")]);
        assert_eq!(ch.set.len(), 3);
        assert_eq!(c.log()[0].path, "rrh0>sw0>bbu0");
    }

    #[test]
    fn aggregation_debits_trunk_per_rrh() {
        let t = star(3, 1, 10 * G);
        let mut c = ctl(t.clone());
        let shape = PatternShape::AggregationToOneBbu {
            rrhs: vec![id(&t, "rrh0"), id(&t, "rrh1"), id(&t, "rrh2")],
            bbu: id(&t, "bbu0"),
        };
        let (sid, _) = c.setup(request(LogicalPattern::cell(shape), 1.5e9, 0, 1e-3)).unwrap();
        let s = c.session(sid).unwrap();
        assert_eq!(s.circuits.len(), 3);
        let bbu = id(&t, "bbu0");
        let trunk = t.link(t.link_at(bbu, Port(0)).unwrap()).direction_from(id(&t, "sw0")).unwrap();
        assert_eq!(c.ledger().reserved(trunk), 3 * 1_500_000_000);
        // three distinct labels arrive at the BBU on one port
        let labels: BTreeSet<u16> = s.circuits.iter().flat_map(|cc| cc.entries.iter().filter(|e| e.node == bbu).map(|e| e.label_in)).collect();
        assert_eq!(labels.len(), 3);
        assert_eq!(c.log()[0].path.matches(';').count(), 2);
    }

    #[test]
    fn aggregation_is_atomic() {
        let t = star(3, 1, 10 * G);
        let mut c = ctl(t.clone());
        let before = (c.ledger().clone(), c.tables().clone());
        let shape = PatternShape::AggregationToOneBbu {
            rrhs: vec![id(&t, "rrh0"), id(&t, "rrh1"), id(&t, "rrh2")],
            bbu: id(&t, "bbu0"),
        };
        // each access link fits but the trunk takes only three of 4 Gbps once
        let e = c.setup(request(LogicalPattern::cell(shape), 4e9, 0, 1e-3));
        assert_eq!(e, Err(SessionError::Infeasible(InfeasibleCause::NoBandwidth)));
        assert_eq!((c.ledger().clone(), c.tables().clone()), before);
        assert_eq!(c.log()[0].outcome, "infeasible:no_bandwidth");
    }

    #[test]
    fn multi_bbu_tree_shares_trunk_once() {
        // rrh - sw0 - sw1 - {bbu0, bbu1}
        let mut b = TopologyBuilder::new();
        let r = b.add_node("rrh0", NodeKind::Rrh);
        let s0 = b.add_node("sw0", NodeKind::FhSwitch);
        let s1 = b.add_node("sw1", NodeKind::FhSwitch);
        let u0 = b.add_node("bbu0", NodeKind::Bbu);
        let u1 = b.add_node("bbu1", NodeKind::Bbu);
        let p = LinkParams::fiber(10 * G, 1e-6);
        b.add_link(r, s0, p);
        let trunk = b.add_link(s0, s1, p);
        b.add_link(s1, u0, p);
        b.add_link(s1, u1, p);
        let t = b.build().unwrap();
        let mut c = ctl(t.clone());
        let shape = PatternShape::RrhToMultiBbu { rrh: r, bbus: vec![u1, u0] };
        let (sid, _) = c.setup(request(LogicalPattern::cell(shape), 2e9, 0, 1e-3)).unwrap();
        let dl = t.link(trunk).direction_from(s0).unwrap();
        assert_eq!(c.ledger().reserved(dl), 2_000_000_000);
        let s = c.session(sid).unwrap();
        let branch = s.circuits[0].entries.iter().find(|e| e.node == s1).unwrap();
        assert_eq!(branch.outputs.len(), 2);
        assert_eq!(c.log()[0].path, "rrh0>sw0>sw1>bbu0|rrh0>sw0>sw1>bbu1");
    }

    #[test]
    fn teardown_restores_and_is_idempotent() {
        let t = star(2, 1, G);
        let mut c = ctl(t.clone());
        let initial = c.ledger().clone();
        let (a, _) = c.setup(p2p(&t, "rrh0", "bbu0", 3e8)).unwrap();
        let (b, _) = c.setup(p2p(&t, "rrh1", "bbu0", 3e8)).unwrap();
        assert_ne!(c.ledger(), &initial);
        let ch = c.teardown(a).unwrap();
        assert_eq!(ch.remove.len(), 3);
        assert!(c.teardown(a).unwrap().is_empty());
        c.teardown(b).unwrap();
        assert_eq!(c.ledger(), &initial);
        assert!(c.tables().values().all(|t| t.is_empty()));
        assert_eq!(c.teardown(99), Err(SessionError::UnknownSession(99)));
    }

    #[test]
    fn labels_are_smallest_free() {
        let t = star(1, 1, 10 * G);
        let mut c = ctl(t.clone());
        let (a, _) = c.setup(p2p(&t, "rrh0", "bbu0", 1e6)).unwrap();
        let (b, _) = c.setup(p2p(&t, "rrh0", "bbu0", 1e6)).unwrap();
        assert_eq!(c.session(a).unwrap().circuits[0].ingress_label, 0);
        assert_eq!(c.session(b).unwrap().circuits[0].ingress_label, 1);
        c.teardown(a).unwrap();
        let (d, _) = c.setup(p2p(&t, "rrh0", "bbu0", 1e6)).unwrap();
        assert_eq!(d, 3);
        assert_eq!(c.session(d).unwrap().circuits[0].ingress_label, 0);
    }

    #[test]
    fn ring_cut_reroutes_everyone() {
        let t = ring(4);
        let mut c = ctl(t.clone());
        let mut ids = Vec::new();
        for r in ["rrh0", "rrh1", "rrh2", "rrh3"] {
            ids.push(c.setup(p2p(&t, r, "bbu0", 1e9)).unwrap().0);
        }
        let cut = t.neighbors(id(&t, "sw0")).iter().find(|(n, _)| *n == id(&t, "sw1")).unwrap().1;
        let untouched: Vec<_> = ids
            .iter()
            .filter(|&&s| !c.session(s).unwrap().uses_link(cut))
            .map(|&s| (s, c.session(s).unwrap().entries()))
            .collect();
        let (out, ch) = c.reroute_on_failure(cut);
        assert!(!out.is_empty());
        assert!(out.iter().all(|(_, o)| *o == RerouteOutcome::Rerouted));
        assert!(!ch.is_empty());
        for (s, e) in untouched {
            assert_eq!(c.session(s).unwrap().entries(), e);
        }
        for s in &ids {
            let sess = c.session(*s).unwrap();
            assert_eq!(sess.state, SessionState::Active);
            assert!(!sess.uses_link(cut));
        }
        assert!(c.ledger().is_safe());
    }

    #[test]
    fn star_leaf_cut_makes_victims() {
        let t = star(2, 1, 10 * G);
        let mut c = ctl(t.clone());
        let (a, _) = c.setup(p2p(&t, "rrh0", "bbu0", 1e9)).unwrap();
        let (b, _) = c.setup(p2p(&t, "rrh1", "bbu0", 1e9)).unwrap();
        let leaf = t.link_at(id(&t, "rrh0"), Port(0)).unwrap();
        let keep = c.session(b).unwrap().entries();
        let (out, _) = c.reroute_on_failure(leaf);
        assert_eq!(out, vec![(a, RerouteOutcome::Victim(InfeasibleCause::NoRoute))]);
        assert_eq!(c.session(a).unwrap().state, SessionState::TornDown);
        assert_eq!(c.session(b).unwrap().entries(), keep);
    }

    fn per_ue(t: &PhysicalTopology, r: &str, ue: u32) -> LogicalPattern {
        LogicalPattern {
            shape: PatternShape::PointToPoint {
                rrh: id(t, r),
                bbu: id(t, "bbu0"),
            },
            granularity: Granularity::PerUeFlow(ue),
        }
    }

    #[test]
    fn migrate_moves_flow() {
        let t = star(2, 1, G);
        let mut c = ctl(t.clone());
        let mut req = p2p(&t, "rrh0", "bbu0", 6e8);
        req.pattern = per_ue(&t, "rrh0", 3);
        let (sid, _) = c.setup(req).unwrap();
        let old_uid = c.session(sid).unwrap().circuits[0].uid;
        // trunk holds 600 Mbps of 1 Gbps: sizing against the sum would fail
        let m = c.migrate(sid, per_ue(&t, "rrh1", 3)).unwrap();
        assert_eq!(m.retired, vec![old_uid]);
        assert_eq!(m.started.len(), 1);
        assert_eq!(m.make.set.len(), 3);
        assert_eq!(m.brk.remove.len(), 3);
        let s = c.session(sid).unwrap();
        assert_eq!(s.circuits[0].source, id(&t, "rrh1"));
        assert!(c.ledger().is_safe());
        let leaf0 = t.link(t.link_at(id(&t, "rrh0"), Port(0)).unwrap()).direction_from(id(&t, "rrh0")).unwrap();
        assert_eq!(c.ledger().reserved(leaf0), 0);
    }

    #[test]
    fn migrate_into_saturation_keeps_original() {
        let t = star(2, 2, G);
        let mut c = ctl(t.clone());
        let mut req = p2p(&t, "rrh0", "bbu0", 3e8);
        req.pattern = per_ue(&t, "rrh0", 1);
        let (sid, _) = c.setup(req).unwrap();
        let mut hog = p2p(&t, "rrh1", "bbu1", 8e8);
        hog.pattern.granularity = Granularity::PerUeFlow(2);
        c.setup(hog).unwrap();
        let before = (c.session(sid).unwrap().clone(), c.ledger().clone(), c.tables().clone());
        let e = c.migrate(sid, per_ue(&t, "rrh1", 1));
        assert_eq!(e, Err(SessionError::Infeasible(InfeasibleCause::NoBandwidth)));
        assert_eq!((c.session(sid).unwrap().clone(), c.ledger().clone(), c.tables().clone()), before);
    }

    #[test]
    fn migrate_to_same_pattern_is_noop() {
        let t = star(2, 1, G);
        let mut c = ctl(t.clone());
        let (sid, _) = c.setup(p2p(&t, "rrh0", "bbu0", 3e8)).unwrap();
        let e = c.session(sid).unwrap().entries();
        let m = c.migrate(sid, c.session(sid).unwrap().request.pattern.clone()).unwrap();
        assert_eq!(m, Migration::default());
        assert_eq!(c.session(sid).unwrap().entries(), e);
        assert_eq!(c.log().last().unwrap().outcome, "unchanged");
    }

    #[test]
    fn migrate_keeps_unchanged_circuits() {
        let t = star(3, 1, 10 * G);
        let mut c = ctl(t.clone());
        let rr = |names: &[&str]| PatternShape::AggregationToOneBbu {
            rrhs: names.iter().map(|n| id(&t, n)).collect(),
            bbu: id(&t, "bbu0"),
        };
        let (sid, _) = c.setup(request(LogicalPattern::cell(rr(&["rrh0", "rrh1"])), 1e9, 0, 1e-3)).unwrap();
        let kept = c.session(sid).unwrap().circuits[0].clone();
        let m = c.migrate(sid, LogicalPattern::cell(rr(&["rrh0", "rrh2"]))).unwrap();
        assert_eq!(m.started.len(), 1);
        assert_eq!(m.retired.len(), 1);
        assert_eq!(c.session(sid).unwrap().circuits[0], kept);
    }

    #[test]
    fn migrate_rejects_granularity_change() {
        let t = star(2, 1, G);
        let mut c = ctl(t.clone());
        let (sid, _) = c.setup(p2p(&t, "rrh0", "bbu0", 3e8)).unwrap();
        assert!(matches!(c.migrate(sid, per_ue(&t, "rrh1", 0)), Err(SessionError::Invalid(_))));
    }

    #[test]
    fn class_fraction_limits_urgent_traffic() {
        let t = star(2, 1, G);
        let mut f = [1.0; NUM_CLASSES];
        f[0] = 0.5;
        let l = Ledger::with_fractions(&t, f);
        let mut c = Controller::new(t.clone(), vec![SimTime::ZERO; t.nodes().len()], l);
        c.setup(p2p(&t, "rrh0", "bbu0", 4e8)).unwrap();
        assert!(c.setup(p2p(&t, "rrh1", "bbu0", 2e8)).is_err());
        let mut bulk = p2p(&t, "rrh1", "bbu0", 5e8);
        bulk.latency_class = 3;
        c.setup(bulk).unwrap();
        assert!(c.ledger().is_safe());
    }

    #[test]
    fn invalid_requests_are_rejected() {
        let t = star(1, 1, G);
        let mut c = ctl(t.clone());
        let mut r = p2p(&t, "rrh0", "bbu0", 1e6);
        r.mean_rate = 2e6;
        assert!(matches!(c.setup(r), Err(SessionError::Invalid(_))));
        let wrong = request(
            LogicalPattern::cell(PatternShape::PointToPoint {
                rrh: id(&t, "bbu0"),
                bbu: id(&t, "rrh0"),
            }),
            1e6,
            0,
            1e-3,
        );
        assert!(matches!(c.setup(wrong), Err(SessionError::Invalid(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn random_interleavings_restore_ledger(ops in proptest::collection::vec((0usize..4, 0usize..4, 1u32..40), 100)) {
            let t = ring(4);
            let mut c = ctl(t.clone());
            let initial = c.ledger().clone();
            let mut live: Vec<u16> = Vec::new();
            for (kind, who, rate) in ops {
                if kind < 2 || live.is_empty() {
                    let r = format!("rrh{who}");
                    if let Ok((s, _)) = c.setup(p2p(&t, &r, "bbu0", rate as f64 * 1e8)) {
                        live.push(s);
                    }
                } else {
                    let s = live.remove(who % live.len());
                    c.teardown(s).unwrap();
                }
                prop_assert!(c.ledger().is_safe());
                prop_assert!(c.ledger().iter().all(|(dl, _, _)| c.ledger().residual(dl) >= 0));
            }
            for s in live {
                c.teardown(s).unwrap();
            }
            prop_assert_eq!(c.ledger(), &initial);
            prop_assert!(c.tables().values().all(|t| t.is_empty()));
        }
    }
}
