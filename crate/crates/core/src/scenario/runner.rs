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

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::*;
use crate::metrics::{
    assemble_report, overhead_sweep, write_control_csv, write_links_csv, write_sessions_csv, write_summary_csv,
    write_sweep_csv, MetricsReport, SessionBinding, SweepPoint,
};
use crate::packet::{
    run, ControlAction, EngineConfig, NodeConfig, RegulatorPolicy, RunOutcome, SourceSpec, TimedAction, World,
};
use crate::session::{ControlLogEntry, Controller, Ledger, RerouteOutcome, SessionRequest, TableChanges, NUM_CLASSES};
use crate::sync::{build_sync_tree, propagate_sync, write_sync_csv, ClockSource};
use crate::time::SimTime;
use crate::topology::{Granularity, LinkId, LogicalPattern, NodeId, PatternShape, PhysicalTopology, TopologyBuilder};
use crate::traffic::{generate_loads, peak_rate, TrafficTrace, UeProfile};

pub const EXIT_OK: i32 = 0;
/// A mandatory session could not be admitted.
pub const EXIT_INFEASIBLE: i32 = 1;
/// The scenario could not be read or built.
pub const EXIT_PARSE: i32 = 2;

pub const SWEEP_FRAME_SIZES: [u16; 8] = [64, 128, 256, 512, 1024, 2048, 4096, 8192];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Build(String),
    #[error("writing outputs: {0}")]
    Io(#[from] io::Error),
}

impl ScenarioError {
    pub fn exit_code(&self) -> i32 {
        EXIT_PARSE
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    /// Also sets the horizon to this many subframes.
    pub subframes: Option<u64>,
    pub sweep: bool,
}

#[derive(Clone, Debug)]
pub struct ScenarioRun {
    /// The scenario after command-line overrides.
    pub scenario: Scenario,
    pub world: World,
    pub outcome: RunOutcome,
    pub report: MetricsReport,
    pub control_log: Vec<ControlLogEntry>,
    pub bindings: Vec<SessionBinding>,
    pub traces: BTreeMap<String, TrafficTrace>,
    pub sync_fingerprint: u64,
    /// Mandatory sessions that were refused, with the reason.
    pub refused: Vec<(String, String)>,
    pub sweep: Option<Vec<SweepPoint>>,
    /// Output file name to contents.
    pub files: BTreeMap<String, Vec<u8>>,
}

impl ScenarioRun {
    pub fn exit_code(&self) -> i32 {
        if self.refused.is_empty() {
            EXIT_OK
        } else {
            EXIT_INFEASIBLE
        }
    }
}

fn build<E: std::fmt::Display>(e: E) -> ScenarioError {
    ScenarioError::Build(e.to_string())
}

fn cell_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer over the cell position
    let mut z = seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Built {
    topo: PhysicalTopology,
    ids: BTreeMap<String, NodeId>,
}

impl Built {
    fn id(&self, n: &str) -> NodeId {
        self.ids[n]
    }

    fn shape(&self, p: &PatternDecl) -> PatternShape {
        match p {
            PatternDecl::PointToPoint { rrh, bbu } => PatternShape::PointToPoint {
                rrh: self.id(rrh),
                bbu: self.id(bbu),
            },
            PatternDecl::Aggregation { rrhs, bbu } => PatternShape::AggregationToOneBbu {
                rrhs: rrhs.iter().map(|r| self.id(r)).collect(),
                bbu: self.id(bbu),
            },
            PatternDecl::MultiBbu { rrh, bbus } => PatternShape::RrhToMultiBbu {
                rrh: self.id(rrh),
                bbus: bbus.iter().map(|b| self.id(b)).collect(),
            },
            PatternDecl::BbuToBbu { src, dst } => PatternShape::BbuToBbu {
                src_bbu: self.id(src),
                dst_bbu: self.id(dst),
            },
        }
    }

    fn link_between(&self, a: &str, b: &str) -> Option<LinkId> {
        let (a, b) = (self.id(a), self.id(b));
        self.topo
            .links()
            .iter()
            .find(|l| (l.a.0 == a && l.b.0 == b) || (l.a.0 == b && l.b.0 == a))
            .map(|l| l.id)
    }
}

fn build_topology(sc: &Scenario) -> Result<Built, ScenarioError> {
    let mut b = TopologyBuilder::new();
    let mut ids = BTreeMap::new();
    for n in &sc.nodes {
        let id = match n.ports {
            Some(p) => b.add_node_with_ports(n.name.clone(), n.kind, p),
            None => b.add_node(n.name.clone(), n.kind),
        };
        ids.insert(n.name.clone(), id);
    }
    for l in &sc.links {
        b.add_link(ids[&l.a], ids[&l.b], l.params);
    }
    Ok(Built {
        topo: b.build().map_err(build)?,
        ids,
    })
}

fn apply_options(sc: &Scenario, opts: &RunOptions) -> Scenario {
    let mut sc = sc.clone();
    if let Some(s) = opts.seed {
        sc.seed = s;
    }
    if let Some(n) = opts.subframes {
        sc.subframes = Some(n);
        sc.horizon = n as f64 * sc.subframe;
    }
    sc
}

/// Per-session traffic description shared by every circuit of the session.
struct Plan<'a> {
    decl: &'a SessionDecl,
    request: SessionRequest,
}

fn session_request(sc: &Scenario, b: &Built, d: &SessionDecl, pattern: &PatternDecl) -> Result<SessionRequest, ScenarioError> {
    let src_cell = pattern.sources().first().and_then(|s| sc.cell_at(s));
    let scheme = d
        .scheme
        .or(src_cell.map(|c| c.scheme))
        .unwrap_or(crate::traffic::SplitScheme::ModulationBits);
    let peak = match (d.peak, d.cbr) {
        (Some(p), _) => p,
        (None, Some(c)) => c,
        (None, None) => {
            let mut best: f64 = 0.0;
            for s in pattern.sources() {
                let cell = sc.cell_at(s).expect("checked while parsing");
                best = best.max(peak_rate(scheme, &cell.config).map_err(build)?);
            }
            best
        }
    };
    let granularity = match d.ue {
        Some(u) => Granularity::PerUeFlow(u),
        None => Granularity::CellLevel,
    };
    Ok(SessionRequest {
        pattern: LogicalPattern {
            shape: b.shape(pattern),
            granularity,
        },
        mean_rate: d.mean.unwrap_or(peak),
        peak_rate: peak,
        latency_class: d.class,
        latency_bound: d.bound,
        scheme,
        frame_bytes: d.frame_bytes,
    })
}

struct Sources<'a> {
    sc: &'a Scenario,
    built: &'a Built,
    traces: &'a BTreeMap<String, TrafficTrace>,
    subframe: SimTime,
    specs: Vec<SourceSpec>,
    by_uid: BTreeMap<u32, usize>,
}

impl Sources<'_> {
    fn volumes(&self, plan: &Plan<'_>, src: NodeId) -> Result<Vec<u64>, ScenarioError> {
        let n = self.sc.n_subframes() as usize;
        if let Some(rate) = plan.decl.cbr {
            let bits = (rate * self.sc.subframe).round() as u64;
            return Ok(vec![bits; n]);
        }
        let name = self.built.topo.name(src);
        let cell = self.sc.cell_at(name).expect("checked while parsing");
        let base = &self.traces[&cell.name];
        let mut t = if base.scheme == plan.request.scheme {
            base.clone()
        } else {
            base.with_scheme(plan.request.scheme).map_err(build)?
        };
        if let Some(u) = plan.decl.ue {
            t = t.for_ue(u).map_err(build)?;
        }
        Ok(t.volumes)
    }

    fn start(&mut self, plan: &Plan<'_>, uid: u32, src: NodeId, label: u16, from: SimTime) -> Result<(), ScenarioError> {
        let volumes = self.volumes(plan, src)?;
        self.by_uid.insert(uid, self.specs.len());
        self.specs.push(SourceSpec {
            flow: uid,
            node: src,
            label,
            latency_class: plan.decl.class,
            volumes,
            subframe: self.subframe,
            arrival: plan.decl.arrival,
            policy: RegulatorPolicy {
                max_frame_bytes: plan.decl.frame_bytes,
                frame_timeout: plan.decl.timeout,
            },
            window: (from, SimTime::MAX),
        });
        Ok(())
    }

    fn stop(&mut self, uid: u32, at: SimTime) {
        if let Some(&i) = self.by_uid.get(&uid) {
            let w = &mut self.specs[i].window;
            w.1 = w.1.min(at);
        }
    }
}

fn push_changes(actions: &mut Vec<TimedAction>, ch: &TableChanges, at: SimTime) {
    for e in &ch.remove {
        actions.push(TimedAction {
            at,
            action: ControlAction::RemoveEntry {
                node: e.node,
                in_port: e.in_port,
                label: e.label_in,
                outputs: e.outputs.clone(),
            },
        });
    }
    for e in &ch.set {
        actions.push(TimedAction {
            at,
            action: ControlAction::SetEntry {
                node: e.node,
                in_port: e.in_port,
                label: e.label_in,
                outputs: e.outputs.clone(),
            },
        });
    }
}

fn engine_config(sc: &Scenario, b: &Built) -> EngineConfig {
    let e = &sc.engine;
    let default_node = NodeConfig {
        scheduler: e.scheduler.clone(),
        header_processing_delay: e.header_delay,
        queue_bytes_per_class: e.queue_bytes,
        input_buffer_bytes: e.input_buffer_bytes,
    };
    let mut per_node = BTreeMap::new();
    for o in &e.overrides {
        let mut c = default_node.clone();
        if let Some(s) = &o.scheduler {
            c.scheduler = s.clone();
        }
        if let Some(q) = o.queue_bytes {
            c.queue_bytes_per_class = q;
        }
        if let Some(q) = o.input_buffer_bytes {
            c.input_buffer_bytes = q;
        }
        if let Some(d) = o.header_delay {
            c.header_processing_delay = d;
        }
        per_node.insert(b.id(&o.node), c);
    }
    EngineConfig {
        default_node,
        per_node,
        trace_paths: e.trace_paths,
    }
}

fn csv<F: FnOnce(&mut Vec<u8>) -> io::Result<()>>(f: F) -> Vec<u8> {
    let mut v = Vec::new();
    f(&mut v).expect("writing to memory");
    v
}

/// Runs `sc` end to end and returns every output without touching the disk.
pub fn run_scenario_in_memory(sc: &Scenario, opts: &RunOptions) -> Result<ScenarioRun, ScenarioError> {
    let sc = apply_options(sc, opts);
    let built = build_topology(&sc)?;
    let topo = &built.topo;
    let n_sub = sc.n_subframes();
    let horizon = SimTime::from_secs(sc.horizon);
    let subframe = SimTime::from_secs(sc.subframe);
    let mut files = BTreeMap::new();

    // clocks
    let clocks: Vec<ClockSource> = sc
        .sync
        .sources
        .iter()
        .map(|c| ClockSource {
            node: built.id(&c.node),
            quality_rank: c.rank,
            frequency_offset_ppb: c.offset_ppb,
        })
        .collect();
    let tree = build_sync_tree(topo, &clocks).map_err(build)?;
    let status = propagate_sync(&tree, topo, sc.sync.regen);
    files.insert("sync.csv".to_string(), csv(|w| write_sync_csv(w, topo, &tree, &status)));

    // radio traffic
    let mut traces = BTreeMap::new();
    for (i, c) in sc.cells.iter().enumerate() {
        let mut profiles = Vec::new();
        for g in &c.ues {
            for _ in 0..g.count {
                profiles.push(UeProfile {
                    ue_id: profiles.len() as u32,
                    activity: g.activity,
                    mcs: g.mcs,
                    demand_prbs: g.demand,
                });
            }
        }
        let seed = cell_seed(sc.seed, i);
        let loads = generate_loads(&c.config, &profiles, c.control, n_sub, seed).map_err(build)?;
        let t = TrafficTrace::from_loads(c.config.clone(), c.scheme, loads, seed).map_err(build)?;
        files.insert(format!("trace_{}.csv", c.name), csv(|w| t.write_csv(w)));
        traces.insert(c.name.clone(), t);
    }

    // control plane at time zero
    let header_delay: Vec<SimTime> = topo
        .nodes()
        .iter()
        .map(|n| {
            let d = sc
                .engine
                .overrides
                .iter()
                .find(|o| o.node == n.name)
                .and_then(|o| o.header_delay)
                .unwrap_or(sc.engine.header_delay);
            SimTime::from_secs(d)
        })
        .collect();
    let mut fractions = [1.0; NUM_CLASSES];
    for &(c, f) in &sc.engine.admission {
        fractions[c as usize] = f;
    }
    let mut ctl = Controller::new(topo.clone(), header_delay, Ledger::with_fractions(topo, fractions));
    let mut plans = Vec::new();
    for d in &sc.sessions {
        plans.push(Plan {
            decl: d,
            request: session_request(&sc, &built, d, &d.pattern)?,
        });
    }
    let mut srcs = Sources {
        sc: &sc,
        built: &built,
        traces: &traces,
        subframe,
        specs: Vec::new(),
        by_uid: BTreeMap::new(),
    };
    let mut ids: Vec<Option<u16>> = Vec::new();
    let mut refused = Vec::new();
    let mut flows: Vec<Vec<u32>> = Vec::new();
    for p in &plans {
        match ctl.setup(p.request.clone()) {
            Ok((id, _)) => {
                let s = ctl.session(id).expect("just admitted").clone();
                let mut f = Vec::new();
                for c in &s.circuits {
                    srcs.start(p, c.uid, c.source, c.ingress_label, SimTime::ZERO)?;
                    f.push(c.uid);
                }
                ids.push(Some(id));
                flows.push(f);
            }
            Err(e) => {
                if p.decl.mandatory {
                    refused.push((p.decl.name.clone(), e.to_string()));
                }
                ids.push(None);
                flows.push(Vec::new());
            }
        }
    }
    let tables = ctl.tables().clone();

    // timed events
    let drain = SimTime::from_secs(sc.engine.drain);
    let mut actions = Vec::new();
    let index_of = |name: &str| sc.sessions.iter().position(|s| s.name == name).expect("checked while parsing");
    for ev in &sc.events {
        let at = SimTime::from_secs(ev.at);
        ctl.set_time(at);
        match &ev.kind {
            EventKind::Migrate { session, pattern } => {
                let i = index_of(session);
                let Some(id) = ids[i] else { continue };
                let mut target = session_request(&sc, &built, plans[i].decl, pattern)?.pattern;
                target.granularity = plans[i].request.pattern.granularity;
                if let Ok(m) = ctl.migrate(id, target) {
                    push_changes(&mut actions, &m.make, at);
                    push_changes(&mut actions, &m.brk, at + drain);
                    for uid in &m.retired {
                        srcs.stop(*uid, at);
                    }
                    let s = ctl.session(id).expect("active").clone();
                    for c in s.circuits.iter().filter(|c| m.started.contains(&c.uid)) {
                        srcs.start(&plans[i], c.uid, c.source, c.ingress_label, at)?;
                        flows[i].push(c.uid);
                    }
                }
            }
            EventKind::Fail { a, b } => {
                let link = built.link_between(a, b).expect("checked while parsing");
                actions.push(TimedAction {
                    at,
                    action: ControlAction::LinkDown(link),
                });
                let (outcomes, ch) = ctl.reroute_on_failure(link);
                push_changes(&mut actions, &ch, at);
                for (id, o) in outcomes {
                    if let RerouteOutcome::Victim(_) = o {
                        for c in &ctl.session(id).expect("known").circuits {
                            srcs.stop(c.uid, at);
                        }
                    }
                }
            }
            EventKind::Teardown { session } => {
                let i = index_of(session);
                let Some(id) = ids[i] else { continue };
                if let Ok(ch) = ctl.teardown(id) {
                    push_changes(&mut actions, &ch, at + drain);
                    for &uid in &flows[i] {
                        srcs.stop(uid, at);
                    }
                }
            }
        }
    }
    let specs = std::mem::take(&mut srcs.specs);
    drop(srcs);
    actions.sort_by_key(|a| a.at);

    let world = World {
        topology: topo.clone(),
        tables,
        sources: specs,
        actions,
        config: engine_config(&sc, &built),
    };
    let outcome = run(&world, horizon);
    let bindings: Vec<SessionBinding> = plans
        .iter()
        .enumerate()
        .map(|(i, p)| SessionBinding {
            session_id: ids[i].unwrap_or(0),
            name: p.decl.name.clone(),
            latency_class: p.decl.class,
            bound: p.request.bound(),
            flows: flows[i].clone(),
        })
        .collect();
    let log = ctl.log().to_vec();
    let report = assemble_report(&outcome, topo, &bindings, &log);
    files.insert("sessions.csv".into(), csv(|w| write_sessions_csv(w, &report)));
    files.insert("links.csv".into(), csv(|w| write_links_csv(w, &report)));
    files.insert("summary.csv".into(), csv(|w| write_summary_csv(w, &report)));
    files.insert("control.csv".into(), csv(|w| write_control_csv(w, &log)));
    let sweep = if opts.sweep {
        let pts = overhead_sweep(&world, horizon, &SWEEP_FRAME_SIZES).map_err(ScenarioError::Build)?;
        files.insert("sweep.csv".into(), csv(|w| write_sweep_csv(w, &pts)));
        Some(pts)
    } else {
        None
    };
    Ok(ScenarioRun {
        scenario: sc,
        world,
        outcome,
        report,
        control_log: log,
        bindings,
        traces,
        sync_fingerprint: tree.fingerprint(),
        refused,
        sweep,
        files,
    })
}

/// Runs `sc` and writes every output file into `out_dir`, creating it if
/// needed. Outputs are written even when a mandatory session is refused.
pub fn run_scenario(sc: &Scenario, opts: &RunOptions, out_dir: &Path) -> Result<ScenarioRun, ScenarioError> {
    let r = run_scenario_in_memory(sc, opts)?;
    fs::create_dir_all(out_dir)?;
    for (name, data) in &r.files {
        fs::write(out_dir.join(name), data)?;
    }
    Ok(r)
}
