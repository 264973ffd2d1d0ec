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

//! Scenario files: a line-oriented description of a complete run.
//!
//! ```text
//! # comment
//! [scenario]
//! name = demo
//! horizon = 0.02
//! seed = 1
//!
//! [topology]
//! node = sw0 switch
//! node = rrh0 rrh
//! node = bbu0 bbu
//! link = rrh0 sw0 capacity=10e9 delay=1e-6
//! link = sw0 bbu0 capacity=10e9 delay=1e-6
//!
//! [cells]
//! cell = c0 rrh=rrh0 bandwidth=20e6 antennas=2 scheme=modulation_bits
//! ues = c0 count=10 activity=markov:20:10 mcs=walk:1:0.1:1 demand=5:20
//!
//! [sync]
//! source = bbu0 rank=0
//!
//! [sessions]
//! session = fh pattern=p2p:rrh0>bbu0 class=0 bound=1e-3
//! ```
//!
//! Sections may appear in any order and `[engine]` and `[events]` are
//! optional. See [`render`] for the full set of keys; its output is the
//! canonical form.

mod parse;
mod render;
mod runner;

pub use parse::{parse_scenario, ParseError};
pub use render::render;
pub use runner::{
    run_scenario, run_scenario_in_memory, RunOptions, ScenarioError, ScenarioRun, EXIT_INFEASIBLE, EXIT_OK, EXIT_PARSE,
    SWEEP_FRAME_SIZES,
};

use crate::packet::{ArrivalMode, Scheduler};
use crate::topology::{LinkParams, NodeKind};
use crate::traffic::{Activity, CellConfig, ControlSchedule, McsWalk, SplitScheme};

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// Seconds.
    pub horizon: f64,
    pub seed: u64,
    /// Seconds; shared by every cell and constant-rate source.
    pub subframe: f64,
    /// Traffic length; defaults to enough subframes to cover the horizon.
    pub subframes: Option<u64>,
    pub nodes: Vec<NodeDecl>,
    pub links: Vec<LinkDecl>,
    pub cells: Vec<CellDecl>,
    pub sync: SyncDecl,
    pub sessions: Vec<SessionDecl>,
    pub engine: EngineDecl,
    pub events: Vec<EventDecl>,
}

impl Scenario {
    pub fn n_subframes(&self) -> u64 {
        self.subframes
            .unwrap_or_else(|| (self.horizon / self.subframe - 1e-9).ceil().max(1.0) as u64)
    }

    pub fn cell_at(&self, rrh: &str) -> Option<&CellDecl> {
        self.cells.iter().find(|c| c.rrh == rrh)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeDecl {
    pub name: String,
    pub kind: NodeKind,
    pub ports: Option<u16>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkDecl {
    pub a: String,
    pub b: String,
    pub params: LinkParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UeGroup {
    pub count: u32,
    pub activity: Activity,
    pub mcs: McsWalk,
    pub demand: (u32, u32),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellDecl {
    pub name: String,
    pub rrh: String,
    pub config: CellConfig,
    pub scheme: SplitScheme,
    pub control: ControlSchedule,
    pub ues: Vec<UeGroup>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClockDecl {
    pub node: String,
    pub rank: i32,
    pub offset_ppb: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyncDecl {
    pub sources: Vec<ClockDecl>,
    pub regen: f64,
}

impl Default for SyncDecl {
    fn default() -> Self {
        SyncDecl {
            sources: Vec::new(),
            regen: 1.0,
        }
    }
}

/// Pattern endpoints by node name.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PatternDecl {
    PointToPoint { rrh: String, bbu: String },
    Aggregation { rrhs: Vec<String>, bbu: String },
    MultiBbu { rrh: String, bbus: Vec<String> },
    BbuToBbu { src: String, dst: String },
}

impl PatternDecl {
    pub fn sources(&self) -> Vec<&str> {
        match self {
            PatternDecl::PointToPoint { rrh, .. } | PatternDecl::MultiBbu { rrh, .. } => vec![rrh],
            PatternDecl::Aggregation { rrhs, .. } => rrhs.iter().map(|s| s.as_str()).collect(),
            PatternDecl::BbuToBbu { src, .. } => vec![src],
        }
    }

    pub fn nodes(&self) -> Vec<&str> {
        let mut v = self.sources();
        match self {
            PatternDecl::PointToPoint { bbu, .. } | PatternDecl::Aggregation { bbu, .. } => v.push(bbu),
            PatternDecl::MultiBbu { bbus, .. } => v.extend(bbus.iter().map(|s| s.as_str())),
            PatternDecl::BbuToBbu { dst, .. } => v.push(dst),
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionDecl {
    pub name: String,
    pub pattern: PatternDecl,
    /// Per-UE flow when set.
    pub ue: Option<u32>,
    pub class: u8,
    /// Seconds.
    pub bound: f64,
    /// Defaults to the scheme of the source cell.
    pub scheme: Option<SplitScheme>,
    /// Bits per second; default is the split's peak rate or the constant rate.
    pub peak: Option<f64>,
    pub mean: Option<f64>,
    /// Constant-rate source replacing cell traffic, bits per second.
    pub cbr: Option<f64>,
    pub frame_bytes: u16,
    /// Seconds.
    pub timeout: f64,
    pub arrival: ArrivalMode,
    pub mandatory: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeOverride {
    pub node: String,
    pub scheduler: Option<Scheduler>,
    pub queue_bytes: Option<u64>,
    pub input_buffer_bytes: Option<u64>,
    pub header_delay: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngineDecl {
    pub scheduler: Scheduler,
    pub queue_bytes: u64,
    pub input_buffer_bytes: u64,
    /// Seconds per packet at switches.
    pub header_delay: f64,
    pub trace_paths: bool,
    /// `(class, fraction)` admission limits.
    pub admission: Vec<(u8, f64)>,
    /// Seconds old entries stay installed after a migration or teardown.
    pub drain: f64,
    pub overrides: Vec<NodeOverride>,
}

impl Default for EngineDecl {
    fn default() -> Self {
        EngineDecl {
            scheduler: Scheduler::StrictPriority,
            queue_bytes: crate::packet::engine::DEFAULT_QUEUE_BYTES,
            input_buffer_bytes: crate::packet::engine::DEFAULT_QUEUE_BYTES,
            header_delay: 0.0,
            trace_paths: false,
            admission: Vec::new(),
            drain: 1e-3,
            overrides: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EventKind {
    Migrate { session: String, pattern: PatternDecl },
    Fail { a: String, b: String },
    Teardown { session: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventDecl {
    /// Seconds.
    pub at: f64,
    pub kind: EventKind,
}

pub const BUNDLED: [(&str, &str); 5] = [
    ("cran-aggregation", include_str!("../../scenarios/cran-aggregation.scn")),
    ("cooperation-clusters", include_str!("../../scenarios/cooperation-clusters.scn")),
    ("cd-decoupling", include_str!("../../scenarios/cd-decoupling.scn")),
    ("device-centric", include_str!("../../scenarios/device-centric.scn")),
    ("latency-tiers", include_str!("../../scenarios/latency-tiers.scn")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}
