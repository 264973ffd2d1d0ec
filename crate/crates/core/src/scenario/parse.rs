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

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use super::*;
use crate::packet::RegulatorPolicy;
use crate::session::NUM_CLASSES;
use crate::topology::LinkClass;
use crate::traffic::MCS_TABLE;

/// First problem found, with its 1-based line (0 when not tied to a line).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}: {}", self.line, self.field, self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

impl std::error::Error for ParseError {}

fn err<T>(line: usize, field: impl Into<String>, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        line,
        field: field.into(),
        message: message.into(),
    })
}

/// One `key = value` line split into positional tokens and `attr=value` pairs.
struct Entry<'a> {
    line: usize,
    key: &'a str,
    pos: Vec<&'a str>,
    attrs: BTreeMap<&'a str, &'a str>,
}

impl<'a> Entry<'a> {
    fn field(&self, attr: &str) -> String {
        format!("{}.{}", self.key, attr)
    }

    fn positional(&self, n: usize, what: &str) -> Result<&'a str, ParseError> {
        match self.pos.get(n) {
            Some(s) => Ok(s),
            None => err(self.line, self.key, format!("missing {what}")),
        }
    }

    fn exact_positionals(&self, n: usize) -> Result<(), ParseError> {
        if self.pos.len() > n {
            return err(self.line, self.key, format!("unexpected token '{}'", self.pos[n]));
        }
        Ok(())
    }

    fn take_str(&mut self, attr: &str) -> Option<&'a str> {
        self.attrs.remove(attr)
    }

    fn take<T: FromStr>(&mut self, attr: &str, expected: &str) -> Result<Option<T>, ParseError>
    where
        T::Err: fmt::Display,
    {
        match self.attrs.remove(attr) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| ParseError {
                    line: self.line,
                    field: self.field(attr),
                    message: format!("expected {expected}, got '{v}' ({e})"),
                }),
        }
    }

    fn take_f64(&mut self, attr: &str) -> Result<Option<f64>, ParseError> {
        let v = self.take::<f64>(attr, "a number")?;
        if let Some(x) = v {
            if !x.is_finite() {
                return err(self.line, self.field(attr), "must be finite");
            }
        }
        Ok(v)
    }

    fn take_count(&mut self, attr: &str) -> Result<Option<u64>, ParseError> {
        match self.take_f64(attr)? {
            None => Ok(None),
            Some(x) if x >= 0.0 && x.fract() == 0.0 && x < u64::MAX as f64 => Ok(Some(x as u64)),
            Some(x) => err(self.line, self.field(attr), format!("expected a whole number, got {x}")),
        }
    }

    fn take_u32(&mut self, attr: &str) -> Result<Option<u32>, ParseError> {
        match self.take_count(attr)? {
            None => Ok(None),
            Some(x) => u32::try_from(x)
                .map(Some)
                .or_else(|_| err(self.line, self.field(attr), "value too large")),
        }
    }

    fn finish(self) -> Result<(), ParseError> {
        if let Some((k, _)) = self.attrs.iter().next() {
            return err(self.line, self.field(k), "unknown attribute");
        }
        Ok(())
    }
}

fn parse_num_pair<T: FromStr>(s: &str) -> Option<(T, T)> {
    let (a, b) = s.split_once(':')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

pub(super) fn parse_activity(s: &str) -> Result<Activity, String> {
    match s {
        "always_on" => Ok(Activity::AlwaysOn),
        "always_off" => Ok(Activity::AlwaysOff),
        _ => {
            let rest = s
                .strip_prefix("markov:")
                .ok_or_else(|| format!("expected always_on, always_off or markov:ON:OFF, got '{s}'"))?;
            let (on, off) = parse_num_pair::<f64>(rest).ok_or_else(|| format!("bad markov durations '{rest}'"))?;
            Ok(Activity::Markov {
                mean_on: on,
                mean_off: off,
            })
        }
    }
}

pub(super) fn parse_mcs(s: &str) -> Result<McsWalk, String> {
    if let Some(i) = s.strip_prefix("fixed:") {
        let idx: usize = i.parse().map_err(|_| format!("bad MCS index '{i}'"))?;
        return Ok(McsWalk::fixed(idx));
    }
    let rest = s
        .strip_prefix("walk:")
        .ok_or_else(|| format!("expected fixed:IDX or walk:START:PROB:STEP, got '{s}'"))?;
    let parts: Vec<&str> = rest.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("walk needs START:PROB:STEP, got '{rest}'"));
    }
    Ok(McsWalk {
        start_index: parts[0].parse().map_err(|_| format!("bad start '{}'", parts[0]))?,
        step_prob: parts[1].parse().map_err(|_| format!("bad probability '{}'", parts[1]))?,
        max_step: parts[2].parse().map_err(|_| format!("bad step '{}'", parts[2]))?,
    })
}

fn names(s: &str) -> Vec<String> {
    s.split(',').map(|x| x.trim().to_string()).collect()
}

pub(super) fn parse_pattern(s: &str) -> Result<PatternDecl, String> {
    let (kind, rest) = s
        .split_once(':')
        .ok_or_else(|| format!("expected KIND:SRC>DST, got '{s}'"))?;
    let (src, dst) = rest
        .split_once('>')
        .ok_or_else(|| format!("expected SRC>DST after '{kind}:'"))?;
    if src.is_empty() || dst.is_empty() {
        return Err("empty endpoint".into());
    }
    let single = |x: &str| -> Result<String, String> {
        if x.contains(',') {
            Err(format!("'{kind}' takes a single node on this side, got '{x}'"))
        } else {
            Ok(x.to_string())
        }
    };
    Ok(match kind {
        "p2p" => PatternDecl::PointToPoint {
            rrh: single(src)?,
            bbu: single(dst)?,
        },
        "aggregation" => PatternDecl::Aggregation {
            rrhs: names(src),
            bbu: single(dst)?,
        },
        "multi" => PatternDecl::MultiBbu {
            rrh: single(src)?,
            bbus: names(dst),
        },
        "bbu2bbu" => PatternDecl::BbuToBbu {
            src: single(src)?,
            dst: single(dst)?,
        },
        _ => return Err(format!("unknown pattern kind '{kind}' (expected p2p, aggregation, multi, bbu2bbu)")),
    })
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got '{s}'")),
    }
}

fn parse_admission(s: &str) -> Result<Vec<(u8, f64)>, String> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let (c, f) = parse_num_pair::<f64>(part).ok_or_else(|| format!("expected CLASS:FRACTION, got '{part}'"))?;
        if c.fract() != 0.0 || !(0.0..NUM_CLASSES as f64).contains(&c) {
            return Err(format!("class {c} outside 0..=15"));
        }
        if !(f > 0.0 && f <= 1.0) {
            return Err(format!("fraction {f} outside (0, 1]"));
        }
        out.push((c as u8, f));
    }
    Ok(out)
}

/// Wraps a string-level parser so its error lands on the attribute.
fn with<T>(e: &Entry<'_>, attr: &str, r: Result<T, String>) -> Result<T, ParseError> {
    r.map_err(|m| ParseError {
        line: e.line,
        field: e.field(attr),
        message: m,
    })
}

#[derive(Default)]
struct Lines {
    node: BTreeMap<String, usize>,
    link: Vec<usize>,
    cell: Vec<usize>,
    source: Vec<usize>,
    session: Vec<usize>,
    event: Vec<usize>,
    override_: Vec<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    Scenario,
    Topology,
    Cells,
    Sync,
    Sessions,
    Engine,
    Events,
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ParseError> {
    let mut sc = Scenario {
        name: String::new(),
        horizon: 0.0,
        seed: 0,
        subframe: 1e-3,
        subframes: None,
        nodes: Vec::new(),
        links: Vec::new(),
        cells: Vec::new(),
        sync: SyncDecl::default(),
        sessions: Vec::new(),
        engine: EngineDecl::default(),
        events: Vec::new(),
    };
    let mut lines = Lines::default();
    let mut section: Option<Section> = None;
    let mut seen_sections = BTreeSet::new();
    let mut seen_keys: BTreeSet<(String, String)> = BTreeSet::new();
    let mut have_name = false;
    let mut have_horizon = false;

    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let s = match name.trim() {
                "scenario" => Section::Scenario,
                "topology" => Section::Topology,
                "cells" => Section::Cells,
                "sync" => Section::Sync,
                "sessions" => Section::Sessions,
                "engine" => Section::Engine,
                "events" => Section::Events,
                other => return err(no, "section", format!("unknown section [{other}]")),
            };
            if !seen_sections.insert(name.trim().to_string()) {
                return err(no, "section", format!("section [{}] repeated", name.trim()));
            }
            section = Some(s);
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return err(no, "syntax", format!("expected 'key = value' or '[section]', got '{content}'"));
        };
        let key = key.trim();
        let mut e = Entry {
            line: no,
            key,
            pos: Vec::new(),
            attrs: BTreeMap::new(),
        };
        for tok in value.split_whitespace() {
            match tok.split_once('=') {
                Some((k, v)) => {
                    if e.attrs.insert(k, v).is_some() {
                        return err(no, e.field(k), "attribute repeated");
                    }
                }
                None => {
                    if !e.attrs.is_empty() {
                        return err(no, key, format!("positional token '{tok}' after attributes"));
                    }
                    e.pos.push(tok)
                }
            }
        }
        let Some(sec) = section else {
            return err(no, key, "entry before any [section]");
        };
        let single = |k: &str| !matches!(k, "node" | "link" | "cell" | "ues" | "source" | "session" | "migrate" | "fail" | "teardown");
        if single(key) && !seen_keys.insert((format!("{sec:?}"), key.to_string())) {
            return err(no, key, "key repeated");
        }
        match sec {
            Section::Scenario => {
                let v = e.positional(0, "value")?;
                e.exact_positionals(1)?;
                match key {
                    "name" => {
                        sc.name = v.to_string();
                        have_name = true;
                    }
                    "horizon" => {
                        sc.horizon = with(&e, "value", v.parse::<f64>().map_err(|_| format!("expected seconds, got '{v}'")))?;
                        if !(sc.horizon > 0.0) || !sc.horizon.is_finite() {
                            return err(no, "horizon", "must be positive");
                        }
                        have_horizon = true;
                    }
                    "seed" => sc.seed = with(&e, "value", v.parse::<u64>().map_err(|_| format!("expected an integer, got '{v}'")))?,
                    "subframe" => {
                        sc.subframe = with(&e, "value", v.parse::<f64>().map_err(|_| format!("expected seconds, got '{v}'")))?;
                        if !(sc.subframe > 0.0) || !sc.subframe.is_finite() {
                            return err(no, "subframe", "must be positive");
                        }
                    }
                    "subframes" => {
                        let n = with(&e, "value", v.parse::<u64>().map_err(|_| format!("expected an integer, got '{v}'")))?;
                        if n == 0 {
                            return err(no, "subframes", "must be at least 1");
                        }
                        sc.subframes = Some(n);
                    }
                    _ => return err(no, key, "unknown key in [scenario]"),
                }
                e.finish()?;
            }
            Section::Topology => match key {
                "node" => {
                    let name = e.positional(0, "node name")?.to_string();
                    let kind_s = e.positional(1, "node kind")?;
                    e.exact_positionals(2)?;
                    let kind = with(&e, "kind", kind_s.parse::<NodeKind>())?;
                    let ports = match e.take_count("ports")? {
                        None => None,
                        Some(p) if p >= 1 && p < u16::MAX as u64 => Some(p as u16),
                        Some(_) => return err(no, "node.ports", "out of range"),
                    };
                    e.finish()?;
                    if lines.node.insert(name.clone(), no).is_some() {
                        return err(no, "node", format!("duplicate node '{name}'"));
                    }
                    sc.nodes.push(NodeDecl { name, kind, ports });
                }
                "link" => {
                    let a = e.positional(0, "first endpoint")?.to_string();
                    let b = e.positional(1, "second endpoint")?.to_string();
                    e.exact_positionals(2)?;
                    let capacity = match e.take_count("capacity")? {
                        Some(c) if c > 0 => c,
                        Some(_) => return err(no, "link.capacity", "must be positive"),
                        None => return err(no, "link.capacity", "required"),
                    };
                    let delay = e.take_f64("delay")?.unwrap_or(0.0);
                    let jitter = e.take_f64("jitter")?.unwrap_or(0.0);
                    if delay < 0.0 {
                        return err(no, "link.delay", "must not be negative");
                    }
                    if jitter < 0.0 {
                        return err(no, "link.jitter", "must not be negative");
                    }
                    let class = match e.take_str("class") {
                        None => LinkClass::Fiber,
                        Some(c) => with(&e, "class", c.parse::<LinkClass>())?,
                    };
                    e.finish()?;
                    lines.link.push(no);
                    sc.links.push(LinkDecl {
                        a,
                        b,
                        params: LinkParams {
                            capacity,
                            propagation_delay: delay,
                            jitter_std: jitter,
                            class,
                        },
                    });
                }
                _ => return err(no, key, "unknown key in [topology] (expected node, link)"),
            },
            Section::Cells => match key {
                "cell" => {
                    let name = e.positional(0, "cell name")?.to_string();
                    e.exact_positionals(1)?;
                    if sc.cells.iter().any(|c| c.name == name) {
                        return err(no, "cell", format!("duplicate cell '{name}'"));
                    }
                    let rrh = match e.take_str("rrh") {
                        Some(r) => r.to_string(),
                        None => return err(no, "cell.rrh", "required"),
                    };
                    let bw = match e.take_f64("bandwidth")? {
                        Some(b) => b,
                        None => return err(no, "cell.bandwidth", "required"),
                    };
                    let antennas = e.take_u32("antennas")?.unwrap_or(1);
                    let Some(mut cfg) = CellConfig::lte(bw, antennas) else {
                        return err(no, "cell.bandwidth", format!("{bw} Hz is not an LTE channel bandwidth"));
                    };
                    if let Some(v) = e.take_u32("iq_bits")? {
                        cfg.iq_bitwidth = v;
                    }
                    if let Some(v) = e.take_f64("sampling_rate")? {
                        cfg.sampling_rate = v;
                    }
                    if let Some(v) = e.take_u32("n_prb")? {
                        cfg.n_prb = v;
                    }
                    if let Some(v) = e.take_u32("res_per_prb")? {
                        cfg.res_per_prb = v;
                    }
                    if let Some(v) = e.take_f64("overhead")? {
                        cfg.transport_overhead_factor = v;
                    }
                    if let Some(v) = e.take_f64("compression")? {
                        cfg.compression_factor = v;
                    }
                    if let Some(v) = e.take_u32("layers")? {
                        cfg.spatial_layers = v;
                    }
                    let scheme = match e.take_str("scheme") {
                        None => SplitScheme::ModulationBits,
                        Some(s) => with(&e, "scheme", s.parse::<SplitScheme>().map_err(|x| x.to_string()))?,
                    };
                    let mut control = match e.take_str("control") {
                        None => None,
                        Some("lte") => Some(ControlSchedule::lte(cfg.n_prb)),
                        Some("none") => Some(ControlSchedule::NONE),
                        Some(o) => return err(no, "cell.control", format!("expected lte or none, got '{o}'")),
                    };
                    let base = control.unwrap_or(ControlSchedule::lte(cfg.n_prb));
                    let pdcch = e.take_u32("pdcch")?;
                    let period = e.take_u32("prach_period")?;
                    let prach = e.take_u32("prach_res")?;
                    if pdcch.is_some() || period.is_some() || prach.is_some() || control.is_none() {
                        control = Some(ControlSchedule {
                            pdcch_res_per_subframe: pdcch.unwrap_or(base.pdcch_res_per_subframe),
                            prach_period: period.unwrap_or(base.prach_period),
                            prach_res: prach.unwrap_or(base.prach_res),
                        });
                    }
                    e.finish()?;
                    lines.cell.push(no);
                    sc.cells.push(CellDecl {
                        name,
                        rrh,
                        config: cfg,
                        scheme,
                        control: control.expect("set above"),
                        ues: Vec::new(),
                    });
                }
                "ues" => {
                    let cell = e.positional(0, "cell name")?;
                    e.exact_positionals(1)?;
                    let Some(idx) = sc.cells.iter().position(|c| c.name == cell) else {
                        return err(no, "ues", format!("unknown cell '{cell}'"));
                    };
                    let count = e.take_u32("count")?.unwrap_or(1);
                    let activity = match e.take_str("activity") {
                        None => Activity::AlwaysOn,
                        Some(s) => with(&e, "activity", parse_activity(s))?,
                    };
                    let mcs = match e.take_str("mcs") {
                        None => McsWalk::fixed(MCS_TABLE.len() - 1),
                        Some(s) => with(&e, "mcs", parse_mcs(s))?,
                    };
                    let demand = match e.take_str("demand") {
                        None => (1, sc.cells[idx].config.n_prb),
                        Some(s) => with(&e, "demand", parse_num_pair::<u32>(s).ok_or_else(|| format!("expected MIN:MAX, got '{s}'")))?,
                    };
                    e.finish()?;
                    let g = UeGroup {
                        count,
                        activity,
                        mcs,
                        demand,
                    };
                    let probe = crate::traffic::UeProfile {
                        ue_id: 0,
                        activity,
                        mcs,
                        demand_prbs: demand,
                    };
                    if let Err(x) = probe.validate() {
                        return err(no, "ues", x.to_string());
                    }
                    sc.cells[idx].ues.push(g);
                }
                _ => return err(no, key, "unknown key in [cells] (expected cell, ues)"),
            },
            Section::Sync => match key {
                "source" => {
                    let node = e.positional(0, "node name")?.to_string();
                    e.exact_positionals(1)?;
                    let rank = e.take::<i32>("rank", "an integer")?.unwrap_or(0);
                    let offset_ppb = e.take_f64("offset")?.unwrap_or(0.0);
                    e.finish()?;
                    lines.source.push(no);
                    sc.sync.sources.push(ClockDecl { node, rank, offset_ppb });
                }
                "regen" => {
                    let v = e.positional(0, "value")?;
                    e.exact_positionals(1)?;
                    let r = with(&e, "value", v.parse::<f64>().map_err(|_| format!("expected a number, got '{v}'")))?;
                    if !(0.0..=1.0).contains(&r) {
                        return err(no, "regen", "must be in [0, 1]");
                    }
                    sc.sync.regen = r;
                    e.finish()?;
                }
                _ => return err(no, key, "unknown key in [sync] (expected source, regen)"),
            },
            Section::Sessions => match key {
                "session" => {
                    let name = e.positional(0, "session name")?.to_string();
                    e.exact_positionals(1)?;
                    if sc.sessions.iter().any(|s| s.name == name) {
                        return err(no, "session", format!("duplicate session '{name}'"));
                    }
                    let pattern = match e.take_str("pattern") {
                        Some(p) => with(&e, "pattern", parse_pattern(p))?,
                        None => return err(no, "session.pattern", "required"),
                    };
                    let ue = e.take_u32("ue")?;
                    let class = e.take::<u8>("class", "a class 0..=15")?.unwrap_or(0);
                    if class as usize >= NUM_CLASSES {
                        return err(no, "session.class", "must be 0..=15");
                    }
                    let bound = match e.take_f64("bound")? {
                        Some(b) if b > 0.0 => b,
                        Some(_) => return err(no, "session.bound", "must be positive"),
                        None => return err(no, "session.bound", "required"),
                    };
                    let scheme = match e.take_str("scheme") {
                        None => None,
                        Some(s) => Some(with(&e, "scheme", s.parse::<SplitScheme>().map_err(|x| x.to_string()))?),
                    };
                    let peak = e.take_f64("peak")?;
                    let mean = e.take_f64("mean")?;
                    let cbr = e.take_f64("cbr")?;
                    for (v, f) in [(peak, "peak"), (mean, "mean"), (cbr, "cbr")] {
                        if matches!(v, Some(x) if x <= 0.0) {
                            return err(no, format!("session.{f}"), "must be positive");
                        }
                    }
                    let frame_bytes = match e.take_count("frame")? {
                        None => 1000,
                        Some(f) if (1..=u16::MAX as u64).contains(&f) => f as u16,
                        Some(_) => return err(no, "session.frame", "must be 1..=65535 bytes"),
                    };
                    let timeout = e.take_f64("timeout")?.unwrap_or(1e-4);
                    let arrival = match e.take_str("arrival") {
                        None => ArrivalMode::Fluid,
                        Some(a) => with(&e, "arrival", a.parse::<ArrivalMode>())?,
                    };
                    if let Err(m) = (RegulatorPolicy {
                        max_frame_bytes: frame_bytes,
                        frame_timeout: timeout,
                    })
                    .validate()
                    {
                        return err(no, "session.timeout", m);
                    }
                    let mandatory = match e.take_str("mandatory") {
                        None => true,
                        Some(m) => with(&e, "mandatory", parse_bool(m))?,
                    };
                    e.finish()?;
                    lines.session.push(no);
                    sc.sessions.push(SessionDecl {
                        name,
                        pattern,
                        ue,
                        class,
                        bound,
                        scheme,
                        peak,
                        mean,
                        cbr,
                        frame_bytes,
                        timeout,
                        arrival,
                        mandatory,
                    });
                }
                _ => return err(no, key, "unknown key in [sessions] (expected session)"),
            },
            Section::Engine => {
                match key {
                    "node" => {
                        let node = e.positional(0, "node name")?.to_string();
                        e.exact_positionals(1)?;
                        let scheduler = match e.take_str("scheduler") {
                            None => None,
                            Some(s) => Some(with(&e, "scheduler", s.parse::<Scheduler>())?),
                        };
                        let queue_bytes = e.take_count("queue_bytes")?;
                        let input_buffer_bytes = e.take_count("input_buffer_bytes")?;
                        let header_delay = e.take_f64("header_delay")?;
                        if matches!(header_delay, Some(d) if d < 0.0) {
                            return err(no, "node.header_delay", "must not be negative");
                        }
                        lines.override_.push(no);
                        sc.engine.overrides.push(NodeOverride {
                            node,
                            scheduler,
                            queue_bytes,
                            input_buffer_bytes,
                            header_delay,
                        });
                    }
                    _ => {
                        let v = e.positional(0, "value")?;
                        e.exact_positionals(1)?;
                        let num = |s: &str| s.parse::<f64>().map_err(|_| format!("expected a number, got '{s}'"));
                        let count = |s: &str| s.parse::<u64>().map_err(|_| format!("expected a whole number, got '{s}'"));
                        match key {
                            "scheduler" => sc.engine.scheduler = with(&e, "value", v.parse::<Scheduler>())?,
                            "queue_bytes" => sc.engine.queue_bytes = with(&e, "value", count(v))?,
                            "input_buffer_bytes" => sc.engine.input_buffer_bytes = with(&e, "value", count(v))?,
                            "header_delay" => {
                                sc.engine.header_delay = with(&e, "value", num(v))?;
                                if !(sc.engine.header_delay >= 0.0) || !sc.engine.header_delay.is_finite() {
                                    return err(no, key, "must not be negative");
                                }
                            }
                            "trace_paths" => sc.engine.trace_paths = with(&e, "value", parse_bool(v))?,
                            "admission" => sc.engine.admission = with(&e, "value", parse_admission(v))?,
                            "drain" => {
                                sc.engine.drain = with(&e, "value", num(v))?;
                                if !(sc.engine.drain >= 0.0) || !sc.engine.drain.is_finite() {
                                    return err(no, key, "must not be negative");
                                }
                            }
                            _ => return err(no, key, "unknown key in [engine]"),
                        }
                    }
                }
                e.finish()?;
            }
            Section::Events => {
                let at_s = e.positional(0, "time")?;
                let at = with(&e, "time", at_s.parse::<f64>().map_err(|_| format!("expected seconds, got '{at_s}'")))?;
                if !(at >= 0.0) || !at.is_finite() {
                    return err(no, format!("{key}.time"), "must not be negative");
                }
                let kind = match key {
                    "migrate" => {
                        let session = e.positional(1, "session name")?.to_string();
                        e.exact_positionals(2)?;
                        let pattern = match e.take_str("pattern") {
                            Some(p) => with(&e, "pattern", parse_pattern(p))?,
                            None => return err(no, "migrate.pattern", "required"),
                        };
                        EventKind::Migrate { session, pattern }
                    }
                    "fail" => {
                        let a = e.positional(1, "first endpoint")?.to_string();
                        let b = e.positional(2, "second endpoint")?.to_string();
                        e.exact_positionals(3)?;
                        EventKind::Fail { a, b }
                    }
                    "teardown" => {
                        let session = e.positional(1, "session name")?.to_string();
                        e.exact_positionals(2)?;
                        EventKind::Teardown { session }
                    }
                    _ => return err(no, key, "unknown key in [events] (expected migrate, fail, teardown)"),
                };
                e.finish()?;
                if let Some(prev) = sc.events.last() {
                    if prev.at > at {
                        return err(no, format!("{key}.time"), "events must be in time order");
                    }
                }
                lines.event.push(no);
                sc.events.push(EventDecl { at, kind });
            }
        }
    }

    if !have_name {
        return err(0, "scenario.name", "required");
    }
    if !have_horizon {
        return err(0, "scenario.horizon", "required");
    }
    for c in &mut sc.cells {
        c.config.subframe_duration = sc.subframe;
        c.config.max_control_res = c.control.max_control_res();
    }
    validate(&sc, &lines)?;
    Ok(sc)
}

fn validate(sc: &Scenario, lines: &Lines) -> Result<(), ParseError> {
    let kind_of = |n: &str| sc.nodes.iter().find(|d| d.name == n).map(|d| d.kind);
    let need = |line: usize, field: &str, n: &str, want: Option<NodeKind>| -> Result<(), ParseError> {
        match (kind_of(n), want) {
            (None, _) => err(line, field, format!("undeclared node '{n}'")),
            (Some(k), Some(w)) if k != w => err(line, field, format!("'{n}' is a {k}, expected a {w}")),
            _ => Ok(()),
        }
    };
    if sc.nodes.is_empty() {
        return err(0, "topology", "no nodes declared");
    }
    for (l, &line) in sc.links.iter().zip(&lines.link) {
        need(line, "link", &l.a, None)?;
        need(line, "link", &l.b, None)?;
        if l.a == l.b {
            return err(line, "link", "a link needs two distinct endpoints");
        }
    }
    let mut rrh_cells = BTreeSet::new();
    for (c, &line) in sc.cells.iter().zip(&lines.cell) {
        need(line, "cell.rrh", &c.rrh, Some(NodeKind::Rrh))?;
        if !rrh_cells.insert(c.rrh.clone()) {
            return err(line, "cell.rrh", format!("'{}' already carries a cell", c.rrh));
        }
        if let Err(x) = c.config.validate() {
            return err(line, "cell", x.to_string());
        }
    }
    for (s, &line) in sc.sync.sources.iter().zip(&lines.source) {
        need(line, "source", &s.node, None)?;
        if kind_of(&s.node) == Some(NodeKind::Rrh) {
            return err(line, "source", format!("'{}' is an RRH; RRHs only receive timing", s.node));
        }
    }
    let check_pattern = |line: usize, field: &str, p: &PatternDecl| -> Result<(), ParseError> {
        let (srcs, dsts, src_kind) = match p {
            PatternDecl::PointToPoint { rrh, bbu } => (vec![rrh.clone()], vec![bbu.clone()], NodeKind::Rrh),
            PatternDecl::Aggregation { rrhs, bbu } => (rrhs.clone(), vec![bbu.clone()], NodeKind::Rrh),
            PatternDecl::MultiBbu { rrh, bbus } => (vec![rrh.clone()], bbus.clone(), NodeKind::Rrh),
            PatternDecl::BbuToBbu { src, dst } => (vec![src.clone()], vec![dst.clone()], NodeKind::Bbu),
        };
        for s in &srcs {
            need(line, field, s, Some(src_kind))?;
        }
        for d in &dsts {
            need(line, field, d, Some(NodeKind::Bbu))?;
        }
        let all: BTreeSet<&String> = srcs.iter().chain(&dsts).collect();
        if all.len() != srcs.len() + dsts.len() {
            return err(line, field, "endpoints repeat");
        }
        Ok(())
    };
    let traffic_ok = |line: usize, s: &SessionDecl, p: &PatternDecl| -> Result<(), ParseError> {
        if s.cbr.is_some() {
            return Ok(());
        }
        if matches!(p, PatternDecl::BbuToBbu { .. }) {
            return err(line, "session.cbr", "BBU-to-BBU sessions need a constant-rate source");
        }
        for src in p.sources() {
            if sc.cell_at(src).is_none() {
                return err(line, "session.pattern", format!("no cell is attached to '{src}' (declare one or set cbr)"));
            }
        }
        Ok(())
    };
    for (s, &line) in sc.sessions.iter().zip(&lines.session) {
        check_pattern(line, "session.pattern", &s.pattern)?;
        traffic_ok(line, s, &s.pattern)?;
        if let (Some(p), Some(m)) = (s.peak, s.mean) {
            if m > p {
                return err(line, "session.mean", "exceeds peak");
            }
        }
    }
    for (o, &line) in sc.engine.overrides.iter().zip(&lines.override_) {
        need(line, "node", &o.node, None)?;
    }
    for (ev, &line) in sc.events.iter().zip(&lines.event) {
        match &ev.kind {
            EventKind::Migrate { session, pattern } => {
                let Some(s) = sc.sessions.iter().find(|s| &s.name == session) else {
                    return err(line, "migrate", format!("unknown session '{session}'"));
                };
                check_pattern(line, "migrate.pattern", pattern)?;
                traffic_ok(line, s, pattern)?;
            }
            EventKind::Teardown { session } => {
                if !sc.sessions.iter().any(|s| &s.name == session) {
                    return err(line, "teardown", format!("unknown session '{session}'"));
                }
            }
            EventKind::Fail { a, b } => {
                need(line, "fail", a, None)?;
                need(line, "fail", b, None)?;
                if !sc.links.iter().any(|l| (&l.a == a && &l.b == b) || (&l.a == b && &l.b == a)) {
                    return err(line, "fail", format!("no link between '{a}' and '{b}'"));
                }
            }
        }
    }
    let _ = &lines.node;
    Ok(())
}
