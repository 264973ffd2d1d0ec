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

use std::fmt::Write;

use super::*;

fn activity(a: &Activity) -> String {
    match a {
        Activity::AlwaysOn => "always_on".into(),
        Activity::AlwaysOff => "always_off".into(),
        Activity::Markov { mean_on, mean_off } => format!("markov:{mean_on}:{mean_off}"),
    }
}

pub(super) fn pattern(p: &PatternDecl) -> String {
    match p {
        PatternDecl::PointToPoint { rrh, bbu } => format!("p2p:{rrh}>{bbu}"),
        PatternDecl::Aggregation { rrhs, bbu } => format!("aggregation:{}>{bbu}", rrhs.join(",")),
        PatternDecl::MultiBbu { rrh, bbus } => format!("multi:{rrh}>{}", bbus.join(",")),
        PatternDecl::BbuToBbu { src, dst } => format!("bbu2bbu:{src}>{dst}"),
    }
}

/// Canonical text form. Every field is written explicitly, so parsing the
/// result yields an equal [`Scenario`].
pub fn render(sc: &Scenario) -> String {
    let mut o = String::new();
    let _ = render_into(sc, &mut o);
    o
}

fn render_into(sc: &Scenario, o: &mut String) -> std::fmt::Result {
    writeln!(o, "[scenario]")?;
    writeln!(o, "name = {}", sc.name)?;
    writeln!(o, "horizon = {}", sc.horizon)?;
    writeln!(o, "seed = {}", sc.seed)?;
    writeln!(o, "subframe = {}", sc.subframe)?;
    if let Some(n) = sc.subframes {
        writeln!(o, "subframes = {n}")?;
    }

    writeln!(o, "\n[topology]")?;
    for n in &sc.nodes {
        write!(o, "node = {} {}", n.name, n.kind)?;
        if let Some(p) = n.ports {
            write!(o, " ports={p}")?;
        }
        writeln!(o)?;
    }
    for l in &sc.links {
        let p = &l.params;
        writeln!(
            o,
            "link = {} {} capacity={} delay={} jitter={} class={}",
            l.a, l.b, p.capacity, p.propagation_delay, p.jitter_std, p.class
        )?;
    }

    if !sc.cells.is_empty() {
        writeln!(o, "\n[cells]")?;
    }
    for c in &sc.cells {
        let k = &c.config;
        writeln!(
            o,
            "cell = {} rrh={} bandwidth={} antennas={} iq_bits={} sampling_rate={} n_prb={} res_per_prb={} \
             overhead={} compression={} layers={} scheme={} pdcch={} prach_period={} prach_res={}",
            c.name,
            c.rrh,
            k.radio_bandwidth,
            k.n_antennas,
            k.iq_bitwidth,
            k.sampling_rate,
            k.n_prb,
            k.res_per_prb,
            k.transport_overhead_factor,
            k.compression_factor,
            k.spatial_layers,
            c.scheme,
            c.control.pdcch_res_per_subframe,
            c.control.prach_period,
            c.control.prach_res
        )?;
        for g in &c.ues {
            writeln!(
                o,
                "ues = {} count={} activity={} mcs=walk:{}:{}:{} demand={}:{}",
                c.name,
                g.count,
                activity(&g.activity),
                g.mcs.start_index,
                g.mcs.step_prob,
                g.mcs.max_step,
                g.demand.0,
                g.demand.1
            )?;
        }
    }

    writeln!(o, "\n[sync]")?;
    for s in &sc.sync.sources {
        writeln!(o, "source = {} rank={} offset={}", s.node, s.rank, s.offset_ppb)?;
    }
    writeln!(o, "regen = {}", sc.sync.regen)?;

    if !sc.sessions.is_empty() {
        writeln!(o, "\n[sessions]")?;
    }
    for s in &sc.sessions {
        write!(o, "session = {} pattern={}", s.name, pattern(&s.pattern))?;
        if let Some(u) = s.ue {
            write!(o, " ue={u}")?;
        }
        write!(o, " class={} bound={}", s.class, s.bound)?;
        if let Some(x) = &s.scheme {
            write!(o, " scheme={x}")?;
        }
        for (k, v) in [("peak", s.peak), ("mean", s.mean), ("cbr", s.cbr)] {
            if let Some(v) = v {
                write!(o, " {k}={v}")?;
            }
        }
        writeln!(
            o,
            " frame={} timeout={} arrival={} mandatory={}",
            s.frame_bytes, s.timeout, s.arrival, s.mandatory
        )?;
    }

    let e = &sc.engine;
    writeln!(o, "\n[engine]")?;
    writeln!(o, "scheduler = {}", e.scheduler)?;
    writeln!(o, "queue_bytes = {}", e.queue_bytes)?;
    writeln!(o, "input_buffer_bytes = {}", e.input_buffer_bytes)?;
    writeln!(o, "header_delay = {}", e.header_delay)?;
    writeln!(o, "trace_paths = {}", e.trace_paths)?;
    if !e.admission.is_empty() {
        let parts: Vec<String> = e.admission.iter().map(|(c, f)| format!("{c}:{f}")).collect();
        writeln!(o, "admission = {}", parts.join(","))?;
    }
    writeln!(o, "drain = {}", e.drain)?;
    for n in &e.overrides {
        write!(o, "node = {}", n.node)?;
        if let Some(s) = &n.scheduler {
            write!(o, " scheduler={s}")?;
        }
        if let Some(q) = n.queue_bytes {
            write!(o, " queue_bytes={q}")?;
        }
        if let Some(q) = n.input_buffer_bytes {
            write!(o, " input_buffer_bytes={q}")?;
        }
        if let Some(d) = n.header_delay {
            write!(o, " header_delay={d}")?;
        }
        writeln!(o)?;
    }

    if !sc.events.is_empty() {
        writeln!(o, "\n[events]")?;
    }
    for ev in &sc.events {
        match &ev.kind {
            EventKind::Migrate { session, pattern: p } => {
                writeln!(o, "migrate = {} {} pattern={}", ev.at, session, pattern(p))?
            }
            EventKind::Fail { a, b } => writeln!(o, "fail = {} {} {}", ev.at, a, b)?,
            EventKind::Teardown { session } => writeln!(o, "teardown = {} {}", ev.at, session)?,
        }
    }
    Ok(())
}
