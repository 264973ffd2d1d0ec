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

//! Report assembly and framing-overhead analysis.

use std::io::{self, Write};

use crate::packet::{run, RunOutcome, World, HEADER_LEN};
use crate::session::ControlLogEntry;
use crate::time::{format_ns, SimTime};
use crate::topology::{Direction, PhysicalTopology};

/// Fraction of wire bits that are payload: `L / (L + H)`.
pub fn efficiency(payload_len_bytes: u64, header_len_bytes: u64) -> f64 {
    payload_len_bytes as f64 / (payload_len_bytes + header_len_bytes) as f64
}

/// Nearest-rank percentile of ascending `sorted`: the value at rank
/// `ceil(p * n / 100)`, counting from 1.
pub fn nearest_rank(sorted: &[u64], p: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = (p * n as f64 / 100.0).ceil() as usize;
    Some(sorted[rank.clamp(1, n) - 1])
}

/// Picosecond order statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatencySummary {
    pub count: u64,
    pub min: u64,
    /// Floor of the arithmetic mean.
    pub mean: u64,
    pub p50: u64,
    pub p99: u64,
    pub max: u64,
}

impl LatencySummary {
    pub fn from_samples(samples: &[u64]) -> Option<Self> {
        let mut s = samples.to_vec();
        s.sort_unstable();
        Self::from_sorted(&s)
    }

    pub fn from_sorted(s: &[u64]) -> Option<Self> {
        if s.is_empty() {
            return None;
        }
        let sum: u128 = s.iter().map(|&x| x as u128).sum();
        Some(LatencySummary {
            count: s.len() as u64,
            min: s[0],
            mean: (sum / s.len() as u128) as u64,
            p50: nearest_rank(s, 50.0)?,
            p99: nearest_rank(s, 99.0)?,
            max: s[s.len() - 1],
        })
    }
}

/// Which engine flows make up a reported session.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionBinding {
    pub session_id: u16,
    pub name: String,
    pub latency_class: u8,
    pub bound: SimTime,
    pub flows: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionRecord {
    pub session_id: u16,
    pub name: String,
    pub latency_class: u8,
    pub bound: SimTime,
    pub injected: u64,
    pub delivered: u64,
    pub dropped_unroutable: u64,
    pub dropped_overflow: u64,
    pub in_flight: u64,
    pub latency: Option<LatencySummary>,
    pub violations: u64,
    pub out_of_order: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkRecord {
    /// `from>to` node names.
    pub name: String,
    pub utilization: f64,
    pub peak_queue_bytes: u64,
    pub packets: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GlobalRecord {
    pub injected: u64,
    pub delivered: u64,
    pub dropped_unroutable: u64,
    pub dropped_overflow: u64,
    pub in_flight: u64,
    pub offered_payload_bits: u64,
    pub carried_payload_bits: u64,
    pub carried_wire_bits: u64,
    /// Header bits over wire bits of delivered packets.
    pub header_overhead_ratio: f64,
    pub violations: u64,
    pub control_ops: u64,
}

impl GlobalRecord {
    pub fn efficiency(&self) -> f64 {
        if self.carried_wire_bits == 0 {
            0.0
        } else {
            self.carried_payload_bits as f64 / self.carried_wire_bits as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub sessions: Vec<SessionRecord>,
    pub links: Vec<LinkRecord>,
    pub global: GlobalRecord,
}

pub fn assemble_report(
    outcome: &RunOutcome,
    topo: &PhysicalTopology,
    bindings: &[SessionBinding],
    control_log: &[ControlLogEntry],
) -> MetricsReport {
    let mut sessions = Vec::with_capacity(bindings.len());
    for b in bindings {
        let mut r = SessionRecord {
            session_id: b.session_id,
            name: b.name.clone(),
            latency_class: b.latency_class,
            bound: b.bound,
            injected: 0,
            delivered: 0,
            dropped_unroutable: 0,
            dropped_overflow: 0,
            in_flight: 0,
            latency: None,
            violations: 0,
            out_of_order: 0,
        };
        let mut samples = Vec::new();
        for f in b.flows.iter().filter_map(|f| outcome.flows.get(f)) {
            r.injected += f.injected;
            r.delivered += f.delivered;
            r.dropped_unroutable += f.dropped_unroutable;
            r.dropped_overflow += f.dropped_overflow;
            r.in_flight += f.in_flight;
            r.out_of_order += f.out_of_order;
            samples.extend_from_slice(&f.latencies);
        }
        r.violations = samples.iter().filter(|&&l| l > b.bound.0).count() as u64;
        r.latency = LatencySummary::from_samples(&samples);
        sessions.push(r);
    }
    let links = outcome
        .links
        .iter()
        .map(|(dl, s)| {
            let l = topo.link(dl.link);
            let (from, to) = match dl.dir {
                Direction::AToB => (l.a.0, l.b.0),
                Direction::BToA => (l.b.0, l.a.0),
            };
            LinkRecord {
                name: format!("{}>{}", topo.name(from), topo.name(to)),
                utilization: s.utilization.clamp(0.0, 1.0),
                peak_queue_bytes: s.peak_queue_bytes,
                packets: s.packets,
            }
        })
        .collect();
    let t = outcome.total();
    let mut g = GlobalRecord {
        injected: t.injected,
        delivered: t.delivered,
        dropped_unroutable: t.dropped_unroutable,
        dropped_overflow: t.dropped_overflow,
        in_flight: t.in_flight,
        offered_payload_bits: t.injected_payload_bits,
        carried_payload_bits: t.delivered_payload_bits,
        carried_wire_bits: t.delivered_wire_bits,
        header_overhead_ratio: 0.0,
        violations: sessions.iter().map(|s| s.violations).sum(),
        control_ops: control_log.len() as u64,
    };
    if g.carried_wire_bits > 0 {
        g.header_overhead_ratio = (g.carried_wire_bits - g.carried_payload_bits) as f64 / g.carried_wire_bits as f64;
    }
    MetricsReport {
        sessions,
        links,
        global: g,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub frame_size: u16,
    pub efficiency: f64,
    /// Over every delivered packet, picoseconds.
    pub p99: Option<u64>,
}

/// Re-runs `world` once per frame size with every regulator capped at that
/// size, measuring carried payload over carried wire bits.
pub fn overhead_sweep(world: &World, horizon: SimTime, frame_sizes: &[u16]) -> Result<Vec<SweepPoint>, String> {
    let mut out = Vec::with_capacity(frame_sizes.len());
    for &size in frame_sizes {
        if (size as usize) < HEADER_LEN {
            return Err(format!("frame size {size} is below the {HEADER_LEN}-byte header"));
        }
        let mut w = world.clone();
        for s in &mut w.sources {
            s.policy.max_frame_bytes = size;
        }
        let o = run(&w, horizon);
        let t = o.total();
        let mut lat: Vec<u64> = o.flows.values().flat_map(|f| f.latencies.iter().copied()).collect();
        lat.sort_unstable();
        out.push(SweepPoint {
            frame_size: size,
            efficiency: if t.delivered_wire_bits == 0 {
                0.0
            } else {
                t.delivered_payload_bits as f64 / t.delivered_wire_bits as f64
            },
            p99: nearest_rank(&lat, 99.0),
        });
    }
    Ok(out)
}

fn opt_ns(v: Option<u64>) -> String {
    v.map(format_ns).unwrap_or_default()
}

pub fn write_sessions_csv<W: Write>(w: &mut W, r: &MetricsReport) -> io::Result<()> {
    writeln!(
        w,
        "session_id,name,latency_class,bound_ns,count,delivered,dropped_unroutable,dropped_overflow,in_flight,min_ns,mean_ns,p50_ns,p99_ns,max_ns,violations"
    )?;
    for s in &r.sessions {
        let l = s.latency;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.session_id,
            s.name,
            s.latency_class,
            format_ns(s.bound.0),
            s.injected,
            s.delivered,
            s.dropped_unroutable,
            s.dropped_overflow,
            s.in_flight,
            opt_ns(l.map(|x| x.min)),
            opt_ns(l.map(|x| x.mean)),
            opt_ns(l.map(|x| x.p50)),
            opt_ns(l.map(|x| x.p99)),
            opt_ns(l.map(|x| x.max)),
            s.violations
        )?;
    }
    Ok(())
}

pub fn write_links_csv<W: Write>(w: &mut W, r: &MetricsReport) -> io::Result<()> {
    writeln!(w, "link,utilization,peak_queue_bytes,packets")?;
    for l in &r.links {
        writeln!(w, "{},{:.6},{},{}", l.name, l.utilization, l.peak_queue_bytes, l.packets)?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(w: &mut W, r: &MetricsReport) -> io::Result<()> {
    let g = &r.global;
    writeln!(w, "metric,value")?;
    writeln!(w, "injected,{}", g.injected)?;
    writeln!(w, "delivered,{}", g.delivered)?;
    writeln!(w, "dropped_unroutable,{}", g.dropped_unroutable)?;
    writeln!(w, "dropped_overflow,{}", g.dropped_overflow)?;
    writeln!(w, "in_flight,{}", g.in_flight)?;
    writeln!(w, "offered_payload_bits,{}", g.offered_payload_bits)?;
    writeln!(w, "carried_payload_bits,{}", g.carried_payload_bits)?;
    writeln!(w, "carried_wire_bits,{}", g.carried_wire_bits)?;
    writeln!(w, "header_overhead_ratio,{:.9}", g.header_overhead_ratio)?;
    writeln!(w, "efficiency,{:.9}", g.efficiency())?;
    writeln!(w, "violations,{}", g.violations)?;
    writeln!(w, "control_ops,{}", g.control_ops)?;
    Ok(())
}

pub fn write_control_csv<W: Write>(w: &mut W, log: &[ControlLogEntry]) -> io::Result<()> {
    writeln!(w, "time_ns,op,session_id,outcome,path")?;
    for e in log {
        let id = e.session_id.map(|s| s.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{},{}", format_ns(e.time.0), e.op, id, e.outcome, e.path)?;
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(w: &mut W, points: &[SweepPoint]) -> io::Result<()> {
    writeln!(w, "frame_size,efficiency,p99_ns")?;
    for p in points {
        writeln!(w, "{},{:.9},{}", p.frame_size, p.efficiency, opt_ns(p.p99))?;
    }
    Ok(())
}
