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

//! Label lookup and per-port class queues shared by every node in the engine.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use super::FhPacket;
use crate::topology::Port;

pub const NUM_CLASSES: usize = 16;

/// `(in_port, label) -> [(out_port, out_label)]`. More than one output
/// replicates the packet; `Port::LOCAL` as output delivers it here.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct ForwardingTable {
    entries: BTreeMap<(Port, u16), Vec<(Port, u16)>>,
}

impl ForwardingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, in_port: Port, label: u16, outputs: Vec<(Port, u16)>) {
        self.entries.insert((in_port, label), outputs);
    }

    pub fn remove(&mut self, in_port: Port, label: u16) -> Option<Vec<(Port, u16)>> {
        self.entries.remove(&(in_port, label))
    }

    /// Removes the entry only while it still maps to `outputs`.
    pub fn remove_if(&mut self, in_port: Port, label: u16, outputs: &[(Port, u16)]) -> bool {
        match self.entries.get(&(in_port, label)) {
            Some(o) if o.as_slice() == outputs => {
                self.entries.remove(&(in_port, label));
                true
            }
            _ => false,
        }
    }

    pub fn lookup(&self, in_port: Port, label: u16) -> Option<&[(Port, u16)]> {
        self.entries.get(&(in_port, label)).map(|v| v.as_slice())
    }

    pub fn contains(&self, in_port: Port, label: u16) -> bool {
        self.entries.contains_key(&(in_port, label))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(Port, u16), &Vec<(Port, u16)>)> {
        self.entries.iter()
    }

    /// Lowest label with no entry on `in_port`.
    pub fn smallest_free_label(&self, in_port: Port) -> Option<u16> {
        let mut want: u32 = 0;
        for &(_, l) in self.entries.range((in_port, 0)..=(in_port, u16::MAX)).map(|(k, _)| k) {
            if l as u32 != want {
                break;
            }
            want += 1;
        }
        u16::try_from(want).ok()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub enum Scheduler {
    /// One queue in arrival order regardless of class.
    Fifo,
    /// Lowest non-empty class first.
    #[default]
    StrictPriority,
    /// Packet-count weights per class; classes past the end weigh 1.
    WeightedRoundRobin(Vec<u32>),
}

impl Scheduler {
    pub fn validate(&self) -> Result<(), String> {
        if let Scheduler::WeightedRoundRobin(w) = self {
            if w.len() > NUM_CLASSES {
                return Err(format!("at most {NUM_CLASSES} weights"));
            }
            if w.contains(&0) {
                return Err("weights must be at least 1".into());
            }
        }
        Ok(())
    }

    fn weight(&self, class: usize) -> u32 {
        match self {
            Scheduler::WeightedRoundRobin(w) => w.get(class).copied().unwrap_or(1).max(1),
            _ => 1,
        }
    }
}

impl fmt::Display for Scheduler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheduler::Fifo => f.write_str("fifo"),
            Scheduler::StrictPriority => f.write_str("strict_priority"),
            Scheduler::WeightedRoundRobin(w) => {
                let parts: Vec<String> = w.iter().map(|x| x.to_string()).collect();
                write!(f, "wrr:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for Scheduler {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let sched = match s {
            "fifo" => Scheduler::Fifo,
            "strict_priority" => Scheduler::StrictPriority,
            _ => match s.strip_prefix("wrr:") {
                Some(rest) => {
                    let w = rest
                        .split(',')
                        .map(|x| x.trim().parse::<u32>().map_err(|_| format!("bad weight '{x}'")))
                        .collect::<Result<Vec<_>, _>>()?;
                    Scheduler::WeightedRoundRobin(w)
                }
                None => return Err(format!("unknown scheduler '{s}' (expected fifo, strict_priority, wrr:W0,W1,..)")),
            },
        };
        sched.validate()?;
        Ok(sched)
    }
}

/// Egress queues of one port, one per latency class, each bounded in wire bytes.
#[derive(Clone, Debug)]
pub struct ClassQueues {
    queues: Vec<VecDeque<(u64, FhPacket)>>,
    bytes: [u64; NUM_CLASSES],
    capacity: u64,
    next_seq: u64,
    wrr_class: usize,
    wrr_credit: u32,
}

impl ClassQueues {
    pub fn new(capacity_bytes_per_class: u64) -> Self {
        ClassQueues {
            queues: vec![VecDeque::new(); NUM_CLASSES],
            bytes: [0; NUM_CLASSES],
            capacity: capacity_bytes_per_class,
            next_seq: 0,
            wrr_class: NUM_CLASSES - 1,
            wrr_credit: 0,
        }
    }

    /// Fails with the packet when its class queue lacks room.
    pub fn push(&mut self, pkt: FhPacket) -> Result<(), FhPacket> {
        let c = (pkt.header.latency_class as usize).min(NUM_CLASSES - 1);
        let b = pkt.wire_bytes();
        if self.bytes[c] + b > self.capacity {
            return Err(pkt);
        }
        self.bytes[c] += b;
        self.queues[c].push_back((self.next_seq, pkt));
        self.next_seq += 1;
        Ok(())
    }

    pub fn pop(&mut self, sched: &Scheduler) -> Option<FhPacket> {
        if self.is_empty() {
            return None;
        }
        let c = match sched {
            Scheduler::Fifo => (0..NUM_CLASSES)
                .filter_map(|c| self.queues[c].front().map(|(s, _)| (*s, c)))
                .min()
                .map(|(_, c)| c)?,
            Scheduler::StrictPriority => (0..NUM_CLASSES).find(|&c| !self.queues[c].is_empty())?,
            Scheduler::WeightedRoundRobin(_) => loop {
                if self.wrr_credit > 0 && !self.queues[self.wrr_class].is_empty() {
                    self.wrr_credit -= 1;
                    break self.wrr_class;
                }
                self.wrr_class = (self.wrr_class + 1) % NUM_CLASSES;
                self.wrr_credit = sched.weight(self.wrr_class);
            },
        };
        let (_, pkt) = self.queues[c].pop_front()?;
        self.bytes[c] -= pkt.wire_bytes();
        Some(pkt)
    }

    pub fn is_empty(&self) -> bool {
        self.queues.iter().all(|q| q.is_empty())
    }

    pub fn len(&self) -> usize {
        self.queues.iter().map(|q| q.len()).sum()
    }

    pub fn class_bytes(&self, class: usize) -> u64 {
        self.bytes[class]
    }

    pub fn total_bytes(&self) -> u64 {
        self.bytes.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &FhPacket> {
        self.queues.iter().flat_map(|q| q.iter().map(|(_, p)| p))
    }

    pub fn drain(&mut self) -> Vec<FhPacket> {
        let mut out: Vec<(u64, FhPacket)> = self.queues.iter_mut().flat_map(|q| q.drain(..)).collect();
        out.sort_by_key(|(s, _)| *s);
        self.bytes = [0; NUM_CLASSES];
        out.into_iter().map(|(_, p)| p).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DropCause {
    Unroutable,
    Overflow,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ForwardResult {
    Delivered(FhPacket),
    Enqueued(Port),
    Dropped(FhPacket, DropCause),
}

/// Lookup and egress state of one node.
#[derive(Clone, Debug)]
pub struct SwitchState {
    pub table: ForwardingTable,
    pub scheduler: Scheduler,
    pub outputs: BTreeMap<Port, ClassQueues>,
    pub down: BTreeSet<Port>,
}

impl SwitchState {
    pub fn new(ports: u16, scheduler: Scheduler, queue_bytes_per_class: u64) -> Self {
        SwitchState {
            table: ForwardingTable::new(),
            scheduler,
            outputs: (0..ports).map(|p| (Port(p), ClassQueues::new(queue_bytes_per_class))).collect(),
            down: BTreeSet::new(),
        }
    }

    /// Relabels `pkt` per the table entry for `(in_port, label)` and places
    /// one copy per output. Unknown entries, missing ports and failed ports
    /// drop the packet as unroutable.
    pub fn forward(&mut self, pkt: FhPacket, in_port: Port) -> Vec<ForwardResult> {
        let outputs = match self.table.lookup(in_port, pkt.header.label) {
            Some(o) if !o.is_empty() => o.to_vec(),
            _ => return vec![ForwardResult::Dropped(pkt, DropCause::Unroutable)],
        };
        let n = outputs.len();
        let mut results = Vec::with_capacity(n);
        let mut pkt = Some(pkt);
        for (i, (port, label)) in outputs.into_iter().enumerate() {
            let mut copy = if i + 1 == n {
                pkt.take().expect("packet consumed once")
            } else {
                pkt.clone().expect("packet present")
            };
            copy.header.label = label;
            if port == Port::LOCAL {
                results.push(ForwardResult::Delivered(copy));
                continue;
            }
            if self.down.contains(&port) {
                results.push(ForwardResult::Dropped(copy, DropCause::Unroutable));
                continue;
            }
            let Some(q) = self.outputs.get_mut(&port) else {
                results.push(ForwardResult::Dropped(copy, DropCause::Unroutable));
                continue;
            };
            match q.push(copy) {
                Ok(()) => results.push(ForwardResult::Enqueued(port)),
                Err(p) => results.push(ForwardResult::Dropped(p, DropCause::Overflow)),
            }
        }
        results
    }
}
