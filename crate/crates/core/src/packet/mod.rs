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

//! Payload plane: framing, per-node forwarding state and the event loop.

pub mod engine;
pub mod header;
pub mod regulator;
pub mod switch;

pub use engine::{run, ControlAction, EngineConfig, FlowStats, NodeConfig, RunOutcome, SourceSpec, TimedAction, World};
pub use header::{deserialize_header, serialize_header, FhHeader, HeaderError, HEADER_LEN};
pub use regulator::{regulate, ArrivalMode, Emission, Regulator, RegulatorPolicy};
pub use switch::{ClassQueues, DropCause, ForwardResult, ForwardingTable, Scheduler, SwitchState, NUM_CLASSES};

use crate::time::SimTime;
use crate::topology::NodeId;

/// A framed unit of payload in transit.
#[derive(Clone, Debug, PartialEq)]
pub struct FhPacket {
    pub header: FhHeader,
    /// Engine flow the packet was injected for.
    pub flow: u32,
    pub created_at: SimTime,
    pub delivered_at: Option<SimTime>,
    /// Stream bits carried before byte padding.
    pub source_bits: u64,
    /// Nodes visited, recorded only when path tracing is on.
    pub trace: Option<Vec<NodeId>>,
}

impl FhPacket {
    pub fn payload_bits(&self) -> u64 {
        self.header.payload_len as u64 * 8
    }

    /// Payload plus header, as clocked onto a link.
    pub fn wire_bytes(&self) -> u64 {
        self.header.payload_len as u64 + HEADER_LEN as u64
    }

    pub fn wire_bits(&self) -> u64 {
        self.wire_bytes() * 8
    }
}
