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

//! Integer simulation time.
//!
//! All timestamps inside the engine and the path computation are whole
//! picoseconds. Integer time keeps event ordering and latency sums exact, so
//! two algebraically equal path costs compare equal.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

pub const PS_PER_SEC: u64 = 1_000_000_000_000;
pub const PS_PER_NS: u64 = 1_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    /// Rounds to the nearest picosecond. Negative and NaN inputs clamp to zero.
    pub fn from_secs(secs: f64) -> Self {
        if !(secs > 0.0) {
            return SimTime::ZERO;
        }
        let ps = (secs * PS_PER_SEC as f64).round();
        if ps >= u64::MAX as f64 {
            SimTime::MAX
        } else {
            SimTime(ps as u64)
        }
    }

    pub fn from_nanos(ns: u64) -> Self {
        SimTime(ns * PS_PER_NS)
    }

    pub fn as_ps(self) -> u64 {
        self.0
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / PS_PER_SEC as f64
    }

    pub fn as_nanos_f64(self) -> f64 {
        self.0 as f64 / PS_PER_NS as f64
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 = self.0.saturating_add(rhs.0);
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", format_ns(self.0))
    }
}

/// Picoseconds rendered as nanoseconds with three fixed decimals.
pub fn format_ns(ps: u64) -> String {
    format!("{}.{:03}", ps / PS_PER_NS, ps % PS_PER_NS)
}

/// Time to clock `bits` onto a link of `capacity_bps`, rounded up to a whole
/// picosecond so that a non-empty frame never serializes in zero time.
pub fn serialization_time(bits: u64, capacity_bps: u64) -> SimTime {
    debug_assert!(capacity_bps > 0);
    let num = bits as u128 * PS_PER_SEC as u128;
    let den = capacity_bps as u128;
    SimTime(num.div_ceil(den) as u64)
}
