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

//! Ingress shaping: buffer a per-subframe bit stream and cut it into frames.
//!
//! A frame leaves when it reaches `max_frame_bytes` or when its oldest bit
//! has waited `frame_timeout`, whichever comes first. Timed-out frames are
//! padded up to a whole byte.

use std::fmt;
use std::str::FromStr;

use super::header::FhHeader;
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegulatorPolicy {
    pub max_frame_bytes: u16,
    /// Seconds.
    pub frame_timeout: f64,
}

impl RegulatorPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_frame_bytes < 1 {
            return Err("max_frame_bytes must be at least 1".into());
        }
        if !(self.frame_timeout > 0.0) || !self.frame_timeout.is_finite() {
            return Err("frame_timeout must be positive".into());
        }
        Ok(())
    }
}

/// How a subframe's bits reach the regulator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ArrivalMode {
    /// Spread evenly across the subframe.
    #[default]
    Fluid,
    /// All at the subframe boundary.
    Burst,
}

impl fmt::Display for ArrivalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArrivalMode::Fluid => "fluid",
            ArrivalMode::Burst => "burst",
        })
    }
}

impl FromStr for ArrivalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fluid" => Ok(ArrivalMode::Fluid),
            "burst" => Ok(ArrivalMode::Burst),
            _ => Err(format!("unknown arrival mode '{s}' (expected fluid, burst)")),
        }
    }
}

/// A packet leaving the regulator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Emission {
    pub at: SimTime,
    /// Arrival of the oldest bit in the frame.
    pub created_at: SimTime,
    pub header: FhHeader,
    /// Stream bits carried, before byte padding.
    pub source_bits: u64,
}

/// Iterator over the frames cut from `volumes`. Bit `j` (1-based) of
/// subframe `k` with volume `V` arrives at `k*T + floor((j-1)*T/V)` in fluid
/// mode and at `k*T` in burst mode. Only bits arriving inside `window` are
/// taken.
#[derive(Clone, Debug)]
pub struct Regulator<'a> {
    volumes: &'a [u64],
    subframe: u64,
    arrival: ArrivalMode,
    window: (SimTime, SimTime),
    frame_bits: u64,
    timeout: u64,
    label: u16,
    latency_class: u8,
    seq: u16,
    /// Current subframe and the last bit index taken from it.
    k: usize,
    taken: u64,
    buffered: u64,
    oldest: u64,
    peak_backlog_bits: u64,
}

impl<'a> Regulator<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        volumes: &'a [u64],
        subframe: SimTime,
        arrival: ArrivalMode,
        window: (SimTime, SimTime),
        policy: RegulatorPolicy,
        label: u16,
        latency_class: u8,
    ) -> Self {
        assert!(subframe.0 > 0, "subframe duration must be positive");
        let timeout = SimTime::from_secs(policy.frame_timeout).0.max(1);
        let mut r = Regulator {
            volumes,
            subframe: subframe.0,
            arrival,
            window,
            frame_bits: policy.max_frame_bytes.max(1) as u64 * 8,
            timeout,
            label,
            latency_class: latency_class & 0xF,
            seq: 0,
            k: 0,
            taken: 0,
            buffered: 0,
            oldest: 0,
            peak_backlog_bits: 0,
        };
        r.k = r.first_subframe_in_window();
        r.taken = r.admitted_range(r.k).0;
        r
    }

    /// Largest number of stream bits waiting at any emission instant.
    pub fn peak_backlog_bits(&self) -> u64 {
        self.peak_backlog_bits
    }

    fn first_subframe_in_window(&self) -> usize {
        ((self.window.0 .0 / self.subframe) as usize).min(self.volumes.len())
    }

    fn start_of(&self, k: usize) -> u64 {
        k as u64 * self.subframe
    }

    /// Arrival time of bit `j` (1-based) of subframe `k`.
    fn arrival_time(&self, k: usize, j: u64) -> u64 {
        let v = self.volumes[k];
        match self.arrival {
            ArrivalMode::Burst => self.start_of(k),
            ArrivalMode::Fluid => self.start_of(k) + ((j - 1) as u128 * self.subframe as u128 / v as u128) as u64,
        }
    }

    /// Bits of subframe `k` that have arrived by time `t` inclusive.
    fn count_le(&self, k: usize, t: u64) -> u64 {
        let v = self.volumes[k];
        let start = self.start_of(k);
        if t < start || v == 0 {
            return 0;
        }
        match self.arrival {
            ArrivalMode::Burst => v,
            ArrivalMode::Fluid => {
                let d = (t - start) as u128 + 1;
                let n = (d * v as u128).div_ceil(self.subframe as u128);
                n.min(v as u128) as u64
            }
        }
    }

    fn count_lt(&self, k: usize, t: u64) -> u64 {
        if t == 0 {
            0
        } else {
            self.count_le(k, t - 1)
        }
    }

    /// `(already_excluded, last_admitted)`: bits `excluded+1 ..= last` of
    /// subframe `k` fall inside the window.
    fn admitted_range(&self, k: usize) -> (u64, u64) {
        if k >= self.volumes.len() {
            return (0, 0);
        }
        let lo = self.count_lt(k, self.window.0 .0);
        let hi = self.count_lt(k, self.window.1 .0);
        (lo, hi.max(lo))
    }

    /// Moves the cursor to the next subframe holding an untaken admitted bit.
    fn seek(&mut self) -> bool {
        while self.k < self.volumes.len() {
            let (_, hi) = self.admitted_range(self.k);
            if self.taken < hi {
                return true;
            }
            self.k += 1;
            if self.k < self.volumes.len() {
                self.taken = self.admitted_range(self.k).0;
            }
        }
        false
    }

    fn emit(&mut self, at: u64) -> Emission {
        let bits = self.buffered;
        let mut backlog = bits;
        if self.k < self.volumes.len() {
            let (_, hi) = self.admitted_range(self.k);
            let arrived = self.count_le(self.k, at).min(hi);
            backlog += arrived.saturating_sub(self.taken);
        }
        self.peak_backlog_bits = self.peak_backlog_bits.max(backlog);
        let bytes = bits.div_ceil(8) as u16;
        let e = Emission {
            at: SimTime(at),
            created_at: SimTime(self.oldest),
            header: FhHeader {
                label: self.label,
                seq: self.seq,
                latency_class: self.latency_class,
                flags: 0,
                payload_len: bytes,
            },
            source_bits: bits,
        };
        self.seq = self.seq.wrapping_add(1);
        self.buffered = 0;
        e
    }
}

impl Iterator for Regulator<'_> {
    type Item = Emission;

    fn next(&mut self) -> Option<Emission> {
        if self.buffered == 0 {
            if !self.seek() {
                return None;
            }
            self.oldest = self.arrival_time(self.k, self.taken + 1);
        }
        let deadline = self.oldest + self.timeout;
        loop {
            if !self.seek() {
                return Some(self.emit(deadline));
            }
            let (_, hi) = self.admitted_range(self.k);
            let need = self.frame_bits - self.buffered;
            let next_bit = self.taken + 1;
            if self.arrival_time(self.k, next_bit) > deadline {
                return Some(self.emit(deadline));
            }
            if self.taken + need <= hi {
                let done = self.arrival_time(self.k, self.taken + need);
                if done <= deadline {
                    self.taken += need;
                    self.buffered += need;
                    return Some(self.emit(done));
                }
            }
            if self.arrival_time(self.k, hi) <= deadline {
                // whole remainder of this subframe fits before the deadline
                let got = (hi - self.taken).min(need);
                self.taken += got;
                self.buffered += got;
                if self.buffered == self.frame_bits {
                    let done = self.arrival_time(self.k, self.taken);
                    return Some(self.emit(done));
                }
                continue;
            }
            let by_deadline = self.count_le(self.k, deadline).min(hi);
            let got = by_deadline.saturating_sub(self.taken).min(need);
            self.taken += got;
            self.buffered += got;
            return Some(self.emit(deadline));
        }
    }
}

/// Collects every frame the regulator emits.
pub fn regulate(
    volumes: &[u64],
    subframe: SimTime,
    arrival: ArrivalMode,
    policy: RegulatorPolicy,
    label: u16,
    latency_class: u8,
) -> Vec<Emission> {
    Regulator::new(
        volumes,
        subframe,
        arrival,
        (SimTime::ZERO, SimTime::MAX),
        policy,
        label,
        latency_class,
    )
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MS: SimTime = SimTime(1_000_000_000);

    fn policy(bytes: u16, timeout: f64) -> RegulatorPolicy {
        RegulatorPolicy {
            max_frame_bytes: bytes,
            frame_timeout: timeout,
        }
    }

    #[test]
    fn constant_rate_one_full_frame_per_subframe() {
        let v = vec![8000u64; 20];
        let out = regulate(&v, MS, ArrivalMode::Fluid, policy(1000, 5e-3), 7, 0);
        assert_eq!(out.len(), 20);
        for (k, e) in out.iter().enumerate() {
            assert_eq!(e.header.payload_len, 1000);
            assert_eq!(e.header.seq, k as u16);
            assert_eq!(e.created_at, SimTime(k as u64 * MS.0));
            assert!(e.at < SimTime((k as u64 + 1) * MS.0));
        }
    }

    #[test]
    fn silence_gives_nothing() {
        assert!(regulate(&[0; 50], MS, ArrivalMode::Fluid, policy(100, 1e-3), 1, 0).is_empty());
    }

    #[test]
    fn timeout_pads_to_bytes() {
        let v = [100, 0, 0, 0, 0];
        let out = regulate(&v, MS, ArrivalMode::Fluid, policy(1000, 2e-3), 1, 0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].header.payload_len, 13);
        assert_eq!(out[0].source_bits, 100);
        assert_eq!(out[0].at, SimTime(2 * MS.0));
        assert_eq!(out[0].created_at, SimTime::ZERO);
    }

    #[test]
    fn burst_arrival_emits_back_to_back_at_boundary() {
        let v = [24_000, 0];
        let out = regulate(&v, MS, ArrivalMode::Burst, policy(1000, 1e-4), 1, 3);
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|e| e.at == SimTime::ZERO && e.header.latency_class == 3));
    }

    #[test]
    fn frame_spans_subframes() {
        // 3000 bits per subframe, 1000-byte frames: one frame every 8/3 ms
        let v = [3000u64; 8];
        let out = regulate(&v, MS, ArrivalMode::Fluid, policy(1000, 10e-3), 1, 0);
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|e| e.source_bits == 8000));
    }

    #[test]
    fn window_excludes_outside_bits() {
        let v = [8000u64; 10];
        let r = Regulator::new(
            &v,
            MS,
            ArrivalMode::Fluid,
            (SimTime(2 * MS.0), SimTime(5 * MS.0)),
            policy(1000, 5e-3),
            1,
            0,
        );
        let out: Vec<_> = r.collect();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].created_at, SimTime(2 * MS.0));
        assert_eq!(out.iter().map(|e| e.source_bits).sum::<u64>(), 24_000);
    }

    #[test]
    fn seq_wraps() {
        let v = vec![8u64; 70_000];
        let out = regulate(&v, SimTime(1000), ArrivalMode::Fluid, policy(1, 1.0), 1, 0);
        assert_eq!(out.len(), 70_000);
        assert_eq!(out[65_535].header.seq, 65_535);
        assert_eq!(out[65_536].header.seq, 0);
    }

    proptest! {
        #[test]
        fn bits_conserved_and_time_ordered(
            vols in proptest::collection::vec(0u64..20_000, 1..40),
            bytes in 1u16..3000,
            timeout_us in 1u32..3000,
            burst: bool,
        ) {
            let arrival = if burst { ArrivalMode::Burst } else { ArrivalMode::Fluid };
            let out = regulate(&vols, MS, arrival, policy(bytes, timeout_us as f64 * 1e-6), 9, 1);
            let total: u64 = vols.iter().sum();
            prop_assert_eq!(out.iter().map(|e| e.source_bits).sum::<u64>(), total);
            let timeout = SimTime::from_secs(timeout_us as f64 * 1e-6);
            for w in out.windows(2) {
                prop_assert!(w[0].at <= w[1].at);
                prop_assert!(w[0].created_at <= w[1].created_at);
            }
            for e in &out {
                prop_assert!(e.source_bits > 0);
                prop_assert!(e.source_bits <= bytes as u64 * 8);
                prop_assert!(e.at >= e.created_at);
                prop_assert!(e.at - e.created_at <= timeout);
                prop_assert_eq!(e.header.payload_len as u64, e.source_bits.div_ceil(8));
            }
        }
    }
}
