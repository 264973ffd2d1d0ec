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

//! Fronthaul payload volumes per function-splitting scheme.
//!
//! A cell produces one [`SubframeLoad`] per subframe (which UEs got how many
//! PRBs at which MCS, plus periodic control REs). The split scheme decides how
//! many bits that load becomes on the fronthaul: time-domain I/Q is constant,
//! resource-element extraction tracks the occupied grid, modulation bits and
//! PDU-level splits track the information content.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrafficError {
    #[error("invalid cell configuration: {0}")]
    InvalidCell(String),
    #[error("invalid split scheme: {0}")]
    InvalidScheme(String),
    #[error("invalid MCS entry: modulation order {order}, code rate {code_rate}")]
    InvalidMcs { order: u8, code_rate: f64 },
    #[error("subframe {subframe}: {allocated} PRBs allocated but the cell has {available}")]
    PrbBudgetExceeded {
        subframe: u64,
        allocated: u64,
        available: u32,
    },
    #[error("invalid UE profile {ue_id}: {reason}")]
    InvalidProfile { ue_id: u32, reason: String },
}

/// Radio and transport parameters of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellConfig {
    /// Nominal channel bandwidth in Hz. Informational; the I/Q rate is
    /// driven by `sampling_rate`.
    pub radio_bandwidth: f64,
    /// Complex samples per second per antenna.
    pub sampling_rate: f64,
    pub n_antennas: u32,
    /// Bits per I or per Q component.
    pub iq_bitwidth: u32,
    pub n_prb: u32,
    /// Resource elements per PRB per subframe.
    pub res_per_prb: u32,
    /// Subframe duration in seconds.
    pub subframe_duration: f64,
    /// Line-rate multiplier applied to time-domain I/Q (control words, line code).
    pub transport_overhead_factor: f64,
    /// I/Q compression multiplier in (0, 1].
    pub compression_factor: f64,
    /// Spatial layers carried by modulation-bit and PDU splits.
    pub spatial_layers: u32,
    /// Largest control RE count a subframe can carry (PDCCH plus PRACH). Only
    /// used to size the peak rate of load-dependent schemes.
    pub max_control_res: u32,
}

/// LTE channel bandwidths with their standard sampling rates and PRB counts.
const LTE_NUMEROLOGY: [(f64, f64, u32); 6] = [
    (1.4e6, 1.92e6, 6),
    (3e6, 3.84e6, 15),
    (5e6, 7.68e6, 25),
    (10e6, 15.36e6, 50),
    (15e6, 23.04e6, 75),
    (20e6, 30.72e6, 100),
];

pub const DEFAULT_PDCCH_RES: u32 = 2400;
/// Two OFDM symbols of PDCCH across the twelve subcarriers of every PRB.
pub const PDCCH_RES_PER_PRB: u32 = 24;
pub const DEFAULT_PRACH_RES: u32 = 839;
pub const DEFAULT_PRACH_PERIOD: u32 = 10;

impl CellConfig {
    /// LTE-like cell with 15-bit I/Q, 168 REs per PRB, 1 ms subframes and
    /// the 16/15 x 10/8 framing and line-code overhead of constant-bit-rate
    /// fronthaul. Returns `None` for a bandwidth that is not an LTE channel.
    pub fn lte(radio_bandwidth: f64, n_antennas: u32) -> Option<Self> {
        let &(bw, fs, prb) = LTE_NUMEROLOGY
            .iter()
            .find(|(bw, _, _)| (bw - radio_bandwidth).abs() < 1.0)?;
        Some(CellConfig {
            radio_bandwidth: bw,
            sampling_rate: fs,
            n_antennas,
            iq_bitwidth: 15,
            n_prb: prb,
            res_per_prb: 168,
            subframe_duration: 1e-3,
            transport_overhead_factor: 4.0 / 3.0,
            compression_factor: 1.0,
            spatial_layers: 1,
            max_control_res: ControlSchedule::lte(prb).max_control_res(),
        })
    }

    pub fn lte_20mhz(n_antennas: u32) -> Self {
        Self::lte(20e6, n_antennas).expect("20 MHz is in the numerology table")
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        let bad = |msg: &str| Err(TrafficError::InvalidCell(msg.to_string()));
        if !(self.sampling_rate > 0.0) || !self.sampling_rate.is_finite() {
            return bad("sampling_rate must be positive");
        }
        if self.n_antennas < 1 {
            return bad("n_antennas must be at least 1");
        }
        if self.iq_bitwidth < 1 {
            return bad("iq_bitwidth must be at least 1");
        }
        if self.n_prb < 1 {
            return bad("n_prb must be at least 1");
        }
        if self.res_per_prb < 1 {
            return bad("res_per_prb must be at least 1");
        }
        if self.spatial_layers < 1 {
            return bad("spatial_layers must be at least 1");
        }
        if !(self.subframe_duration > 0.0) || !self.subframe_duration.is_finite() {
            return bad("subframe_duration must be positive");
        }
        if !(self.transport_overhead_factor >= 1.0) || !self.transport_overhead_factor.is_finite() {
            return bad("transport_overhead_factor must be >= 1");
        }
        if !(self.compression_factor > 0.0 && self.compression_factor <= 1.0) {
            return bad("compression_factor must be in (0, 1]");
        }
        Ok(())
    }

    fn iq_bits_per_re(&self) -> f64 {
        2.0 * self.iq_bitwidth as f64 * self.n_antennas as f64
    }
}

/// Where the RRH/BBU function boundary sits, and so what crosses the fronthaul.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SplitScheme {
    /// Time-domain I/Q samples at the full sampling rate.
    ClassicalIQ,
    /// Time-domain I/Q with the guard band filtered out.
    FilteredIQ { filter_factor: f64 },
    /// Frequency-domain I/Q of occupied resource elements only.
    ReExtraction,
    /// Modulation information bits.
    ModulationBits,
    /// MAC/L3 PDUs; with `code_rate_applied` the channel-code redundancy is removed.
    PduLevel { code_rate_applied: bool },
}

pub const DEFAULT_FILTER_FACTOR: f64 = 0.5;

impl SplitScheme {
    pub fn filtered_iq() -> Self {
        SplitScheme::FilteredIQ {
            filter_factor: DEFAULT_FILTER_FACTOR,
        }
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        if let SplitScheme::FilteredIQ { filter_factor } = *self {
            if !(filter_factor > 0.0 && filter_factor <= 1.0) {
                return Err(TrafficError::InvalidScheme(format!(
                    "filter_factor {filter_factor} outside (0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn is_load_dependent(&self) -> bool {
        !matches!(self, SplitScheme::ClassicalIQ | SplitScheme::FilteredIQ { .. })
    }
}

impl fmt::Display for SplitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitScheme::ClassicalIQ => write!(f, "classical_iq"),
            SplitScheme::FilteredIQ { filter_factor } => write!(f, "filtered_iq:{filter_factor}"),
            SplitScheme::ReExtraction => write!(f, "re_extraction"),
            SplitScheme::ModulationBits => write!(f, "modulation_bits"),
            SplitScheme::PduLevel { code_rate_applied: true } => write!(f, "pdu_level"),
            SplitScheme::PduLevel { code_rate_applied: false } => write!(f, "pdu_level:uncoded"),
        }
    }
}

impl FromStr for SplitScheme {
    type Err = TrafficError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let scheme = match (name, arg) {
            ("classical_iq", None) => SplitScheme::ClassicalIQ,
            ("filtered_iq", None) => SplitScheme::filtered_iq(),
            ("filtered_iq", Some(a)) => SplitScheme::FilteredIQ {
                filter_factor: a
                    .parse()
                    .map_err(|_| TrafficError::InvalidScheme(format!("bad filter factor '{a}'")))?,
            },
            ("re_extraction", None) => SplitScheme::ReExtraction,
            ("modulation_bits", None) => SplitScheme::ModulationBits,
            ("pdu_level", None) | ("pdu_level", Some("coded")) => SplitScheme::PduLevel {
                code_rate_applied: true,
            },
            ("pdu_level", Some("uncoded")) => SplitScheme::PduLevel {
                code_rate_applied: false,
            },
            _ => return Err(TrafficError::InvalidScheme(format!("unknown scheme '{s}'"))),
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McsEntry {
    /// Bits per constellation symbol: 2, 4 or 6.
    pub modulation_order: u8,
    pub code_rate: f64,
}

impl McsEntry {
    pub fn new(modulation_order: u8, code_rate: f64) -> Result<Self, TrafficError> {
        let entry = McsEntry {
            modulation_order,
            code_rate,
        };
        entry.validate()?;
        Ok(entry)
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        if !matches!(self.modulation_order, 2 | 4 | 6) || !(self.code_rate > 0.0 && self.code_rate <= 1.0) {
            return Err(TrafficError::InvalidMcs {
                order: self.modulation_order,
                code_rate: self.code_rate,
            });
        }
        Ok(())
    }
}

/// QPSK, 16QAM, 64QAM. The UE channel process walks over these indices.
pub const MCS_TABLE: [McsEntry; 3] = [
    McsEntry {
        modulation_order: 2,
        code_rate: 0.5,
    },
    McsEntry {
        modulation_order: 4,
        code_rate: 0.5,
    },
    McsEntry {
        modulation_order: 6,
        code_rate: 0.75,
    },
];

/// Control channels are QPSK-mapped.
const CONTROL_BITS_PER_RE: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Allocation {
    pub ue_id: u32,
    pub n_prbs: u32,
    pub mcs: McsEntry,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SubframeLoad {
    pub subframe_index: u64,
    pub allocations: Vec<Allocation>,
    /// REs carrying periodic control (PDCCH region, PRACH when scheduled).
    pub control_res: u32,
}

impl SubframeLoad {
    pub fn empty(subframe_index: u64) -> Self {
        SubframeLoad {
            subframe_index,
            ..Default::default()
        }
    }

    pub fn allocated_prbs(&self) -> u64 {
        self.allocations.iter().map(|a| a.n_prbs as u64).sum()
    }

    /// Only `ue_id`'s allocations; control is cell-wide and is dropped.
    pub fn for_ue(&self, ue_id: u32) -> SubframeLoad {
        SubframeLoad {
            subframe_index: self.subframe_index,
            allocations: self.allocations.iter().filter(|a| a.ue_id == ue_id).copied().collect(),
            control_res: 0,
        }
    }

    pub fn validate(&self, cell: &CellConfig) -> Result<(), TrafficError> {
        let allocated = self.allocated_prbs();
        if allocated > cell.n_prb as u64 {
            return Err(TrafficError::PrbBudgetExceeded {
                subframe: self.subframe_index,
                allocated,
                available: cell.n_prb,
            });
        }
        for a in &self.allocations {
            a.mcs.validate()?;
        }
        Ok(())
    }
}

/// Fronthaul payload bits produced by `load` in one subframe, rounded to the
/// nearest whole bit.
pub fn subframe_volume(scheme: SplitScheme, cell: &CellConfig, load: &SubframeLoad) -> Result<u64, TrafficError> {
    cell.validate()?;
    scheme.validate()?;
    load.validate(cell)?;
    Ok(volume_bits(scheme, cell, load).round() as u64)
}

fn classical_rate(cell: &CellConfig) -> f64 {
    cell.sampling_rate * cell.iq_bits_per_re() * cell.transport_overhead_factor * cell.compression_factor
}

fn volume_bits(scheme: SplitScheme, cell: &CellConfig, load: &SubframeLoad) -> f64 {
    let res_per_prb = cell.res_per_prb as f64;
    let layers = cell.spatial_layers as f64;
    match scheme {
        SplitScheme::ClassicalIQ => classical_rate(cell) * cell.subframe_duration,
        SplitScheme::FilteredIQ { filter_factor } => classical_rate(cell) * cell.subframe_duration * filter_factor,
        SplitScheme::ReExtraction => {
            let res = load.allocated_prbs() as f64 * res_per_prb + load.control_res as f64;
            res * cell.iq_bits_per_re() * cell.compression_factor
        }
        SplitScheme::ModulationBits => {
            let data: f64 = load
                .allocations
                .iter()
                .map(|a| a.n_prbs as f64 * res_per_prb * a.mcs.modulation_order as f64 * layers)
                .sum();
            data + load.control_res as f64 * CONTROL_BITS_PER_RE
        }
        SplitScheme::PduLevel { code_rate_applied } => load
            .allocations
            .iter()
            .map(|a| {
                let rate = if code_rate_applied { a.mcs.code_rate } else { 1.0 };
                a.n_prbs as f64 * res_per_prb * a.mcs.modulation_order as f64 * layers * rate
            })
            .sum(),
    }
}

/// Sustained bits/second at the heaviest load the cell admits: every PRB at
/// the top MCS and `max_control_res` control REs.
pub fn peak_rate(scheme: SplitScheme, cell: &CellConfig) -> Result<f64, TrafficError> {
    cell.validate()?;
    scheme.validate()?;
    match scheme {
        SplitScheme::ClassicalIQ => Ok(classical_rate(cell)),
        SplitScheme::FilteredIQ { filter_factor } => Ok(classical_rate(cell) * filter_factor),
        _ => {
            let top = MCS_TABLE[MCS_TABLE.len() - 1];
            let load = SubframeLoad {
                subframe_index: 0,
                allocations: vec![Allocation {
                    ue_id: 0,
                    n_prbs: cell.n_prb,
                    mcs: top,
                }],
                control_res: cell.max_control_res,
            };
            Ok(volume_bits(scheme, cell, &load) / cell.subframe_duration)
        }
    }
}

/// UE on/off activity, advanced once per subframe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activity {
    AlwaysOn,
    AlwaysOff,
    /// Two-state Markov chain with geometric sojourns of the given mean
    /// lengths (subframes).
    Markov { mean_on: f64, mean_off: f64 },
}

/// Reflected random walk over [`MCS_TABLE`] indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McsWalk {
    pub start_index: usize,
    /// Probability of taking a step in a given subframe. Zero pins the MCS.
    pub step_prob: f64,
    /// Largest step magnitude, in table indices.
    pub max_step: usize,
}

impl McsWalk {
    pub fn fixed(index: usize) -> Self {
        McsWalk {
            start_index: index,
            step_prob: 0.0,
            max_step: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UeProfile {
    pub ue_id: u32,
    pub activity: Activity,
    pub mcs: McsWalk,
    /// PRBs requested per active subframe, drawn uniformly from this range.
    pub demand_prbs: (u32, u32),
}

impl UeProfile {
    pub fn validate(&self) -> Result<(), TrafficError> {
        let fail = |reason: &str| {
            Err(TrafficError::InvalidProfile {
                ue_id: self.ue_id,
                reason: reason.to_string(),
            })
        };
        if let Activity::Markov { mean_on, mean_off } = self.activity {
            if !(mean_on > 0.0 && mean_off > 0.0) || !mean_on.is_finite() || !mean_off.is_finite() {
                return fail("mean on/off durations must be positive and finite");
            }
        }
        let last = MCS_TABLE.len() - 1;
        if self.mcs.start_index > last {
            return fail("MCS start index outside the table");
        }
        if self.mcs.max_step < 1 || self.mcs.max_step > last {
            return fail("MCS step must be between 1 and the table span");
        }
        if !(0.0..=1.0).contains(&self.mcs.step_prob) {
            return fail("MCS step probability outside [0, 1]");
        }
        if self.demand_prbs.0 > self.demand_prbs.1 {
            return fail("demand range is inverted");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlSchedule {
    pub pdcch_res_per_subframe: u32,
    /// PRACH occasions every this many subframes; 0 disables PRACH.
    pub prach_period: u32,
    pub prach_res: u32,
}

impl ControlSchedule {
    pub const NONE: ControlSchedule = ControlSchedule {
        pdcch_res_per_subframe: 0,
        prach_period: 0,
        prach_res: 0,
    };

    /// PDCCH scaled to an `n_prb` grid with the default PRACH burst.
    pub fn lte(n_prb: u32) -> Self {
        ControlSchedule {
            pdcch_res_per_subframe: PDCCH_RES_PER_PRB * n_prb,
            ..Self::lte_default()
        }
    }

    /// The 20 MHz (100 PRB) schedule.
    pub fn lte_default() -> Self {
        ControlSchedule {
            pdcch_res_per_subframe: DEFAULT_PDCCH_RES,
            prach_period: DEFAULT_PRACH_PERIOD,
            prach_res: DEFAULT_PRACH_RES,
        }
    }

    pub fn control_res(&self, subframe: u64) -> u32 {
        let prach = self.prach_period > 0 && subframe.is_multiple_of(self.prach_period as u64);
        self.pdcch_res_per_subframe + if prach { self.prach_res } else { 0 }
    }

    pub fn max_control_res(&self) -> u32 {
        self.pdcch_res_per_subframe + if self.prach_period > 0 { self.prach_res } else { 0 }
    }
}

struct UeState {
    on: bool,
    mcs_index: usize,
}

fn reflect(index: isize, last: isize) -> usize {
    let mut i = index;
    // a single reflection suffices because steps never exceed the span
    if i < 0 {
        i = -i;
    }
    if i > last {
        i = 2 * last - i;
    }
    i.clamp(0, last) as usize
}

/// Per-subframe radio loads: UE activity and MCS evolve, PRBs are granted one
/// at a time round-robin over active UEs until demand or the grid runs out.
/// The load sequence depends only on `(cell, profiles, control, n_subframes,
/// seed)`, never on a split scheme.
pub fn generate_loads(
    cell: &CellConfig,
    profiles: &[UeProfile],
    control: ControlSchedule,
    n_subframes: u64,
    seed: u64,
) -> Result<Vec<SubframeLoad>, TrafficError> {
    cell.validate()?;
    for p in profiles {
        p.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = (MCS_TABLE.len() - 1) as isize;
    let mut states: Vec<UeState> = profiles
        .iter()
        .map(|p| UeState {
            on: match p.activity {
                Activity::AlwaysOn => true,
                Activity::AlwaysOff => false,
                Activity::Markov { mean_on, mean_off } => rng.gen_bool(mean_on / (mean_on + mean_off)),
            },
            mcs_index: p.mcs.start_index,
        })
        .collect();

    let mut rr_next = 0usize;
    let mut loads = Vec::with_capacity(n_subframes as usize);
    for k in 0..n_subframes {
        if k > 0 {
            for (p, s) in profiles.iter().zip(states.iter_mut()) {
                if let Activity::Markov { mean_on, mean_off } = p.activity {
                    let leave = if s.on { 1.0 / mean_on } else { 1.0 / mean_off };
                    if rng.gen_bool(leave.min(1.0)) {
                        s.on = !s.on;
                    }
                }
                if p.mcs.step_prob > 0.0 && rng.gen_bool(p.mcs.step_prob) {
                    let magnitude = rng.gen_range(1..=p.mcs.max_step) as isize;
                    let step = if rng.gen_bool(0.5) { magnitude } else { -magnitude };
                    s.mcs_index = reflect(s.mcs_index as isize + step, last);
                }
            }
        }

        let mut demand: Vec<u32> = profiles
            .iter()
            .zip(&states)
            .map(|(p, s)| {
                let d = rng.gen_range(p.demand_prbs.0..=p.demand_prbs.1);
                if s.on {
                    d
                } else {
                    0
                }
            })
            .collect();
        let mut granted = vec![0u32; profiles.len()];
        let mut free = cell.n_prb;
        let n = profiles.len();
        if n > 0 {
            let start = rr_next % n;
            rr_next = rr_next.wrapping_add(1);
            while free > 0 && demand.iter().any(|&d| d > 0) {
                for off in 0..n {
                    let i = (start + off) % n;
                    if free > 0 && demand[i] > 0 {
                        demand[i] -= 1;
                        granted[i] += 1;
                        free -= 1;
                    }
                }
            }
        }

        let allocations = profiles
            .iter()
            .zip(&states)
            .zip(&granted)
            .filter(|(_, &g)| g > 0)
            .map(|((p, s), &g)| Allocation {
                ue_id: p.ue_id,
                n_prbs: g,
                mcs: MCS_TABLE[s.mcs_index],
            })
            .collect();
        loads.push(SubframeLoad {
            subframe_index: k,
            allocations,
            control_res: control.control_res(k),
        });
    }
    Ok(loads)
}

/// Per-subframe fronthaul volumes of one cell under one split scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficTrace {
    pub cell: CellConfig,
    pub scheme: SplitScheme,
    /// Bits per subframe.
    pub volumes: Vec<u64>,
    pub loads: Vec<SubframeLoad>,
    pub seed: u64,
}

impl TrafficTrace {
    pub fn from_loads(
        cell: CellConfig,
        scheme: SplitScheme,
        loads: Vec<SubframeLoad>,
        seed: u64,
    ) -> Result<Self, TrafficError> {
        let volumes = loads
            .iter()
            .map(|l| subframe_volume(scheme, &cell, l))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TrafficTrace {
            cell,
            scheme,
            volumes,
            loads,
            seed,
        })
    }

    /// The same cell loads seen through another split.
    pub fn with_scheme(&self, scheme: SplitScheme) -> Result<Self, TrafficError> {
        Self::from_loads(self.cell.clone(), scheme, self.loads.clone(), self.seed)
    }

    /// One UE's share of the trace (no cell-wide control).
    pub fn for_ue(&self, ue_id: u32) -> Result<Self, TrafficError> {
        let loads = self.loads.iter().map(|l| l.for_ue(ue_id)).collect();
        Self::from_loads(self.cell.clone(), self.scheme, loads, self.seed)
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    pub fn total_bits(&self) -> u64 {
        self.volumes.iter().sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "subframe_index,scheme,volume_bits,allocated_prbs,control_res")?;
        for (v, l) in self.volumes.iter().zip(&self.loads) {
            writeln!(
                w,
                "{},{},{},{},{}",
                l.subframe_index,
                self.scheme,
                v,
                l.allocated_prbs(),
                l.control_res
            )?;
        }
        Ok(())
    }
}

pub fn generate_trace(
    cell: &CellConfig,
    scheme: SplitScheme,
    profiles: &[UeProfile],
    control: ControlSchedule,
    n_subframes: u64,
    seed: u64,
) -> Result<TrafficTrace, TrafficError> {
    scheme.validate()?;
    let loads = generate_loads(cell, profiles, control, n_subframes, seed)?;
    TrafficTrace::from_loads(cell.clone(), scheme, loads, seed)
}
