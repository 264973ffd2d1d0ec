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

use fhsim::traffic::{
    generate_trace, subframe_volume, Activity, Allocation, CellConfig, ControlSchedule, McsWalk, SplitScheme,
    SubframeLoad, UeProfile, MCS_TABLE,
};
use proptest::prelude::*;

fn cell_strategy() -> impl Strategy<Value = CellConfig> {
    (
        prop::sample::select(vec![1.4e6, 3e6, 5e6, 10e6, 15e6, 20e6]),
        1u32..=8,
        8u32..=16,
        any::<prop::sample::Index>(),
    )
        .prop_map(|(bw, ants, iq, layers)| {
            let mut c = CellConfig::lte(bw, ants).unwrap();
            c.iq_bitwidth = iq;
            c.spatial_layers = 1 + layers.index(ants as usize) as u32;
            c
        })
}

fn load_for(cell: &CellConfig, grants: &[(u32, usize)], control: u32) -> SubframeLoad {
    let mut left = cell.n_prb;
    let mut allocations = Vec::new();
    for (i, &(want, mcs)) in grants.iter().enumerate() {
        let n = want.min(left);
        left -= n;
        allocations.push(Allocation {
            ue_id: i as u32,
            n_prbs: n,
            mcs: MCS_TABLE[mcs],
        });
    }
    SubframeLoad {
        subframe_index: 0,
        allocations,
        control_res: control.min(cell.max_control_res),
    }
}

fn grants() -> impl Strategy<Value = Vec<(u32, usize)>> {
    prop::collection::vec((0u32..60, 0usize..MCS_TABLE.len()), 0..8)
}

const ORDER: [SplitScheme; 6] = [
    SplitScheme::ClassicalIQ,
    SplitScheme::FilteredIQ { filter_factor: 1.0 },
    SplitScheme::ReExtraction,
    SplitScheme::ModulationBits,
    SplitScheme::PduLevel {
        code_rate_applied: false,
    },
    SplitScheme::PduLevel {
        code_rate_applied: true,
    },
];

proptest! {
    #[test]
    fn split_volumes_are_ordered(cell in cell_strategy(), g in grants(), ctrl in 0u32..4000) {
        let load = load_for(&cell, &g, ctrl);
        let v: Vec<u64> = ORDER.iter().map(|&s| subframe_volume(s, &cell, &load).unwrap()).collect();
        for w in v.windows(2) {
            prop_assert!(w[0] >= w[1], "{:?}", v);
        }
    }

    #[test]
    fn any_filter_stays_below_classical(cell in cell_strategy(), f in 0.01f64..=1.0) {
        let load = SubframeLoad::empty(0);
        let c = subframe_volume(SplitScheme::ClassicalIQ, &cell, &load).unwrap();
        let v = subframe_volume(SplitScheme::FilteredIQ { filter_factor: f }, &cell, &load).unwrap();
        prop_assert!(v <= c);
    }

    #[test]
    fn extra_allocation_never_lowers_volume(cell in cell_strategy(), g in grants(), extra in (1u32..30, 0usize..3)) {
        let before = load_for(&cell, &g, 0);
        let mut more = g.clone();
        more.push(extra);
        let after = load_for(&cell, &more, 0);
        for s in ORDER {
            let a = subframe_volume(s, &cell, &before).unwrap();
            let b = subframe_volume(s, &cell, &after).unwrap();
            if s.is_load_dependent() {
                prop_assert!(b >= a, "{s}: {a} -> {b}");
            } else {
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn doubling_antennas_doubles_classical(bw in prop::sample::select(vec![1.4e6, 5e6, 10e6, 20e6]), ants in 1u32..=32) {
        let one = CellConfig::lte(bw, ants).unwrap();
        let two = CellConfig::lte(bw, ants * 2).unwrap();
        let load = SubframeLoad::empty(0);
        let a = subframe_volume(SplitScheme::ClassicalIQ, &one, &load).unwrap();
        let b = subframe_volume(SplitScheme::ClassicalIQ, &two, &load).unwrap();
        prop_assert_eq!(b, 2 * a);
    }

    #[test]
    fn fixed_mcs_traces_track_allocated_prbs(seed in any::<u64>(), mcs in 0usize..3, ues in 2u32..12) {
        let cell = CellConfig::lte(20e6, 2).unwrap();
        let profiles: Vec<UeProfile> = (0..ues)
            .map(|i| UeProfile {
                ue_id: i,
                activity: Activity::Markov { mean_on: 6.0, mean_off: 9.0 },
                mcs: McsWalk::fixed(mcs),
                demand_prbs: (1, 40),
            })
            .collect();
        let t = generate_trace(&cell, SplitScheme::ModulationBits, &profiles, ControlSchedule::lte_default(), 400, seed)
            .unwrap();
        let x: Vec<f64> = t.loads.iter().map(|l| l.allocated_prbs() as f64).collect();
        let y: Vec<f64> = t.volumes.iter().map(|&v| v as f64).collect();
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum::<f64>().sqrt();
        let sy: f64 = y.iter().map(|b| (b - my).powi(2)).sum::<f64>().sqrt();
        prop_assume!(sx > 0.0);
        prop_assert!(cov / (sx * sy) > 0.9, "r = {}", cov / (sx * sy));
    }

    #[test]
    fn loads_do_not_depend_on_scheme(seed in any::<u64>()) {
        let cell = CellConfig::lte(10e6, 4).unwrap();
        let p = [UeProfile {
            ue_id: 0,
            activity: Activity::Markov { mean_on: 3.0, mean_off: 3.0 },
            mcs: McsWalk { start_index: 1, step_prob: 0.3, max_step: 1 },
            demand_prbs: (1, 50),
        }];
        let a = generate_trace(&cell, SplitScheme::ClassicalIQ, &p, ControlSchedule::lte_default(), 50, seed).unwrap();
        let b = generate_trace(&cell, SplitScheme::ModulationBits, &p, ControlSchedule::lte_default(), 50, seed).unwrap();
        prop_assert_eq!(&a.loads, &b.loads);
        prop_assert_eq!(a.with_scheme(SplitScheme::ModulationBits).unwrap(), b);
    }
}
