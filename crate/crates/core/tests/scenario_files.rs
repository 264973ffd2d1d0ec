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

use fhsim::scenario::{
    bundled, bundled_names, parse_scenario, render, run_scenario, run_scenario_in_memory, PatternDecl, RunOptions,
    EXIT_INFEASIBLE, EXIT_OK,
};
use fhsim::traffic::SplitScheme;

const BASE: &str = "\
[scenario]
name = t
horizon = 0.004

[topology]
node = sw switch
node = r rrh
node = b bbu
link = r sw capacity=10e9 delay=1e-6
link = sw b capacity=10e9 delay=1e-6

[cells]
cell = c rrh=r bandwidth=5e6

[sessions]
session = s pattern=p2p:r>b class=0 bound=1e-3
";

fn err_of(text: &str) -> fhsim::scenario::ParseError {
    parse_scenario(text).expect_err("should not parse")
}

#[test]
fn bundled_parse_and_round_trip() {
    for n in bundled_names() {
        let sc = parse_scenario(bundled(n).unwrap()).unwrap_or_else(|e| panic!("{n}: {e}"));
        let text = render(&sc);
        let again = parse_scenario(&text).unwrap();
        assert_eq!(again, sc, "{n}");
        assert_eq!(render(&again), text, "{n}");
    }
}

#[test]
fn minimal_scenario_gets_defaults() {
    let sc = parse_scenario(BASE).unwrap();
    assert_eq!(sc.seed, 0);
    assert_eq!(sc.n_subframes(), 4);
    assert_eq!(sc.cells[0].scheme, SplitScheme::ModulationBits);
    assert_eq!(sc.cells[0].config.n_prb, 25);
    assert!(sc.sessions[0].mandatory);
    assert_eq!(
        sc.sessions[0].pattern,
        PatternDecl::PointToPoint {
            rrh: "r".into(),
            bbu: "b".into()
        }
    );
}

#[test]
fn undeclared_node_is_named_with_its_line() {
    let e = err_of(&BASE.replace("link = sw b", "link = sw nowhere"));
    assert_eq!(e.line, 10);
    assert!(e.message.contains("nowhere"), "{e}");
    let e = err_of(&BASE.replace("p2p:r>b", "p2p:r>elsewhere"));
    assert_eq!(e.line, 16);
    assert_eq!(e.field, "session.pattern");
    assert!(e.message.contains("elsewhere"));
}

#[test]
fn unknown_keys_and_attributes() {
    let e = err_of(&BASE.replace("horizon = 0.004", "horizon = 0.004\ncolour = red"));
    assert_eq!((e.line, e.field.as_str()), (4, "colour"));
    let e = err_of(&BASE.replace("capacity=10e9 delay=1e-6\nlink = sw b", "capacity=10e9 dealy=1e-6\nlink = sw b"));
    assert_eq!((e.line, e.field.as_str()), (9, "link.dealy"));
    let e = err_of(&BASE.replace("[cells]", "[cellz]"));
    assert_eq!(e.line, 12);
}

#[test]
fn type_mismatches() {
    let e = err_of(&BASE.replace("capacity=10e9 delay=1e-6\nlink = sw b", "capacity=fast delay=1e-6\nlink = sw b"));
    assert_eq!(e.field, "link.capacity");
    assert!(e.message.contains("fast"));
    let e = err_of(&BASE.replace("class=0", "class=zero"));
    assert_eq!((e.line, e.field.as_str()), (16, "session.class"));
    let e = err_of(&BASE.replace("horizon = 0.004", "horizon = soon"));
    assert_eq!(e.line, 3);
    let e = err_of(&BASE.replace("bandwidth=5e6", "bandwidth=7e6"));
    assert!(e.message.contains("LTE"));
}

#[test]
fn dangling_and_wrong_kind_references() {
    let e = err_of(&BASE.replace("rrh=r ", "rrh=sw "));
    assert_eq!(e.field, "cell.rrh");
    assert!(e.message.contains("switch"));
    let e = err_of(&format!("{BASE}\n[events]\nteardown = 0.001 ghost\n"));
    assert!(e.message.contains("ghost"));
    let e = err_of(&format!("{BASE}\n[events]\nfail = 0.001 r b\n"));
    assert!(e.message.contains("no link"));
    let e = err_of(&BASE.replace("[cells]\ncell = c rrh=r bandwidth=5e6\n", ""));
    assert!(e.message.contains("no cell"), "{e}");
    let e = err_of(&format!("{BASE}\n[sync]\nsource = r\n"));
    assert_eq!(e.field, "source");
}

#[test]
fn missing_header_fields() {
    let e = err_of(&BASE.replace("name = t\n", ""));
    assert_eq!(e.field, "scenario.name");
    let e = err_of(&BASE.replace(" bound=1e-3", ""));
    assert_eq!(e.field, "session.bound");
}

#[test]
fn cran_iq_refused_bits_admitted() {
    let sc = parse_scenario(bundled("cran-aggregation").unwrap()).unwrap();
    let r = run_scenario_in_memory(&sc, &RunOptions::default()).unwrap();
    let setups: Vec<_> = r.control_log.iter().filter(|l| l.op == "setup").collect();
    assert_eq!(setups[0].outcome, "infeasible:no_bandwidth");
    assert_eq!(setups[1].outcome, "ok");
    assert_eq!(r.exit_code(), EXIT_OK);
    let bits = r.report.sessions.iter().find(|s| s.name == "pool-bits").unwrap();
    assert!(bits.delivered > 0);
    assert_eq!(bits.violations, 0);

    let mut strict = sc.clone();
    strict.sessions[0].mandatory = true;
    let r = run_scenario_in_memory(&strict, &RunOptions::default()).unwrap();
    assert_eq!(r.exit_code(), EXIT_INFEASIBLE);
    assert_eq!(r.refused[0].0, "pool-iq");
}

fn cv(v: &[u64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<u64>() as f64 / n;
    let var = v.iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / n;
    var.sqrt() / m
}

#[test]
fn cd_decoupling_control_cell_periodic_data_cells_bursty() {
    let sc = parse_scenario(bundled("cd-decoupling").unwrap()).unwrap();
    let r = run_scenario_in_memory(&sc, &RunOptions::default()).unwrap();
    let cbs = &r.traces["m"].volumes;
    let period = sc.cells[0].control.prach_period as usize;
    // same phase of the PRACH cycle carries nearly the same volume
    let mut phase_cv = 0.0f64;
    for p in 0..period {
        let v: Vec<u64> = cbs.iter().skip(p).step_by(period).copied().collect();
        phase_cv = phase_cv.max(cv(&v));
    }
    let dbs = ["s0", "s1"].map(|c| cv(&r.traces[c].volumes));
    assert!(phase_cv < 0.2, "control cell phase cv {phase_cv}");
    for d in dbs {
        assert!(d > 2.0 * phase_cv && d > 0.25, "data cell cv {d} vs {phase_cv}");
    }
}

#[test]
fn bundled_admitted_sessions_meet_their_bounds() {
    for n in bundled_names() {
        let sc = parse_scenario(bundled(n).unwrap()).unwrap();
        let r = run_scenario_in_memory(&sc, &RunOptions::default()).unwrap();
        assert_eq!(r.report.global.violations, 0, "{n}");
        assert_eq!(r.report.global.dropped_unroutable, 0, "{n}");
        assert_eq!(r.report.global.dropped_overflow, 0, "{n}");
        assert_eq!(r.exit_code(), EXIT_OK, "{n}");
        for s in &r.report.sessions {
            assert_eq!(s.out_of_order, 0, "{n}/{}", s.name);
        }
    }
}

#[test]
fn migration_and_teardown_keep_packets_routable() {
    let sc = parse_scenario(bundled("device-centric").unwrap()).unwrap();
    let r = run_scenario_in_memory(&sc, &RunOptions::default()).unwrap();
    let ops: Vec<_> = r.control_log.iter().map(|l| (l.op, l.outcome.as_str())).collect();
    assert!(ops.contains(&("migrate", "ok")));
    assert!(ops.contains(&("teardown", "ok")));
    let ue0 = r.bindings.iter().find(|b| b.name == "ue0").unwrap();
    assert_eq!(ue0.flows.len(), 2, "migrated circuit gets a second flow");
    for f in &ue0.flows {
        assert!(r.outcome.flows[f].delivered > 0);
    }
}

#[test]
fn link_failure_rerouted_in_a_run() {
    let text = format!(
        "{}\n[events]\nfail = 0.002 sw b\n",
        BASE.replace("link = sw b capacity=10e9 delay=1e-6", "link = sw b capacity=10e9 delay=1e-6\nlink = sw b capacity=10e9 delay=2e-6")
    );
    let sc = parse_scenario(&text).unwrap();
    let r = run_scenario_in_memory(&sc, &RunOptions::default()).unwrap();
    assert!(r.control_log.iter().any(|l| l.op == "reroute" && l.outcome == "rerouted"));
    let g = &r.report.global;
    assert_eq!(g.injected, g.delivered + g.dropped_unroutable + g.dropped_overflow + g.in_flight);
    assert!(g.delivered > 0);
    let late = r.outcome.flows.values().next().unwrap();
    assert!(late.delivered + late.dropped_unroutable + late.in_flight == late.injected);
}

#[test]
fn options_override_seed_and_length() {
    let sc = parse_scenario(bundled("cd-decoupling").unwrap()).unwrap();
    let a = run_scenario_in_memory(&sc, &RunOptions::default()).unwrap();
    let b = run_scenario_in_memory(
        &sc,
        &RunOptions {
            seed: Some(sc.seed + 1),
            ..Default::default()
        },
    )
    .unwrap();
    assert_ne!(a.files["trace_s0.csv"], b.files["trace_s0.csv"]);
    let c = run_scenario_in_memory(
        &sc,
        &RunOptions {
            subframes: Some(5),
            sweep: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(c.traces["s0"].len(), 5);
    assert!((c.scenario.horizon - 0.005).abs() < 1e-15);
    let sweep = c.sweep.unwrap();
    assert_eq!(sweep.len(), 8);
    assert!(c.files.contains_key("sweep.csv"));
}

#[test]
fn sessions_do_not_touch_the_clock_tree() {
    for n in bundled_names() {
        let sc = parse_scenario(bundled(n).unwrap()).unwrap();
        let with = run_scenario_in_memory(&sc, &RunOptions::default()).unwrap();
        let mut bare = sc.clone();
        bare.sessions.clear();
        bare.events.clear();
        let without = run_scenario_in_memory(&bare, &RunOptions::default()).unwrap();
        assert_eq!(with.sync_fingerprint, without.sync_fingerprint, "{n}");
        assert_eq!(with.files["sync.csv"], without.files["sync.csv"], "{n}");
    }
}

#[test]
fn writes_files_to_disk() {
    let dir = tempdir();
    let sc = parse_scenario(BASE).unwrap();
    let r = run_scenario(&sc, &RunOptions::default(), &dir).unwrap();
    for (name, bytes) in &r.files {
        assert_eq!(&std::fs::read(dir.join(name)).unwrap(), bytes);
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

fn tempdir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("fhsim-scn-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}
