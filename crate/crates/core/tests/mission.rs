mod common;

use std::collections::BTreeMap;

use common::*;
use proptest::prelude::*;
use serde_json::json;
use slbsim_core::mission::{Leg, MissionState};
use slbsim_core::rng::{agent_sample_key, RandomStream, Substream};
use slbsim_core::time::SimTime;
use slbsim_core::{run, Runner};

/// `(time, state, segment)` per platoon, from the STATE lines.
fn states(trace: &str) -> BTreeMap<String, Vec<(String, MissionState, String)>> {
    let mut out: BTreeMap<_, Vec<_>> = BTreeMap::new();
    for f in trace.lines().map(|l| l.split('\t').collect::<Vec<_>>()) {
        if f[1] == "STATE" {
            out.entry(f[2].to_string())
                .or_default()
                .push((f[0].to_string(), f[4].parse().unwrap(), f[5].to_string()));
        }
    }
    out
}

fn state_names(trace: &str, platoon: &str) -> Vec<MissionState> {
    states(trace)
        .remove(platoon)
        .unwrap_or_default()
        .into_iter()
        .map(|(_, s, _)| s)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn state_changes_follow_the_graph(k in arb_knobs()) {
        let out = run(&scenario(knobs_to_json(&k)), true).unwrap();
        for (platoon, seq) in states(&out.trace) {
            let mut at = MissionState::Patrol;
            for (t, s, _) in seq {
                prop_assert!(at.can_move_to(s), "platoon {platoon} {at} -> {s} at {t}");
                at = s;
            }
        }
    }

    #[test]
    fn never_inactivates_more_than_was_there(k in arb_knobs()) {
        let out = run(&scenario(knobs_to_json(&k)), true).unwrap();
        prop_assert!(out.report.mission.cells_inactivated <= k.cells as u64);
        prop_assert_eq!(count(&out.trace, "TREATED", "Inactivated") as u64, out.report.mission.cells_inactivated);
    }

    #[test]
    fn perfect_specificity_means_no_false_halts(mut k in arb_knobs()) {
        k.fpr = 0.0;
        // with two crews a shared cell can vanish under one of them
        let mut seen = false;
        for p in &mut k.platoons {
            if p.2 && seen {
                p.2 = false;
            }
            seen |= p.2;
        }
        let out = run(&scenario(knobs_to_json(&k)), true).unwrap();
        prop_assert_eq!(out.report.mission.false_halts, 0);
    }
}

#[test]
fn stationary_while_halted_or_treating() {
    let mut v = mission_scenario(3, 200.0, 2, 0.1, 0.0);
    v["platoons"][0]["mission"]["max_cycles"] = json!(2);
    let mut r = Runner::new(&scenario(v), false);
    let mut last: Option<(Leg, f64)> = None;
    let mut stopped_ticks = 0;
    for t in 0..=2000 {
        r.run_until(SimTime::from_ticks(t)).unwrap();
        let m = &r.sim().missions()[0].1;
        let here = (m.leg, m.offset);
        if matches!(m.state, MissionState::Halted | MissionState::Treating) {
            stopped_ticks += 1;
            if let Some(prev) = last {
                assert_eq!(prev, here, "moved while {} at t={t}", m.state);
            }
            last = Some(here);
        } else {
            last = None;
        }
    }
    assert!(stopped_ticks > 50, "only {stopped_ticks} stopped ticks");
}

#[test]
fn exhausted_capacity_sends_the_platoon_home() {
    let mut v = mission_scenario(1, 300.0, 3, 0.0, 0.0);
    v["platoons"][0]["mission"]["treat_capacity"] = json!(1);
    let out = run(&scenario(v), true).unwrap();
    use MissionState::*;
    assert_eq!(state_names(&out.trace, "1"), vec![Halted, Treating, Patrol, Exiting, Done]);
    assert_eq!(out.report.mission.cells_inactivated, 1);
    assert_eq!(out.report.mission.cycles_completed, 0);
}

#[test]
fn zero_max_cycles_leaves_at_the_first_loop_completion() {
    for rule in ["clean_cycle_after_max", "max_cycles"] {
        let mut v = mission_scenario(1, 300.0, 0, 0.0, 0.0);
        v["platoons"][0]["mission"]["max_cycles"] = json!(0);
        v["platoons"][0]["mission"]["exit_rule"] = json!(rule);
        let out = run(&scenario(v), true).unwrap();
        let s = &states(&out.trace)["1"];
        let got: Vec<(&str, MissionState, &str)> = s.iter().map(|(t, st, seg)| (t.as_str(), *st, seg.as_str())).collect();
        // 40 around the loop, then segments 0, 1, 2 and 4 of the way out
        assert_eq!(got, vec![("40.0", MissionState::Exiting, "0"), ("80.0", MissionState::Done, "4")], "{rule}");
        assert_eq!(out.report.mission.cycles_completed, 1);
    }
}

#[test]
fn default_rule_waits_for_a_clean_cycle() {
    let mut v = mission_scenario(1, 400.0, 1, 0.0, 0.0);
    v["platoons"][0]["mission"]["max_cycles"] = json!(1);
    let out = run(&scenario(v.clone()), true).unwrap();
    // cycle 1 found the cell, cycle 2 is clean
    assert_eq!(out.report.mission.cycles_completed, 2);
    assert_eq!(out.report.mission.cells_inactivated, 1);

    v["platoons"][0]["mission"]["exit_rule"] = json!("max_cycles");
    let out = run(&scenario(v), true).unwrap();
    assert_eq!(out.report.mission.cycles_completed, 1);
}

#[test]
fn done_platoon_stops_sensing() {
    let mut v = mission_scenario(1, 500.0, 0, 1.0, 0.0);
    v["platoons"][0]["mission"]["max_cycles"] = json!(1);
    v["platoons"][0]["mission"]["exit_rule"] = json!("max_cycles");
    let out = run(&scenario(v), true).unwrap();
    let done_at = states(&out.trace)["1"].last().cloned().unwrap();
    assert_eq!(done_at.1, MissionState::Done);
    let done_t: f64 = done_at.0.parse().unwrap();
    for l in out.trace.lines().filter(|l| l.contains("\tCLASSIFIED\t")) {
        let t: f64 = l.split('\t').next().unwrap().parse().unwrap();
        assert!(t < done_t, "{l}");
    }
}

#[test]
fn detector_hits_its_rate() {
    let rng = RandomStream::new(2024);
    let hits = (0..10_000u64)
        .filter(|&i| rng.bernoulli(Substream::Detector, agent_sample_key(3, i), 0.8))
        .count();
    assert!((7880..=8120).contains(&hits), "{hits}");
}

#[test]
fn lossy_commands_are_retried_until_the_episode_closes() {
    // heavy loss: TreatAssign/TreatDone get lost and repeated, but every
    // halt still ends in treatment and resumption, and nothing deadlocks
    let mut resent = 0;
    for seed in 0..20 {
        let mut v = mission_scenario(seed, 600.0, 2, 0.05, 0.4);
        v["platoons"][0]["mission"]["max_cycles"] = json!(2);
        v["platoons"][0]["mission"]["command_timeout"] = json!(3);
        v["platoons"][0]["mission"]["exit_rule"] = json!("max_cycles");
        let out = run(&scenario(v), true).unwrap();
        let seq = state_names(&out.trace, "1");
        assert_eq!(seq.last(), Some(&MissionState::Done), "seed {seed}: {seq:?}");
        let halts = seq.iter().filter(|s| **s == MissionState::Halted).count();
        resent += count(&out.trace, "TX", "TreatAssign") - halts;
    }
    assert!(resent > 0);
}
