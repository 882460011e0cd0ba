//! Scenario builders and hand-derived trace oracles shared by the
//! integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use serde_json::{json, Value};
use slbsim_core::Scenario;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn golden_path() -> PathBuf {
    repo_root().join("scenarios/walkthrough.trace")
}

pub fn scenario(v: Value) -> Scenario {
    Scenario::from_value(v).expect("test scenario is valid")
}

/// The walkthrough timing: interval 100, offset 0.5, width 0.5.
pub fn slb() -> Value {
    json!({"beacon_interval": 100, "slot_offset": 0.5, "slot_width": 0.5})
}

pub fn beacon_only(roles: &[&str], t_end: f64, seed: u64) -> Value {
    json!({
        "seed": seed,
        "t_end": t_end,
        "slb": slb(),
        "channel": {"loss_prob": 0, "collisions_enabled": true},
        "platoons": [{"id": 1, "size": roles.len(), "roles": roles}]
    })
}

/// Four segments of length 10 around the loop, leaving via segment 2 then 4.
pub fn square_world(cells_on_1: u32) -> Value {
    json!({
        "patrol_loop": [0, 1, 2, 3],
        "exit_path": [2, 4],
        "segments": [
            {"id": 0, "length": 10},
            {"id": 1, "length": 10, "target_cells": cells_on_1},
            {"id": 2, "length": 10},
            {"id": 3, "length": 10},
            {"id": 4, "length": 10}
        ]
    })
}

pub fn mission_platoon(id: u32, start_offset: f64, tpr: f64, fpr: f64, max_cycles: u32) -> Value {
    json!({
        "id": id,
        "size": 3,
        "roles": ["leader", "vision", "treatment"],
        "start_offset": start_offset,
        "detector": {
            "true_positive_rate": tpr,
            "false_positive_rate": fpr,
            "sense_period": 2,
            "compute_round_trip": 1
        },
        "mission": {"max_cycles": max_cycles, "treatment_duration": 5}
    })
}

pub fn mission_scenario(seed: u64, t_end: f64, cells: u32, fpr: f64, loss: f64) -> Value {
    json!({
        "seed": seed,
        "t_end": t_end,
        "slb": slb(),
        "channel": {"loss_prob": loss, "collisions_enabled": true},
        "platoons": [mission_platoon(1, 0.0, 1.0, fpr, 4)],
        "world": square_world(cells)
    })
}

fn tenths(ticks: u64) -> String {
    format!("{}.{}", ticks / 10, ticks % 10)
}

fn line(t: u64, event: &str, platoon: &str, sender: &str, label: &str, value: &str, rx: &str) -> String {
    format!("{}\t{event}\t{platoon}\t{sender}\t{label}\t{value}\t{rx}\n", tenths(t))
}

/// Hand-derived trace of one platoon (id 1) beaconing with interval 100,
/// offset 0.5 and width 0.5, run to `cycles * 100`. Agent 0 leads; agent i
/// sits at position i. `lost_leader_seq` drops that leader beacon at every
/// receiver.
///
/// Per cycle k (times in tenths, base = 1000k):
/// - base: leader TX seq k
/// - base+5: leader beacon delivered (RX, or LOST) to 1..n-1 in id order.
///   From cycle 1 on, a follower that hears it drops its pending backup
///   (CANCELLED right after its RX) and re-arms at base + 5i, i.e. the same
///   instant the backup was due.
/// - base+5i: follower i TX seq k, delivered at base+5i+5 to everyone else.
///
/// Deliveries fire before transmissions at equal times, so follower i's
/// delivery precedes follower i+1's TX.
///
/// At the end the leader's cycle-`cycles` beacon goes on air at exactly
/// t_end and its delivery falls outside the run.
pub fn slb_oracle(n: u64, cycles: u64, seed: u64, lost_leader_seq: Option<u64>) -> String {
    let roles = ["Leader", "Vision", "Treatment", "Power", "Power", "Power", "Power", "Power"];
    let mut out = line(0, "RUN", "-", "-", "0.5", &seed.to_string(), "-");
    for i in 0..n {
        out += &line(0, "JOIN", "1", &i.to_string(), roles[i as usize], &i.to_string(), "-");
    }
    let mut events = 0;
    for k in 0..cycles {
        let base = 1000 * k;
        let ks = k.to_string();
        out += &line(base, "TX", "1", "0", "LeaderBeacon", &ks, "-");
        for r in 1..n {
            if lost_leader_seq == Some(k) {
                out += &line(base + 5, "LOST", "1", "0", "LeaderBeacon", &ks, &r.to_string());
            } else {
                out += &line(base + 5, "RX", "1", "0", "LeaderBeacon", &ks, &r.to_string());
                // from cycle 1 on, last cycle's backup is still pending
                if k > 0 {
                    out += &line(base + 5, "CANCELLED", "1", &r.to_string(), "MemberBeacon", "-", "-");
                }
            }
        }
        events += 2;
        for i in 1..n {
            let tx = base + 5 * i;
            out += &line(tx, "TX", "1", &i.to_string(), "MemberBeacon", &ks, "-");
            for r in (0..n).filter(|&r| r != i) {
                out += &line(tx + 5, "RX", "1", &i.to_string(), "MemberBeacon", &ks, &r.to_string());
            }
            events += 2;
        }
    }
    let end = 1000 * cycles;
    out += &line(end, "TX", "1", "0", "LeaderBeacon", &cycles.to_string(), "-");
    events += 1;
    out += &line(end, "END", "-", "-", "-", &events.to_string(), "-");
    out
}

/// The walkthrough run: four agents over [0, 300].
pub fn walkthrough_oracle() -> String {
    slb_oracle(4, 3, 1, None)
}

/// Lines whose platoon column equals `platoon`.
pub fn platoon_lines(trace: &str, platoon: u32) -> Vec<String> {
    let p = platoon.to_string();
    trace
        .lines()
        .filter(|l| l.split('\t').nth(2) == Some(p.as_str()))
        .map(String::from)
        .collect()
}

pub fn count(trace: &str, event: &str, label: &str) -> usize {
    trace
        .lines()
        .filter(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            f[1] == event && f[4] == label
        })
        .count()
}

/// Knobs for a generated scenario; see [`arb_knobs`].
#[derive(Debug, Clone)]
pub struct Knobs {
    pub seed: u64,
    pub t_end_tenths: u64,
    pub offset_tenths: u64,
    pub width_tenths: u64,
    pub loss: f64,
    pub collisions: bool,
    /// (size, start offset in tenths, with mission)
    pub platoons: Vec<(usize, u64, bool)>,
    pub fpr: f64,
    pub cells: u32,
}

pub fn knobs_to_json(k: &Knobs) -> Value {
    let extra = ["vision", "treatment", "power", "vision", "power", "treatment", "power"];
    let platoons: Vec<Value> = k
        .platoons
        .iter()
        .enumerate()
        .map(|(i, &(size, start, mission))| {
            let mut roles = vec!["leader"];
            roles.extend(&extra[..size - 1]);
            let mut p = json!({
                "id": i as u32 + 1,
                "size": size,
                "roles": roles,
                "start_offset": start as f64 / 10.0,
            });
            if mission {
                p["detector"] = json!({
                    "true_positive_rate": 0.9,
                    "false_positive_rate": k.fpr,
                    "sense_period": 2,
                    "compute_round_trip": 1
                });
                p["mission"] = json!({"max_cycles": 2, "treatment_duration": 3, "command_timeout": 5});
            }
            p
        })
        .collect();
    json!({
        "seed": k.seed,
        "t_end": k.t_end_tenths as f64 / 10.0,
        "slb": {
            "beacon_interval": 20,
            "slot_offset": k.offset_tenths as f64 / 10.0,
            "slot_width": k.width_tenths as f64 / 10.0
        },
        "channel": {"loss_prob": k.loss, "collisions_enabled": k.collisions},
        "platoons": platoons,
        "world": square_world(k.cells)
    })
}

/// Valid scenarios with up to three platoons of 2..=6 agents (missions need
/// at least 3), interval 20, and arbitrary loss.
pub fn arb_knobs() -> impl proptest::strategy::Strategy<Value = Knobs> {
    use proptest::prelude::*;
    let platoon = (2usize..=6, 0u64..200, any::<bool>())
        .prop_map(|(size, start, mission)| (size, start, mission && size >= 3));
    (
        any::<u64>(),
        0u64..3000,
        5u64..=30,
        1u64..=5,
        prop_oneof![Just(0.0), 0.0f64..0.5],
        any::<bool>(),
        proptest::collection::vec(platoon, 1..=3),
        prop_oneof![Just(0.0), 0.0f64..0.2],
        0u32..4,
    )
        .prop_map(|(seed, t_end, offset, width, loss, collisions, platoons, fpr, cells)| Knobs {
            seed,
            t_end_tenths: t_end,
            offset_tenths: offset,
            width_tenths: width.min(offset),
            loss,
            collisions,
            platoons,
            fpr,
            cells,
        })
}
