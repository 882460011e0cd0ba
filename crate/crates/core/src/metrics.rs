//! Per-run counters and the exported report.

use serde::{Deserialize, Serialize};

use crate::time::{SimDuration, SimTime};

pub const CSV_COLUMNS: [&str; 13] = [
    "seed",
    "t_end",
    "beacons_sent",
    "beacons_delivered",
    "delivery_ratio",
    "collisions",
    "cancelled_backups",
    "mean_detect_to_halt",
    "max_detect_to_halt",
    "cells_inactivated",
    "false_halts",
    "cycles_completed",
    "slot_utilization",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeaconMetrics {
    pub sent: u64,
    /// Counted per receiver.
    pub delivered: u64,
    /// Receivers that resolved beacon frames were addressed to.
    pub expected: u64,
    pub delivery_ratio: f64,
    /// Collided frames of any kind.
    pub collisions: u64,
    pub cancelled_backups: u64,
    /// Beacon airtime per platoon as a fraction of the run length.
    pub slot_utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionMetrics {
    /// Classification return to Halt delivery, one sample per episode.
    pub detect_to_halt: Vec<SimDuration>,
    pub mean_detect_to_halt: f64,
    pub max_detect_to_halt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionMetrics {
    pub cells_inactivated: u64,
    pub false_halts: u64,
    /// Summed over platoons.
    pub cycles_completed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub seed: u64,
    pub t_end: SimTime,
    pub beacons: BeaconMetrics,
    pub detection: DetectionMetrics,
    pub mission: MissionMetrics,
    pub run_wall_events: u64,
}

impl MetricsReport {
    pub fn csv_header() -> String {
        CSV_COLUMNS.join(",")
    }

    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            self.t_end.to_string(),
            self.beacons.sent.to_string(),
            self.beacons.delivered.to_string(),
            self.beacons.delivery_ratio.to_string(),
            self.beacons.collisions.to_string(),
            self.beacons.cancelled_backups.to_string(),
            self.detection.mean_detect_to_halt.to_string(),
            self.detection.max_detect_to_halt.to_string(),
            self.mission.cells_inactivated.to_string(),
            self.mission.false_halts.to_string(),
            self.mission.cycles_completed.to_string(),
            self.beacons.slot_utilization.to_string(),
        ]
    }

    pub fn csv_row(&self) -> String {
        self.csv_fields().join(",")
    }

    /// Header plus one row.
    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::csv_header(), self.csv_row())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Numeric CSV columns (everything after seed and t_end), for aggregation.
    pub fn numeric_columns(&self) -> [(&'static str, f64); 11] {
        [
            ("beacons_sent", self.beacons.sent as f64),
            ("beacons_delivered", self.beacons.delivered as f64),
            ("delivery_ratio", self.beacons.delivery_ratio),
            ("collisions", self.beacons.collisions as f64),
            ("cancelled_backups", self.beacons.cancelled_backups as f64),
            ("mean_detect_to_halt", self.detection.mean_detect_to_halt),
            ("max_detect_to_halt", self.detection.max_detect_to_halt),
            ("cells_inactivated", self.mission.cells_inactivated as f64),
            ("false_halts", self.mission.false_halts as f64),
            ("cycles_completed", self.mission.cycles_completed as f64),
            ("slot_utilization", self.beacons.slot_utilization),
        ]
    }
}

/// Raw counters fed by the simulation (and by the replay checker).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Collector {
    pub beacons_sent: u64,
    pub beacons_delivered: u64,
    pub beacons_expected: u64,
    pub collisions: u64,
    pub cancelled_backups: u64,
    pub beacon_airtime_ticks: u64,
    pub latencies: Vec<SimDuration>,
    pub cells_inactivated: u64,
    pub false_halts: u64,
    pub cycles_completed: u64,
}

impl Collector {
    /// A beacon went on air over `[start, end)`; airtime past `t_end` is
    /// not counted.
    pub fn beacon_sent(&mut self, start: SimTime, end: SimTime, t_end: SimTime) {
        self.beacons_sent += 1;
        self.beacon_airtime_ticks += end.min(t_end).ticks().saturating_sub(start.ticks());
    }

    /// A beacon frame was resolved for `addressed` receivers, `received` of
    /// which got it.
    pub fn beacon_resolved(&mut self, addressed: u64, received: u64) {
        self.beacons_expected += addressed;
        self.beacons_delivered += received;
    }

    pub fn finish(&self, seed: u64, t_end: SimTime, platoons: usize, events_fired: u64) -> MetricsReport {
        let n = self.latencies.len() as u64;
        let sum: u64 = self.latencies.iter().map(|d| d.ticks()).sum();
        let max = self.latencies.iter().map(|d| d.ticks()).max().unwrap_or(0);
        let denom = platoons as u64 * t_end.ticks();
        MetricsReport {
            seed,
            t_end,
            beacons: BeaconMetrics {
                sent: self.beacons_sent,
                delivered: self.beacons_delivered,
                expected: self.beacons_expected,
                delivery_ratio: self.beacons_delivered as f64 / self.beacons_expected.max(1) as f64,
                collisions: self.collisions,
                cancelled_backups: self.cancelled_backups,
                slot_utilization: if denom == 0 {
                    0.0
                } else {
                    self.beacon_airtime_ticks as f64 / denom as f64
                },
            },
            detection: DetectionMetrics {
                detect_to_halt: self.latencies.clone(),
                mean_detect_to_halt: if n == 0 { 0.0 } else { sum as f64 / (10 * n) as f64 },
                max_detect_to_halt: max as f64 / 10.0,
            },
            mission: MissionMetrics {
                cells_inactivated: self.cells_inactivated,
                false_halts: self.false_halts,
                cycles_completed: self.cycles_completed,
            },
            run_wall_events: events_fired,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(ticks: u64) -> SimTime {
        SimTime::from_ticks(ticks)
    }

    #[test]
    fn empty_run_is_all_zero() {
        let r = Collector::default().finish(0, SimTime::ZERO, 1, 0);
        assert_eq!(r.csv_row(), "0,0.0,0,0,0,0,0,0,0,0,0,0,0");
    }

    #[test]
    fn latency_stats() {
        let c = Collector {
            latencies: vec![SimDuration::from_ticks(10), SimDuration::from_ticks(5)],
            ..Collector::default()
        };
        let r = c.finish(1, t(100), 1, 0);
        assert_eq!(r.detection.mean_detect_to_halt, 0.75);
        assert_eq!(r.detection.max_detect_to_halt, 1.0);
    }

    #[test]
    fn utilization_clips_at_t_end() {
        let mut c = Collector::default();
        c.beacon_sent(t(0), t(5), t(100));
        c.beacon_sent(t(98), t(103), t(100));
        let r = c.finish(1, t(100), 1, 0);
        assert_eq!(r.beacons.slot_utilization, 0.07);
        assert_eq!(r.beacons.sent, 2);
    }

    #[test]
    fn ratio_guards_zero_expected() {
        let mut c = Collector::default();
        c.beacon_resolved(3, 0);
        assert_eq!(c.finish(1, t(10), 1, 0).beacons.delivery_ratio, 0.0);
        assert_eq!(Collector::default().finish(1, t(10), 1, 0).beacons.delivery_ratio, 0.0);
    }

    #[test]
    fn json_round_trip() {
        let mut c = Collector::default();
        c.beacon_sent(t(0), t(5), t(3000));
        c.beacon_resolved(3, 2);
        c.latencies.push(SimDuration::from_ticks(10));
        let r = c.finish(9, t(3000), 2, 17);
        assert_eq!(MetricsReport::from_json(&r.to_json()).unwrap(), r);
        assert_eq!(r.to_json(), MetricsReport::from_json(&r.to_json()).unwrap().to_json());
    }

    #[test]
    fn header_matches_fields() {
        let r = Collector::default().finish(0, t(10), 1, 0);
        assert_eq!(r.csv_fields().len(), CSV_COLUMNS.len());
    }
}
