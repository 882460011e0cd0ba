//! The environment the platoons patrol, and each platoon's mission state.
//!
//! Motion is abstract: a platoon moves as one unit along a cyclic patrol loop
//! of segments, counting completed loops, and eventually leaves along the
//! exit path. While HALTED or TREATING it does not move.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{KinematicSnapshot, SegmentId};
use crate::time::SimDuration;

/// Distances this close to a segment end count as reaching it; absorbs
/// rounding when many tick-sized steps add up to a segment length.
const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub id: SegmentId,
    /// Traversal time at unit speed.
    pub length: f64,
    #[serde(default)]
    pub target_cells: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub patrol_loop: Vec<SegmentId>,
    /// From the junction (a loop segment) to the exit terminal.
    pub exit_path: Vec<SegmentId>,
    pub segments: Vec<SegmentSpec>,
}

impl WorldConfig {
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut known = BTreeMap::new();
        for (i, seg) in self.segments.iter().enumerate() {
            if known.insert(seg.id, i).is_some() {
                out.push((format!("world.segments[{i}].id"), format!("duplicate segment id {}", seg.id)));
            }
            if !(seg.length.is_finite() && seg.length > 0.0) {
                out.push((format!("world.segments[{i}].length"), "must be a positive number".into()));
            }
        }
        if self.patrol_loop.is_empty() {
            out.push(("world.patrol_loop".into(), "must not be empty".into()));
        }
        for (i, id) in self.patrol_loop.iter().enumerate() {
            if !known.contains_key(id) {
                out.push((format!("world.patrol_loop[{i}]"), format!("unknown segment {id}")));
            }
        }
        match self.exit_path.first() {
            None => out.push(("world.exit_path".into(), "must not be empty".into())),
            Some(first) if !self.patrol_loop.contains(first) => out.push((
                "world.exit_path[0]".into(),
                format!("junction segment {first} is not on the patrol loop"),
            )),
            _ => {}
        }
        for (i, id) in self.exit_path.iter().enumerate() {
            if !known.contains_key(id) {
                out.push((format!("world.exit_path[{i}]"), format!("unknown segment {id}")));
            }
        }
        out
    }
}

/// Route topology plus the diseased-cell load of every segment.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    patrol_loop: Vec<SegmentId>,
    exit_path: Vec<SegmentId>,
    lengths: BTreeMap<SegmentId, f64>,
    cells: BTreeMap<SegmentId, u32>,
}

impl World {
    /// Assumes `cfg` passed validation.
    pub fn new(cfg: &WorldConfig) -> Self {
        Self {
            patrol_loop: cfg.patrol_loop.clone(),
            exit_path: cfg.exit_path.clone(),
            lengths: cfg.segments.iter().map(|s| (s.id, s.length)).collect(),
            cells: cfg.segments.iter().map(|s| (s.id, s.target_cells)).collect(),
        }
    }

    pub fn patrol_loop(&self) -> &[SegmentId] {
        &self.patrol_loop
    }

    pub fn exit_path(&self) -> &[SegmentId] {
        &self.exit_path
    }

    pub fn length(&self, seg: SegmentId) -> f64 {
        self.lengths[&seg]
    }

    pub fn cells(&self, seg: SegmentId) -> u32 {
        self.cells.get(&seg).copied().unwrap_or(0)
    }

    pub fn total_cells(&self) -> u64 {
        self.cells.values().map(|&c| c as u64).sum()
    }

    /// Remove one cell. Returns false if the segment was already clean.
    pub fn inactivate_one(&mut self, seg: SegmentId) -> bool {
        match self.cells.get_mut(&seg) {
            Some(c) if *c > 0 => {
                *c -= 1;
                true
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    pub true_positive_rate: f64,
    pub false_positive_rate: f64,
    pub sense_period: SimDuration,
    /// Off-body compute latency from sample to classification.
    pub compute_round_trip: SimDuration,
}

impl DetectorModel {
    pub fn violations(&self, path: &str) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (name, v) in [
            ("true_positive_rate", self.true_positive_rate),
            ("false_positive_rate", self.false_positive_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                out.push((format!("{path}.{name}"), format!("{v} is outside [0, 1]")));
            }
        }
        if self.sense_period.is_zero() {
            out.push((format!("{path}.sense_period"), "must be positive".into()));
        }
        out
    }

    /// Probability that one sample of a segment holding `cells` comes back
    /// positive.
    pub fn positive_probability(&self, cells: u32) -> f64 {
        if cells > 0 {
            self.true_positive_rate
        } else {
            self.false_positive_rate
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitRule {
    /// Leave at the first loop completion where the cycle count has reached
    /// `max_cycles` and the completed cycle saw no detection.
    CleanCycleAfterMax,
    /// Leave as soon as the cycle count reaches `max_cycles`.
    MaxCycles,
}

fn default_exit_rule() -> ExitRule {
    ExitRule::CleanCycleAfterMax
}

fn default_command_timeout() -> SimDuration {
    SimDuration::from_ticks(100)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionConfig {
    pub max_cycles: u32,
    /// `None` means unlimited (direct inactivation); a count models a
    /// finite drug payload.
    #[serde(default)]
    pub treat_capacity: Option<u32>,
    pub treatment_duration: SimDuration,
    #[serde(default = "default_exit_rule")]
    pub exit_rule: ExitRule,
    /// How long the leader (or treatment member) waits before repeating an
    /// unacknowledged TreatAssign (or TreatDone).
    #[serde(default = "default_command_timeout")]
    pub command_timeout: SimDuration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MissionState {
    Patrol,
    Halted,
    Treating,
    Exiting,
    Done,
}

impl MissionState {
    pub const ALL: [MissionState; 5] = [
        MissionState::Patrol,
        MissionState::Halted,
        MissionState::Treating,
        MissionState::Exiting,
        MissionState::Done,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MissionState::Patrol => "PATROL",
            MissionState::Halted => "HALTED",
            MissionState::Treating => "TREATING",
            MissionState::Exiting => "EXITING",
            MissionState::Done => "DONE",
        }
    }

    pub fn can_move_to(self, next: MissionState) -> bool {
        use MissionState::*;
        matches!(
            (self, next),
            (Patrol, Halted) | (Halted, Treating) | (Treating, Patrol) | (Patrol, Exiting) | (Exiting, Done)
        )
    }

    pub fn is_moving(self) -> bool {
        matches!(self, MissionState::Patrol | MissionState::Exiting)
    }
}

impl fmt::Display for MissionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MissionState {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        MissionState::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mission state {s:?}"))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MissionError {
    #[error("illegal mission transition {from} -> {to}")]
    IllegalTransition { from: MissionState, to: MissionState },
    #[error("treatment requested while {0}")]
    NotTreating(MissionState),
}

/// Where on the route the platoon is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Leg {
    /// Index into the patrol loop.
    Loop(usize),
    /// Index into the exit path.
    Exit(usize),
}

/// Something observable that happened while moving.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionEvent {
    LoopCompleted { cycles: u32 },
    StateChanged { to: MissionState, segment: SegmentId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreatmentResult {
    Inactivated,
    FalseAlarm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlatoonMission {
    pub state: MissionState,
    pub leg: Leg,
    /// Distance covered inside the current segment.
    pub offset: f64,
    pub speed: f64,
    pub cycles_completed: u32,
    pub max_cycles: u32,
    pub detections_this_cycle: u32,
    pub treat_capacity: Option<u32>,
    pub exit_rule: ExitRule,
    /// Segment of the episode in progress, if any.
    pub target: Option<SegmentId>,
    /// Bumped at every halt so stale retry timers can tell episodes apart.
    pub episode: u64,
    /// The treatment member has finished and is waiting for Resume.
    pub treatment_finished: bool,
    pub cells_inactivated: u64,
    pub false_halts: u64,
}

impl PlatoonMission {
    pub fn new(cfg: &MissionConfig, speed: f64) -> Self {
        Self {
            state: MissionState::Patrol,
            leg: Leg::Loop(0),
            offset: 0.0,
            speed,
            cycles_completed: 0,
            max_cycles: cfg.max_cycles,
            detections_this_cycle: 0,
            treat_capacity: cfg.treat_capacity,
            exit_rule: cfg.exit_rule,
            target: None,
            episode: 0,
            treatment_finished: false,
            cells_inactivated: 0,
            false_halts: 0,
        }
    }

    pub fn transition(&mut self, to: MissionState) -> Result<(), MissionError> {
        if !self.state.can_move_to(to) {
            return Err(MissionError::IllegalTransition { from: self.state, to });
        }
        self.state = to;
        Ok(())
    }

    pub fn segment(&self, world: &World) -> SegmentId {
        match self.leg {
            Leg::Loop(i) => world.patrol_loop()[i],
            Leg::Exit(i) => world.exit_path()[i],
        }
    }

    pub fn snapshot(&self, world: &World) -> KinematicSnapshot {
        let seg = self.segment(world);
        KinematicSnapshot {
            segment_index: seg.0,
            segment_progress: (self.offset / world.length(seg)).clamp(0.0, 1.0),
            speed: if self.state.is_moving() { self.speed } else { 0.0 },
        }
    }

    pub fn capacity_exhausted(&self) -> bool {
        self.treat_capacity == Some(0)
    }

    /// Move for `dt`. Loop completions run the exit check in place, so a
    /// platoon can turn onto the exit route part-way through a step.
    pub fn advance_motion(&mut self, world: &World, dt: SimDuration) -> Vec<MotionEvent> {
        let mut events = Vec::new();
        if !self.state.is_moving() {
            return events;
        }
        let mut remaining = self.speed * dt.as_units();
        while remaining > 0.0 && self.state.is_moving() {
            let seg = self.segment(world);
            let left = world.length(seg) - self.offset;
            if remaining < left - BOUNDARY_EPS {
                self.offset += remaining;
                break;
            }
            remaining = (remaining - left).max(0.0);
            self.offset = 0.0;
            self.finish_segment(world, seg, &mut events);
        }
        events
    }

    fn finish_segment(&mut self, world: &World, seg: SegmentId, events: &mut Vec<MotionEvent>) {
        let loop_len = world.patrol_loop().len();
        let exit = world.exit_path();
        match (self.state, self.leg) {
            (MissionState::Exiting, Leg::Loop(i)) => {
                if seg == exit[0] {
                    self.enter_exit_leg(world, 1, seg, events);
                } else {
                    self.leg = Leg::Loop((i + 1) % loop_len);
                }
            }
            (MissionState::Exiting, Leg::Exit(i)) => self.enter_exit_leg(world, i + 1, seg, events),
            (_, Leg::Loop(i)) => {
                let next = (i + 1) % loop_len;
                self.leg = Leg::Loop(next);
                if next == 0 {
                    self.cycles_completed += 1;
                    events.push(MotionEvent::LoopCompleted {
                        cycles: self.cycles_completed,
                    });
                    if self.check_exit() {
                        events.push(MotionEvent::StateChanged {
                            to: MissionState::Exiting,
                            segment: self.segment(world),
                        });
                    }
                    self.detections_this_cycle = 0;
                }
            }
            (_, Leg::Exit(_)) => unreachable!("only an exiting platoon is on the exit path"),
        }
    }

    fn enter_exit_leg(&mut self, world: &World, idx: usize, last: SegmentId, events: &mut Vec<MotionEvent>) {
        if idx < world.exit_path().len() {
            self.leg = Leg::Exit(idx);
        } else {
            // terminal reached; stay parked at the end of the last segment
            self.offset = world.length(last);
            self.state = MissionState::Done;
            events.push(MotionEvent::StateChanged {
                to: MissionState::Done,
                segment: last,
            });
        }
    }

    /// Exit check at a loop completion. Returns true if the platoon turned
    /// to EXITING.
    pub fn check_exit(&mut self) -> bool {
        if self.state != MissionState::Patrol || self.cycles_completed < self.max_cycles {
            return false;
        }
        let go = match self.exit_rule {
            ExitRule::CleanCycleAfterMax => self.detections_this_cycle == 0,
            ExitRule::MaxCycles => true,
        };
        if go {
            self.state = MissionState::Exiting;
        }
        go
    }

    pub fn record_detection(&mut self) {
        self.detections_this_cycle += 1;
    }

    /// HALTED -> TREATING on TreatAssign. Returns whether the segment holds
    /// anything to treat; a clean segment is a false alarm.
    pub fn begin_treatment(&mut self, world: &World, seg: SegmentId) -> Result<bool, MissionError> {
        self.transition(MissionState::Treating)?;
        self.treatment_finished = false;
        Ok(world.cells(seg) > 0)
    }

    /// Apply one treatment to `seg`. Consumes payload only when a cell was
    /// actually inactivated.
    pub fn apply_treatment(&mut self, world: &mut World, seg: SegmentId) -> Result<TreatmentResult, MissionError> {
        if self.state != MissionState::Treating {
            return Err(MissionError::NotTreating(self.state));
        }
        self.treatment_finished = true;
        if world.inactivate_one(seg) {
            if let Some(c) = self.treat_capacity.as_mut() {
                *c = c.saturating_sub(1);
            }
            self.cells_inactivated += 1;
            Ok(TreatmentResult::Inactivated)
        } else {
            self.false_halts += 1;
            Ok(TreatmentResult::FalseAlarm)
        }
    }
}
