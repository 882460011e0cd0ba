//! Slotted leader-based (SLB) beaconing, one agent at a time.
//!
//! The leader beacons every `beacon_interval`. A follower that hears its own
//! leader's beacon drops whatever SENDBEACON it had pending and reschedules
//! itself at `position * slot_offset` after the leader's transmit start. Every
//! beacon also schedules a backup at `+beacon_interval`, so a follower keeps
//! its slot when a leader beacon is lost. On top of that sit the priority
//! command frames: detection alerts from vision members, halt / treat-assign /
//! resume from the leader, and treat-done from the treatment member.
//!
//! Agents never touch the event queue or the medium directly; everything goes
//! through a [`RadioHost`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EventId;
use crate::time::{SimDuration, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlatoonId(pub u32);

/// Slot index within a platoon. The leader sits at 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Position(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SegmentId(pub u32);

macro_rules! display_inner {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    )*};
}
display_inner!(AgentId, PlatoonId, Position, SegmentId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Leader,
    Vision,
    Treatment,
    Power,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Leader, Role::Vision, Role::Treatment, Role::Power];

    pub fn name(self) -> &'static str {
        match self {
            Role::Leader => "Leader",
            Role::Vision => "Vision",
            Role::Treatment => "Treatment",
            Role::Power => "Power",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Role::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown role {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlbConfig {
    pub beacon_interval: SimDuration,
    pub slot_offset: SimDuration,
    /// Airtime of one frame.
    pub slot_width: SimDuration,
}

impl SlbConfig {
    /// Invariant violations for a platoon of `platoon_size` agents.
    pub fn violations(&self, platoon_size: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.slot_width.is_zero() {
            out.push("slot_width must be positive".to_string());
        }
        if self.beacon_interval.is_zero() {
            out.push("beacon_interval must be positive".to_string());
        }
        if self.slot_width > self.slot_offset {
            out.push(format!(
                "slot_width ({}) must not exceed slot_offset ({})",
                self.slot_width, self.slot_offset
            ));
        }
        let frame_span = self.slot_offset * platoon_size as u64 + self.slot_width;
        if frame_span > self.beacon_interval {
            out.push(format!(
                "platoon_size * slot_offset + slot_width <= beacon_interval violated: {} * {} + {} = {} > {}",
                platoon_size, self.slot_offset, self.slot_width, frame_span, self.beacon_interval
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    LeaderBeacon,
    MemberBeacon,
    DetectionAlert,
    Halt,
    TreatAssign,
    TreatDone,
    Resume,
}

impl MessageKind {
    pub const ALL: [MessageKind; 7] = [
        MessageKind::LeaderBeacon,
        MessageKind::MemberBeacon,
        MessageKind::DetectionAlert,
        MessageKind::Halt,
        MessageKind::TreatAssign,
        MessageKind::TreatDone,
        MessageKind::Resume,
    ];

    pub fn is_priority(self) -> bool {
        !self.is_beacon()
    }

    pub fn is_beacon(self) -> bool {
        matches!(self, MessageKind::LeaderBeacon | MessageKind::MemberBeacon)
    }

    /// The only role allowed to originate this kind. Beacons come from
    /// everyone.
    pub fn originator(self) -> Option<Role> {
        match self {
            MessageKind::LeaderBeacon => Some(Role::Leader),
            MessageKind::MemberBeacon => None,
            MessageKind::DetectionAlert => Some(Role::Vision),
            MessageKind::Halt | MessageKind::TreatAssign | MessageKind::Resume => Some(Role::Leader),
            MessageKind::TreatDone => Some(Role::Treatment),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::LeaderBeacon => "LeaderBeacon",
            MessageKind::MemberBeacon => "MemberBeacon",
            MessageKind::DetectionAlert => "DetectionAlert",
            MessageKind::Halt => "Halt",
            MessageKind::TreatAssign => "TreatAssign",
            MessageKind::TreatDone => "TreatDone",
            MessageKind::Resume => "Resume",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MessageKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        MessageKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown message kind {s:?}"))
    }
}

/// What a beacon tells peers about the sender's motion.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KinematicSnapshot {
    pub segment_index: u32,
    /// Fraction of the current segment covered, in `[0, 1]`.
    pub segment_progress: f64,
    /// Route-length units per time unit; zero while stopped.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub kind: MessageKind,
    pub platoon: PlatoonId,
    pub sender: AgentId,
    pub sender_role: Role,
    pub sender_position: Position,
    pub seq: u64,
    pub priority: bool,
    pub vehicle_data: KinematicSnapshot,
    pub mission_payload: Option<SegmentId>,
}

/// A frame an agent has been asked to put on air when its TransmitStart
/// event fires. The message itself (seq, snapshot) is built at that moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outgoing {
    Beacon,
    Command {
        kind: MessageKind,
        segment: Option<SegmentId>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtoPhase {
    Idle,
    Beaconing,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("agent {agent} with role {role} cannot originate {kind}")]
    WrongRole {
        agent: AgentId,
        role: Role,
        kind: MessageKind,
    },
}

/// Everything an agent needs from the outside world.
pub trait RadioHost {
    fn now(&self) -> SimTime;
    /// Schedule a TransmitStart for `agent` at `now + delay`.
    fn schedule_transmit(&mut self, agent: AgentId, frame: Outgoing, delay: SimDuration) -> EventId;
    /// Cancel a pending SENDBEACON owned by `agent`.
    fn unschedule_beacon(&mut self, platoon: PlatoonId, agent: AgentId, id: EventId) -> bool;
    /// Put `msg` on air starting now.
    fn broadcast(&mut self, msg: Message);
}

/// Result of handing a delivered frame to an agent, for the mission layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Inbound {
    /// Different platoon; dropped without touching any state.
    Foreign,
    LeaderBeacon,
    MemberBeacon,
    /// Leader received a detection alert.
    Alert { segment: Option<SegmentId> },
    Halted,
    /// Treatment member received an assignment.
    TreatAssign { segment: Option<SegmentId> },
    /// Leader received treat-done.
    TreatDone { segment: Option<SegmentId> },
    Resumed,
    /// Same platoon but not addressed to this agent's role.
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlertOutcome {
    /// Halt and TreatAssign scheduled.
    Halting,
    /// Platoon already busy with an episode; alert dropped.
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub platoon: PlatoonId,
    pub role: Role,
    pub position: Position,
    pub pending_beacon: Option<EventId>,
    pub cacc_view: BTreeMap<AgentId, KinematicSnapshot>,
    pub proto_phase: ProtoPhase,
    pub halted: bool,
    next_seq: u64,
}

impl AgentState {
    pub fn new(id: AgentId, platoon: PlatoonId, role: Role, position: Position) -> Self {
        Self {
            id,
            platoon,
            role,
            position,
            pending_beacon: None,
            cacc_view: BTreeMap::new(),
            proto_phase: ProtoPhase::Idle,
            halted: false,
            next_seq: 0,
        }
    }

    pub fn is_leader(&self) -> bool {
        self.role == Role::Leader
    }

    /// Seq the next frame from this agent will carry.
    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// ONSTARTUP. Only the leader schedules anything: its first SENDBEACON
    /// at `start_offset`, after which SENDBEACON keeps the cycle going.
    pub fn on_startup(&mut self, start_offset: SimDuration, host: &mut impl RadioHost) {
        if self.is_leader() {
            self.pending_beacon = Some(host.schedule_transmit(self.id, Outgoing::Beacon, start_offset));
            self.proto_phase = ProtoPhase::Beaconing;
        }
    }

    /// Build the next outgoing frame, consuming a sequence number.
    pub fn build_message(
        &mut self,
        kind: MessageKind,
        segment: Option<SegmentId>,
        vehicle_data: KinematicSnapshot,
    ) -> Message {
        let seq = self.next_seq;
        self.next_seq += 1;
        Message {
            kind,
            platoon: self.platoon,
            sender: self.id,
            sender_role: self.role,
            sender_position: self.position,
            seq,
            priority: kind.is_priority(),
            vehicle_data,
            mission_payload: segment,
        }
    }

    /// SENDBEACON: broadcast vehicle data and arm the next beacon one
    /// interval after this transmit start. For followers that next beacon is
    /// the backup used if the leader's next beacon never arrives.
    pub fn send_beacon(
        &mut self,
        cfg: &SlbConfig,
        fired: EventId,
        vehicle_data: KinematicSnapshot,
        host: &mut impl RadioHost,
    ) -> Message {
        debug_assert!(
            self.pending_beacon.is_none_or(|p| p == fired),
            "agent {} fired beacon {fired} while {:?} was pending",
            self.id,
            self.pending_beacon
        );
        let kind = if self.is_leader() {
            MessageKind::LeaderBeacon
        } else {
            MessageKind::MemberBeacon
        };
        let msg = self.build_message(kind, None, vehicle_data);
        host.broadcast(msg.clone());
        self.pending_beacon = Some(host.schedule_transmit(self.id, Outgoing::Beacon, cfg.beacon_interval));
        self.proto_phase = ProtoPhase::Beaconing;
        msg
    }

    /// Put a priority command frame on air now.
    pub fn send_command(
        &mut self,
        kind: MessageKind,
        segment: Option<SegmentId>,
        vehicle_data: KinematicSnapshot,
        host: &mut impl RadioHost,
    ) -> Result<Message, ProtocolError> {
        self.check_originator(kind)?;
        let msg = self.build_message(kind, segment, vehicle_data);
        host.broadcast(msg.clone());
        Ok(msg)
    }

    /// Queue a priority command frame for `now + delay`.
    pub fn schedule_command(
        &mut self,
        kind: MessageKind,
        segment: Option<SegmentId>,
        delay: SimDuration,
        host: &mut impl RadioHost,
    ) -> Result<EventId, ProtocolError> {
        self.check_originator(kind)?;
        Ok(host.schedule_transmit(self.id, Outgoing::Command { kind, segment }, delay))
    }

    fn check_originator(&self, kind: MessageKind) -> Result<(), ProtocolError> {
        match kind.originator() {
            Some(role) if role != self.role => Err(ProtocolError::WrongRole {
                agent: self.id,
                role: self.role,
                kind,
            }),
            _ => Ok(()),
        }
    }

    /// ONBEACON generalised to every frame kind.
    pub fn on_message(&mut self, msg: &Message, cfg: &SlbConfig, host: &mut impl RadioHost) -> Inbound {
        if msg.platoon != self.platoon {
            return Inbound::Foreign;
        }
        // updateCACC: only the snapshot is kept
        self.cacc_view.insert(msg.sender, msg.vehicle_data);

        if let Some(required) = msg.kind.originator() {
            if msg.sender_role != required {
                debug!(
                    "agent {} dropping {} from {} with role {}",
                    self.id, msg.kind, msg.sender, msg.sender_role
                );
                return Inbound::Ignored;
            }
        }

        match (msg.kind, self.role) {
            (MessageKind::LeaderBeacon, Role::Leader) => Inbound::Ignored,
            (MessageKind::LeaderBeacon, _) => {
                self.on_leader_beacon(msg, cfg, host);
                Inbound::LeaderBeacon
            }
            (MessageKind::MemberBeacon, _) => Inbound::MemberBeacon,
            (MessageKind::DetectionAlert, Role::Leader) => Inbound::Alert {
                segment: msg.mission_payload,
            },
            (MessageKind::Halt, role) if role != Role::Leader => {
                self.halted = true;
                Inbound::Halted
            }
            (MessageKind::TreatAssign, Role::Treatment) => Inbound::TreatAssign {
                segment: msg.mission_payload,
            },
            (MessageKind::TreatDone, Role::Leader) => Inbound::TreatDone {
                segment: msg.mission_payload,
            },
            (MessageKind::Resume, role) if role != Role::Leader => {
                self.halted = false;
                Inbound::Resumed
            }
            (kind, role) => {
                debug!("agent {} ({role}) ignoring {kind} from {}", self.id, msg.sender);
                Inbound::Ignored
            }
        }
    }

    /// ONLEADERBEACON: drop the pending beacon (normally the backup) and
    /// re-anchor to the leader. Delivery happens at the end of the leader's
    /// airtime, so the leader's transmit start is `now - slot_width`.
    pub fn on_leader_beacon(&mut self, msg: &Message, cfg: &SlbConfig, host: &mut impl RadioHost) {
        debug_assert_eq!(msg.kind, MessageKind::LeaderBeacon);
        if let Some(pending) = self.pending_beacon.take() {
            host.unschedule_beacon(self.platoon, self.id, pending);
        }
        let now = host.now();
        let leader_start = now.ticks().saturating_sub(cfg.slot_width.ticks());
        let own_start = leader_start + cfg.slot_offset.ticks() * self.position.0 as u64;
        let delay = SimDuration::from_ticks(own_start.saturating_sub(now.ticks()));
        self.pending_beacon = Some(host.schedule_transmit(self.id, Outgoing::Beacon, delay));
        self.proto_phase = ProtoPhase::Beaconing;
    }

    /// Vision member reports a positive classification. The alert preempts
    /// the TDMA schedule and goes on air in the current instant.
    pub fn raise_detection(
        &mut self,
        observation: Option<SegmentId>,
        host: &mut impl RadioHost,
    ) -> Result<EventId, ProtocolError> {
        self.schedule_command(MessageKind::DetectionAlert, observation, SimDuration::ZERO, host)
    }

    /// Leader reacts to an own-platoon alert: Halt now, TreatAssign in the
    /// following frame. `busy` is true while an episode is already running.
    pub fn leader_handle_alert(
        &mut self,
        alert: &Message,
        cfg: &SlbConfig,
        busy: bool,
        host: &mut impl RadioHost,
    ) -> Result<AlertOutcome, ProtocolError> {
        debug_assert_eq!(alert.platoon, self.platoon);
        if busy {
            return Ok(AlertOutcome::Duplicate);
        }
        self.schedule_command(MessageKind::Halt, alert.mission_payload, SimDuration::ZERO, host)?;
        self.schedule_command(MessageKind::TreatAssign, alert.mission_payload, cfg.slot_width, host)?;
        self.halted = true;
        Ok(AlertOutcome::Halting)
    }

    /// Leader closes an episode. Returns false (and does nothing) when no
    /// treatment is in progress.
    pub fn leader_resume(
        &mut self,
        done: &Message,
        treating: bool,
        host: &mut impl RadioHost,
    ) -> Result<bool, ProtocolError> {
        if !treating {
            debug!("leader {} ignoring {} outside treatment", self.id, done.kind);
            return Ok(false);
        }
        self.schedule_command(MessageKind::Resume, done.mission_payload, SimDuration::ZERO, host)?;
        self.halted = false;
        Ok(true)
    }
}
