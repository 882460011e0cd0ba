//! Shared broadcast medium.
//!
//! A frame occupies `[start, start + slot_width)` and is delivered at the end
//! of that window to every agent except its sender, across all platoons.
//! Overlapping frames destroy each other, except that a priority frame whose
//! overlapping neighbours are all non-priority survives (when
//! `priority_survives` is set). Surviving frames are then dropped per
//! receiver with probability `loss_prob`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::protocol::{AgentId, Message};
use crate::rng::{frame_receiver_key, RandomStream, Substream};
use crate::time::{SimDuration, SimTime};

fn default_true() -> bool {
    true
}

/// Drop one specific frame at every receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcedDrop {
    pub agent: AgentId,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub loss_prob: f64,
    pub collisions_enabled: bool,
    #[serde(default = "default_true")]
    pub priority_survives: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub forced_drops: Vec<ForcedDrop>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            loss_prob: 0.0,
            collisions_enabled: true,
            priority_survives: true,
            forced_drops: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TxId(pub u64);

/// Half-open airtime window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Airtime {
    pub start: SimTime,
    pub end: SimTime,
}

impl Airtime {
    pub fn new(start: SimTime, width: SimDuration) -> Self {
        Self {
            start,
            end: start + width,
        }
    }

    pub fn overlaps(&self, other: &Airtime) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxStatus {
    Delivered,
    Collided,
    PartiallyLost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub id: TxId,
    pub msg: Message,
    pub airtime: Airtime,
    /// Set once the frame has been resolved at the end of its airtime.
    pub status: Option<TxStatus>,
}

/// Collision status for a set of frames, each given as `(airtime, priority)`.
///
/// A frame with no overlapping neighbour is delivered. A frame that overlaps
/// anything is collided, unless it is a priority frame, `priority_survives`
/// holds, and none of its neighbours is a priority frame.
pub fn resolve_collisions(frames: &[(Airtime, bool)], cfg: &ChannelConfig) -> Vec<TxStatus> {
    frames
        .iter()
        .enumerate()
        .map(|(i, (air, priority))| {
            if !cfg.collisions_enabled {
                return TxStatus::Delivered;
            }
            let mut overlapped = false;
            let mut priority_neighbour = false;
            for (j, (other, other_priority)) in frames.iter().enumerate() {
                if i != j && air.overlaps(other) {
                    overlapped = true;
                    priority_neighbour |= *other_priority;
                }
            }
            if !overlapped || (*priority && cfg.priority_survives && !priority_neighbour) {
                TxStatus::Delivered
            } else {
                TxStatus::Collided
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reception {
    Received,
    Lost,
}

/// Outcome of a frame at the end of its airtime.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub transmission: Transmission,
    /// Empty when the frame collided.
    pub receptions: Vec<(AgentId, Reception)>,
}

impl Delivery {
    pub fn collided(&self) -> bool {
        self.transmission.status == Some(TxStatus::Collided)
    }

    pub fn received_by(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.receptions
            .iter()
            .filter(|(_, r)| *r == Reception::Received)
            .map(|(a, _)| *a)
    }
}

#[derive(Debug)]
pub struct Channel {
    cfg: ChannelConfig,
    slot_width: SimDuration,
    next_id: u64,
    /// Frames still on air, plus resolved frames that may overlap them.
    airspace: BTreeMap<TxId, Transmission>,
}

impl Channel {
    pub fn new(cfg: ChannelConfig, slot_width: SimDuration) -> Self {
        Self {
            cfg,
            slot_width,
            next_id: 0,
            airspace: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    pub fn slot_width(&self) -> SimDuration {
        self.slot_width
    }

    pub fn in_flight(&self) -> impl Iterator<Item = &Transmission> {
        self.airspace.values().filter(|t| t.status.is_none())
    }

    pub fn get(&self, id: TxId) -> Option<&Transmission> {
        self.airspace.get(&id)
    }

    /// Put `msg` on air at `start`. The caller schedules delivery at the
    /// returned time.
    pub fn transmit(&mut self, msg: Message, start: SimTime) -> (TxId, SimTime) {
        let id = TxId(self.next_id);
        self.next_id += 1;
        let airtime = Airtime::new(start, self.slot_width);
        self.airspace.insert(
            id,
            Transmission {
                id,
                msg,
                airtime,
                status: None,
            },
        );
        (id, airtime.end)
    }

    /// Resolve frame `id` at the end of its airtime. `receivers` lists every
    /// agent on the medium in delivery order; the sender is skipped.
    pub fn deliver(&mut self, id: TxId, receivers: &[AgentId], rng: &RandomStream) -> Delivery {
        let frame = self
            .airspace
            .get(&id)
            .unwrap_or_else(|| panic!("delivery for unknown transmission {id:?}"))
            .clone();

        // every frame that could overlap this one has started by now
        let window: Vec<&Transmission> = self
            .airspace
            .values()
            .filter(|t| t.id == id || t.airtime.overlaps(&frame.airtime))
            .collect();
        let pairs: Vec<(Airtime, bool)> = window.iter().map(|t| (t.airtime, t.msg.priority)).collect();
        let own = window.iter().position(|t| t.id == id).expect("frame in its own window");
        let collided = resolve_collisions(&pairs, &self.cfg)[own] == TxStatus::Collided;

        let mut receptions = Vec::new();
        let status = if collided {
            TxStatus::Collided
        } else {
            let forced = self
                .cfg
                .forced_drops
                .iter()
                .any(|d| d.agent == frame.msg.sender && d.seq == frame.msg.seq);
            let mut any_lost = false;
            for &rx in receivers {
                if rx == frame.msg.sender {
                    continue;
                }
                let lost = forced
                    || rng.bernoulli(
                        Substream::ChannelLoss,
                        frame_receiver_key(frame.msg.sender.0, frame.msg.seq, rx.0),
                        self.cfg.loss_prob,
                    );
                any_lost |= lost;
                receptions.push((rx, if lost { Reception::Lost } else { Reception::Received }));
            }
            if any_lost {
                TxStatus::PartiallyLost
            } else {
                TxStatus::Delivered
            }
        };

        let entry = self.airspace.get_mut(&id).expect("frame present");
        entry.status = Some(status);
        let transmission = entry.clone();
        self.prune();
        Delivery {
            transmission,
            receptions,
        }
    }

    /// Drop resolved frames that can no longer overlap anything still on air.
    fn prune(&mut self) {
        let earliest_live = self
            .airspace
            .values()
            .filter(|t| t.status.is_none())
            .map(|t| t.airtime.start)
            .min();
        self.airspace.retain(|_, t| match earliest_live {
            None => false,
            Some(start) => t.status.is_none() || t.airtime.end > start,
        });
    }
}
