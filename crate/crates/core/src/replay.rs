//! Recompute a run's metrics from its trace alone.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::metrics::{Collector, MetricsReport};
use crate::protocol::{AgentId, MessageKind, PlatoonId, Role};
use crate::time::{SimDuration, SimTime};
use crate::trace::{parse_ticks, parse_trace, TraceEvent, TraceLine, TraceParseError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplayError {
    #[error(transparent)]
    Parse(#[from] TraceParseError),
    #[error("trace has no {0} line")]
    Missing(&'static str),
    #[error("trace line {line}: {message}")]
    Malformed { line: usize, message: String },
}

fn need<T>(v: Option<T>, line: usize, what: &str) -> Result<T, ReplayError> {
    v.ok_or_else(|| ReplayError::Malformed {
        line,
        message: format!("missing {what}"),
    })
}

fn kind_of(l: &TraceLine, line: usize) -> Result<MessageKind, ReplayError> {
    let label = need(l.label.as_deref(), line, "message kind")?;
    label.parse().map_err(|message| ReplayError::Malformed { line, message })
}

pub fn replay(text: &str) -> Result<MetricsReport, ReplayError> {
    replay_lines(&parse_trace(text)?)
}

pub fn replay_lines(lines: &[TraceLine]) -> Result<MetricsReport, ReplayError> {
    let mut seed = None;
    let mut slot_width = None;
    let mut end: Option<(SimTime, u64)> = None;
    let mut platoon_of: HashMap<AgentId, PlatoonId> = HashMap::new();
    let mut leaders: BTreeMap<PlatoonId, AgentId> = BTreeMap::new();

    for (i, l) in lines.iter().enumerate() {
        let n = i + 1;
        match l.event {
            TraceEvent::Run => {
                seed = Some(need(l.value, n, "seed")?);
                let raw = need(l.label.as_deref(), n, "slot width")?;
                let ticks = parse_ticks(raw).ok_or_else(|| ReplayError::Malformed {
                    line: n,
                    message: format!("bad slot width {raw:?}"),
                })?;
                slot_width = Some(SimDuration::from_ticks(ticks));
            }
            TraceEvent::Join => {
                let agent = need(l.sender, n, "agent")?;
                let platoon = need(l.platoon, n, "platoon")?;
                platoon_of.insert(agent, platoon);
                let role: Role = need(l.label.as_deref(), n, "role")?
                    .parse()
                    .map_err(|message| ReplayError::Malformed { line: n, message })?;
                if role == Role::Leader {
                    leaders.insert(platoon, agent);
                }
            }
            TraceEvent::End => end = Some((l.time, need(l.value, n, "event count")?)),
            _ => {}
        }
    }
    let seed = seed.ok_or(ReplayError::Missing("RUN"))?;
    let slot_width = slot_width.ok_or(ReplayError::Missing("RUN"))?;
    let (t_end, events) = end.ok_or(ReplayError::Missing("END"))?;
    let agents = platoon_of.len() as u64;

    let mut c = Collector::default();
    let mut resolved: HashSet<(AgentId, u64)> = HashSet::new();
    let mut alert_tx: HashMap<(AgentId, u64), SimTime> = HashMap::new();
    // platoon -> (leader reception time, alert transmit start)
    let mut alert_rx: HashMap<PlatoonId, (SimTime, SimTime)> = HashMap::new();
    let mut cause: HashMap<PlatoonId, SimTime> = HashMap::new();

    for (i, l) in lines.iter().enumerate() {
        let n = i + 1;
        match l.event {
            TraceEvent::Tx => {
                let kind = kind_of(l, n)?;
                let sender = need(l.sender, n, "sender")?;
                let seq = need(l.value, n, "seq")?;
                if kind.is_beacon() {
                    c.beacon_sent(l.time, l.time + slot_width, t_end);
                }
                if kind == MessageKind::DetectionAlert {
                    alert_tx.insert((sender, seq), l.time);
                }
            }
            TraceEvent::Rx | TraceEvent::Lost | TraceEvent::Collided => {
                let kind = kind_of(l, n)?;
                let sender = need(l.sender, n, "sender")?;
                let seq = need(l.value, n, "seq")?;
                let platoon = need(l.platoon, n, "platoon")?;
                if l.event == TraceEvent::Collided {
                    c.collisions += 1;
                }
                if kind.is_beacon() {
                    if resolved.insert((sender, seq)) {
                        c.beacon_resolved(agents.saturating_sub(1), 0);
                    }
                    if l.event == TraceEvent::Rx {
                        c.beacons_delivered += 1;
                    }
                }
                if l.event != TraceEvent::Rx {
                    continue;
                }
                let receiver = need(l.receiver, n, "receiver")?;
                let own = platoon_of.get(&receiver) == Some(&platoon);
                match kind {
                    MessageKind::DetectionAlert if leaders.get(&platoon) == Some(&receiver) => {
                        let start = alert_tx.get(&(sender, seq)).copied().ok_or_else(|| ReplayError::Malformed {
                            line: n,
                            message: format!("alert {sender}/{seq} received but never sent"),
                        })?;
                        alert_rx.insert(platoon, (l.time, start));
                    }
                    MessageKind::Halt if own => {
                        if let Some(start) = cause.remove(&platoon) {
                            c.latencies.push(l.time - start);
                        }
                    }
                    _ => {}
                }
            }
            TraceEvent::Cancelled => c.cancelled_backups += 1,
            TraceEvent::State if l.label.as_deref() == Some("HALTED") => {
                let platoon = need(l.platoon, n, "platoon")?;
                match alert_rx.get(&platoon) {
                    Some(&(at, start)) if at == l.time => {
                        cause.insert(platoon, start);
                    }
                    _ => {
                        return Err(ReplayError::Malformed {
                            line: n,
                            message: format!("platoon {platoon} halted without an alert"),
                        })
                    }
                }
            }
            TraceEvent::Treated => match l.label.as_deref() {
                Some("Inactivated") => c.cells_inactivated += 1,
                Some("FalseAlarm") => c.false_halts += 1,
                other => {
                    return Err(ReplayError::Malformed {
                        line: n,
                        message: format!("unknown treatment outcome {other:?}"),
                    })
                }
            },
            TraceEvent::Cycle => c.cycles_completed += 1,
            _ => {}
        }
    }

    Ok(c.finish(seed, t_end, leaders.len(), events))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn needs_run_and_end() {
        assert_eq!(replay(""), Err(ReplayError::Missing("RUN")));
        assert_eq!(replay("0.0\tRUN\t-\t-\t0.5\t1\t-\n"), Err(ReplayError::Missing("END")));
    }

    #[test]
    fn counts_a_tiny_trace() {
        let text = "0.0\tRUN\t-\t-\t0.5\t3\t-\n\
                    0.0\tJOIN\t0\t0\tLeader\t0\t-\n\
                    0.0\tJOIN\t0\t1\tVision\t1\t-\n\
                    0.0\tTX\t0\t0\tLeaderBeacon\t0\t-\n\
                    0.5\tRX\t0\t0\tLeaderBeacon\t0\t1\n\
                    10.0\tEND\t-\t-\t-\t2\t-\n";
        let r = replay(text).unwrap();
        assert_eq!(r.seed, 3);
        assert_eq!(r.beacons.sent, 1);
        assert_eq!(r.beacons.delivered, 1);
        assert_eq!(r.beacons.delivery_ratio, 1.0);
        assert_eq!(r.beacons.slot_utilization, 0.05);
        assert_eq!(r.run_wall_events, 2);
    }
}
