//! Line-oriented run trace.
//!
//! Every line has seven tab-separated fields:
//! `time  event  platoon  sender  label  value  receiver`, with `-` for an
//! absent field. Channel events use label = message kind and value = seq.
//! The remaining events make a trace self-describing, so that every metric
//! can be recomputed from it:
//!
//! | event      | sender          | label            | value           |
//! |------------|-----------------|------------------|-----------------|
//! | RUN        | -               | slot width       | seed            |
//! | JOIN       | agent           | role             | position        |
//! | CLASSIFIED | vision agent    | `Detection`      | segment         |
//! | STATE      | leader          | mission state    | segment         |
//! | TREATED    | treatment agent | outcome          | segment         |
//! | CYCLE      | leader          | `Patrol`         | cycles so far   |
//! | END        | -               | -                | events fired    |

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::protocol::{AgentId, PlatoonId};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TraceEvent {
    Run,
    Join,
    Tx,
    Rx,
    Lost,
    Collided,
    Cancelled,
    Classified,
    State,
    Treated,
    Cycle,
    End,
}

impl TraceEvent {
    pub const ALL: [TraceEvent; 12] = [
        TraceEvent::Run,
        TraceEvent::Join,
        TraceEvent::Tx,
        TraceEvent::Rx,
        TraceEvent::Lost,
        TraceEvent::Collided,
        TraceEvent::Cancelled,
        TraceEvent::Classified,
        TraceEvent::State,
        TraceEvent::Treated,
        TraceEvent::Cycle,
        TraceEvent::End,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TraceEvent::Run => "RUN",
            TraceEvent::Join => "JOIN",
            TraceEvent::Tx => "TX",
            TraceEvent::Rx => "RX",
            TraceEvent::Lost => "LOST",
            TraceEvent::Collided => "COLLIDED",
            TraceEvent::Cancelled => "CANCELLED",
            TraceEvent::Classified => "CLASSIFIED",
            TraceEvent::State => "STATE",
            TraceEvent::Treated => "TREATED",
            TraceEvent::Cycle => "CYCLE",
            TraceEvent::End => "END",
        }
    }

    /// TX, RX, LOST, COLLIDED and CANCELLED.
    pub fn is_channel(self) -> bool {
        matches!(
            self,
            TraceEvent::Tx | TraceEvent::Rx | TraceEvent::Lost | TraceEvent::Collided | TraceEvent::Cancelled
        )
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TraceLine {
    pub time: SimTime,
    pub event: TraceEvent,
    pub platoon: Option<PlatoonId>,
    pub sender: Option<AgentId>,
    pub label: Option<String>,
    pub value: Option<u64>,
    pub receiver: Option<AgentId>,
}

impl TraceLine {
    pub fn new(time: SimTime, event: TraceEvent) -> Self {
        Self {
            time,
            event,
            platoon: None,
            sender: None,
            label: None,
            value: None,
            receiver: None,
        }
    }

    pub fn platoon(mut self, p: PlatoonId) -> Self {
        self.platoon = Some(p);
        self
    }

    pub fn sender(mut self, a: AgentId) -> Self {
        self.sender = Some(a);
        self
    }

    pub fn label(mut self, l: impl fmt::Display) -> Self {
        self.label = Some(l.to_string());
        self
    }

    pub fn value(mut self, v: u64) -> Self {
        self.value = Some(v);
        self
    }

    pub fn receiver(mut self, a: AgentId) -> Self {
        self.receiver = Some(a);
        self
    }
}

struct Field<'a, T>(&'a Option<T>);

impl<T: fmt::Display> fmt::Display for Field<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => v.fmt(f),
            None => f.write_str("-"),
        }
    }
}

impl fmt::Display for TraceLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.time,
            self.event,
            Field(&self.platoon),
            Field(&self.sender),
            Field(&self.label),
            Field(&self.value),
            Field(&self.receiver)
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceParseError {
    #[error("line {line}: expected 7 tab-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: bad {field} {value:?}")]
    Field {
        line: usize,
        field: &'static str,
        value: String,
    },
}

fn opt<T: FromStr>(raw: &str, line: usize, field: &'static str) -> Result<Option<T>, TraceParseError> {
    if raw == "-" {
        return Ok(None);
    }
    raw.parse().map(Some).map_err(|_| TraceParseError::Field {
        line,
        field,
        value: raw.to_string(),
    })
}

/// Parse a time printed as `<whole>.<tenth>` into ticks.
pub fn parse_ticks(raw: &str) -> Option<u64> {
    let (whole, frac) = raw.split_once('.')?;
    if frac.len() != 1 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let whole: u64 = whole.parse().ok()?;
    let frac: u64 = frac.parse().ok()?;
    whole.checked_mul(10)?.checked_add(frac)
}

fn parse_time(raw: &str, line: usize) -> Result<SimTime, TraceParseError> {
    parse_ticks(raw).map(SimTime::from_ticks).ok_or_else(|| TraceParseError::Field {
        line,
        field: "time",
        value: raw.to_string(),
    })
}

impl TraceLine {
    /// Parse one line; `line` is the 1-based line number for diagnostics.
    pub fn parse(raw: &str, line: usize) -> Result<Self, TraceParseError> {
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 7 {
            return Err(TraceParseError::FieldCount {
                line,
                found: fields.len(),
            });
        }
        let event = TraceEvent::ALL
            .into_iter()
            .find(|e| e.name() == fields[1])
            .ok_or_else(|| TraceParseError::Field {
                line,
                field: "event",
                value: fields[1].to_string(),
            })?;
        Ok(TraceLine {
            time: parse_time(fields[0], line)?,
            event,
            platoon: opt::<u32>(fields[2], line, "platoon")?.map(PlatoonId),
            sender: opt::<u32>(fields[3], line, "sender")?.map(AgentId),
            label: opt::<String>(fields[4], line, "label")?,
            value: opt(fields[5], line, "value")?,
            receiver: opt::<u32>(fields[6], line, "receiver")?.map(AgentId),
        })
    }
}

/// Parse a whole trace, skipping blank lines.
pub fn parse_trace(text: &str) -> Result<Vec<TraceLine>, TraceParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| TraceLine::parse(l, i + 1))
        .collect()
}

/// Collects trace lines for a run. A disabled recorder drops everything,
/// which keeps long statistical runs cheap.
#[derive(Debug, Clone, Default)]
pub struct TraceRecorder {
    enabled: bool,
    lines: Vec<TraceLine>,
}

impl TraceRecorder {
    pub fn new(enabled: bool) -> Self {
        Self {
            enabled,
            lines: Vec::new(),
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn push(&mut self, line: TraceLine) {
        if self.enabled {
            self.lines.push(line);
        }
    }

    pub fn lines(&self) -> &[TraceLine] {
        &self.lines
    }

    pub fn render(&self) -> String {
        render(&self.lines)
    }
}

/// One line per entry, each terminated by a newline.
pub fn render(lines: &[TraceLine]) -> String {
    let mut out = String::with_capacity(lines.len() * 32);
    for l in lines {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    out
}
