//! Deterministic discrete-event engine.
//!
//! Events are ordered by `(fire_at, class, seq)`. At a shared timestamp,
//! deliveries run before scripted commands, which run before transmissions,
//! which run before periodic ticks. Ties beyond that fall back to insertion
//! order. Cancelled events are removed from the queue outright.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::panic::{self, AssertUnwindSafe};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{SimDuration, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventId(u64);

impl EventId {
    pub fn raw(self) -> u64 {
        self.0
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Same-timestamp ordering class. Lower fires first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PriorityClass {
    Delivery = 0,
    ScenarioCommand = 1,
    Transmit = 2,
    Tick = 3,
}

pub trait Classified {
    fn class(&self) -> PriorityClass;
}

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub id: EventId,
    pub fire_at: SimTime,
    pub seq: u64,
    pub payload: P,
}

type QueueKey = (SimTime, PriorityClass, u64);

/// Pending events plus the virtual clock.
#[derive(Debug)]
pub struct EventQueue<P> {
    now: SimTime,
    next_seq: u64,
    pending: BTreeMap<QueueKey, Event<P>>,
    index: HashMap<EventId, QueueKey>,
}

impl<P: Classified> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P: Classified> EventQueue<P> {
    pub fn new() -> Self {
        Self {
            now: SimTime::ZERO,
            next_seq: 0,
            pending: BTreeMap::new(),
            index: HashMap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Enqueue `payload` to fire at `now + delay`. A zero delay fires within
    /// the current timestamp, after anything already queued ahead of it.
    pub fn schedule(&mut self, delay: SimDuration, payload: P) -> EventId {
        let seq = self.next_seq;
        self.next_seq += 1;
        let id = EventId(seq);
        let fire_at = self.now + delay;
        let key = (fire_at, payload.class(), seq);
        self.pending.insert(
            key,
            Event {
                id,
                fire_at,
                seq,
                payload,
            },
        );
        self.index.insert(id, key);
        id
    }

    /// Remove a pending event. False if it already fired, was already
    /// cancelled, or never existed.
    pub fn unschedule(&mut self, id: EventId) -> bool {
        self.cancel(id).is_some()
    }

    /// Like [`unschedule`](Self::unschedule) but hands back the payload.
    pub fn cancel(&mut self, id: EventId) -> Option<P> {
        let key = self.index.remove(&id)?;
        self.pending.remove(&key).map(|ev| ev.payload)
    }

    pub fn is_pending(&self, id: EventId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn fire_time(&self, id: EventId) -> Option<SimTime> {
        self.index.get(&id).map(|k| k.0)
    }

    /// Pending events in firing order.
    pub fn iter(&self) -> impl Iterator<Item = &Event<P>> {
        self.pending.values()
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.pending.keys().next().map(|k| k.0)
    }

    /// Pop the next event if it fires at or before `limit`, advancing the clock.
    pub fn pop_due(&mut self, limit: SimTime) -> Option<Event<P>> {
        let key = *self.pending.keys().next()?;
        if key.0 > limit {
            return None;
        }
        let ev = self.pending.remove(&key)?;
        self.index.remove(&ev.id);
        self.now = ev.fire_at;
        Some(ev)
    }

    /// Move the clock forward without firing anything. Panics if that would
    /// skip a pending event or run backwards.
    pub fn advance_to(&mut self, t: SimTime) {
        assert!(t >= self.now, "clock cannot run backwards");
        if let Some(next) = self.peek_time() {
            assert!(next >= t, "advancing to {t} would skip an event at {next}");
        }
        self.now = t;
    }
}

/// A simulation model driven by the engine.
pub trait Model {
    type Event: Classified + fmt::Debug;
    type Error: fmt::Display;

    fn handle(
        &mut self,
        queue: &mut EventQueue<Self::Event>,
        event: Event<Self::Event>,
    ) -> Result<(), Self::Error>;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("cannot run backwards: clock is at {now}, requested {requested}")]
    TimeReversal { now: SimTime, requested: SimTime },
    #[error("event {id} at t={time} failed: {message}")]
    Handler {
        id: EventId,
        time: SimTime,
        message: String,
    },
    #[error("event {id} at t={time} panicked: {message}")]
    Panic {
        id: EventId,
        time: SimTime,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub events_fired: u64,
    pub final_clock: SimTime,
}

/// One fired event, as kept in the optional engine log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiredEvent {
    pub id: EventId,
    pub time: SimTime,
    pub class: PriorityClass,
}

pub struct Engine<M: Model> {
    queue: EventQueue<M::Event>,
    model: M,
    events_fired: u64,
    fired_log: Option<Vec<FiredEvent>>,
}

impl<M: Model> Engine<M> {
    pub fn new(model: M) -> Self {
        Self {
            queue: EventQueue::new(),
            model,
            events_fired: 0,
            fired_log: None,
        }
    }

    /// Keep a log of every fired event (id, time, class).
    pub fn with_fired_log(mut self) -> Self {
        self.fired_log = Some(Vec::new());
        self
    }

    pub fn queue(&self) -> &EventQueue<M::Event> {
        &self.queue
    }

    pub fn queue_mut(&mut self) -> &mut EventQueue<M::Event> {
        &mut self.queue
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut M {
        &mut self.model
    }

    /// Split borrow for setup code that needs both.
    pub fn parts_mut(&mut self) -> (&mut M, &mut EventQueue<M::Event>) {
        (&mut self.model, &mut self.queue)
    }

    pub fn into_model(self) -> M {
        self.model
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn events_fired(&self) -> u64 {
        self.events_fired
    }

    pub fn fired_log(&self) -> Option<&[FiredEvent]> {
        self.fired_log.as_deref()
    }

    pub fn schedule(&mut self, delay: SimDuration, payload: M::Event) -> EventId {
        self.queue.schedule(delay, payload)
    }

    pub fn unschedule(&mut self, id: EventId) -> bool {
        self.queue.unschedule(id)
    }

    /// Process every pending event with `fire_at <= t_end`, then park the
    /// clock at `t_end`.
    pub fn run_until(&mut self, t_end: SimTime) -> Result<RunSummary, SimError> {
        if t_end < self.queue.now() {
            return Err(SimError::TimeReversal {
                now: self.queue.now(),
                requested: t_end,
            });
        }
        let mut fired = 0u64;
        while let Some(event) = self.queue.pop_due(t_end) {
            let id = event.id;
            let time = event.fire_at;
            if let Some(log) = self.fired_log.as_mut() {
                log.push(FiredEvent {
                    id,
                    time,
                    class: event.payload.class(),
                });
            }
            let model = &mut self.model;
            let queue = &mut self.queue;
            let outcome = panic::catch_unwind(AssertUnwindSafe(|| model.handle(queue, event)));
            match outcome {
                Ok(Ok(())) => {}
                Ok(Err(e)) => {
                    return Err(SimError::Handler {
                        id,
                        time,
                        message: e.to_string(),
                    })
                }
                Err(panic) => {
                    let message = panic
                        .downcast_ref::<&str>()
                        .map(|s| s.to_string())
                        .or_else(|| panic.downcast_ref::<String>().cloned())
                        .unwrap_or_else(|| "non-string panic payload".to_string());
                    return Err(SimError::Panic { id, time, message });
                }
            }
            fired += 1;
            self.events_fired += 1;
        }
        self.queue.advance_to(t_end);
        Ok(RunSummary {
            events_fired: fired,
            final_clock: t_end,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    enum Ev {
        Deliver(&'static str),
        Command(&'static str),
        Send(&'static str),
        Tick(&'static str),
        Boom,
    }

    impl Classified for Ev {
        fn class(&self) -> PriorityClass {
            match self {
                Ev::Deliver(_) => PriorityClass::Delivery,
                Ev::Command(_) => PriorityClass::ScenarioCommand,
                Ev::Send(_) | Ev::Boom => PriorityClass::Transmit,
                Ev::Tick(_) => PriorityClass::Tick,
            }
        }
    }

    #[derive(Default)]
    struct Recorder {
        seen: Vec<(SimTime, &'static str)>,
        fail_on: Option<&'static str>,
    }

    impl Model for Recorder {
        type Event = Ev;
        type Error = String;

        fn handle(&mut self, queue: &mut EventQueue<Ev>, event: Event<Ev>) -> Result<(), String> {
            let name = match event.payload {
                Ev::Deliver(n) | Ev::Command(n) | Ev::Send(n) | Ev::Tick(n) => n,
                Ev::Boom => panic!("boom"),
            };
            if self.fail_on == Some(name) {
                return Err(format!("refused {name}"));
            }
            if name == "spawn-zero" {
                queue.schedule(SimDuration::ZERO, Ev::Send("zero-child"));
            }
            self.seen.push((queue.now(), name));
            Ok(())
        }
    }

    fn t(units: f64) -> SimTime {
        SimTime::from_units(units).unwrap()
    }

    fn d(units: f64) -> SimDuration {
        SimDuration::from_units(units).unwrap()
    }

    #[test]
    fn delay_of_thousand_ticks_fires_at_hundred() {
        let mut engine = Engine::new(Recorder::default());
        engine.schedule(SimDuration::from_ticks(1000), Ev::Send("beacon"));
        engine.run_until(t(200.0)).unwrap();
        assert_eq!(engine.model().seen, vec![(t(100.0), "beacon")]);
    }

    #[test]
    fn zero_delay_fires_after_same_time_deliveries() {
        let mut engine = Engine::new(Recorder::default());
        engine.run_until(t(5.0)).unwrap();
        engine.schedule(SimDuration::ZERO, Ev::Send("zero"));
        engine.schedule(SimDuration::ZERO, Ev::Deliver("delivery"));
        engine.run_until(t(5.0)).unwrap();
        assert_eq!(
            engine.model().seen,
            vec![(t(5.0), "delivery"), (t(5.0), "zero")]
        );
    }

    #[test]
    fn three_event_hand_trace() {
        // Hand trace: a and c share fire_at and class; b shares fire_at but is
        // a delivery. Expected order: b (class), a, c (insertion).
        let mut engine = Engine::new(Recorder::default());
        engine.schedule(d(1.0), Ev::Send("a"));
        engine.schedule(d(1.0), Ev::Deliver("b"));
        engine.schedule(d(1.0), Ev::Send("c"));
        engine.schedule(d(1.0), Ev::Tick("tick"));
        engine.schedule(d(1.0), Ev::Command("cmd"));
        let summary = engine.run_until(t(1.0)).unwrap();
        assert_eq!(summary.events_fired, 5);
        let names: Vec<_> = engine.model().seen.iter().map(|s| s.1).collect();
        assert_eq!(names, vec!["b", "cmd", "a", "c", "tick"]);
    }

    #[test]
    fn zero_delay_child_fires_in_same_timestamp() {
        let mut engine = Engine::new(Recorder::default());
        engine.schedule(d(2.0), Ev::Tick("spawn-zero"));
        engine.schedule(d(2.0), Ev::Tick("later-tick"));
        engine.run_until(t(2.0)).unwrap();
        let names: Vec<_> = engine.model().seen.iter().map(|s| s.1).collect();
        // the zero-delay child is a transmission, so it jumps ahead of the
        // remaining tick at the same instant
        assert_eq!(names, vec!["spawn-zero", "zero-child", "later-tick"]);
    }

    #[test]
    fn unschedule_semantics() {
        let mut engine = Engine::new(Recorder::default());
        let backup = engine.schedule(d(100.5), Ev::Send("backup"));
        let fires = engine.schedule(d(1.0), Ev::Send("fires"));
        assert!(engine.unschedule(backup));
        assert!(!engine.unschedule(backup));
        engine.run_until(t(200.0)).unwrap();
        assert!(!engine.unschedule(fires));
        assert!(!engine.unschedule(EventId(9_999)));
        assert_eq!(engine.model().seen, vec![(t(1.0), "fires")]);
    }

    #[test]
    fn empty_run_parks_clock() {
        let mut engine = Engine::new(Recorder::default());
        let s = engine.run_until(t(100.0)).unwrap();
        assert_eq!(s.events_fired, 0);
        assert_eq!(s.final_clock, t(100.0));
        assert_eq!(engine.now(), t(100.0));
        assert!(matches!(
            engine.run_until(t(50.0)),
            Err(SimError::TimeReversal { .. })
        ));
    }

    #[test]
    fn handler_error_names_event() {
        let mut engine = Engine::new(Recorder {
            fail_on: Some("bad"),
            ..Default::default()
        });
        engine.schedule(d(3.0), Ev::Send("bad"));
        let err = engine.run_until(t(10.0)).unwrap_err();
        assert_eq!(
            err,
            SimError::Handler {
                id: EventId(0),
                time: t(3.0),
                message: "refused bad".into()
            }
        );
        assert_eq!(err.to_string(), "event #0 at t=3.0 failed: refused bad");
    }

    #[test]
    fn handler_panic_is_caught() {
        let mut engine = Engine::new(Recorder::default());
        engine.schedule(d(1.0), Ev::Send("ok"));
        engine.schedule(d(4.0), Ev::Boom);
        let err = engine.run_until(t(10.0)).unwrap_err();
        match err {
            SimError::Panic { id, time, message } => {
                assert_eq!(id, EventId(1));
                assert_eq!(time, t(4.0));
                assert_eq!(message, "boom");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
