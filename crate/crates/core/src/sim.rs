//! The full model: agents, channel, world and missions driven by the engine.

use log::{debug, info};
use thiserror::Error;

use crate::channel::{Channel, Reception, TxId};
use crate::engine::{Classified, Engine, Event, EventId, EventQueue, Model, PriorityClass, RunSummary, SimError};
use crate::metrics::{Collector, MetricsReport};
use crate::mission::{
    DetectorModel, MissionConfig, MissionError, MissionState, MotionEvent, PlatoonMission, TreatmentResult, World,
};
use crate::protocol::{
    AgentId, AgentState, AlertOutcome, Inbound, KinematicSnapshot, Message, MessageKind, Outgoing, PlatoonId,
    ProtocolError, RadioHost, Role, SegmentId, SlbConfig,
};
use crate::rng::{agent_sample_key, RandomStream, Substream};
use crate::scenario::{Command, Scenario};
use crate::time::{SimDuration, SimTime};
use crate::trace::{TraceEvent, TraceLine, TraceRecorder};

#[derive(Debug, Clone, PartialEq)]
pub enum SimEvent {
    /// An agent puts a frame on air.
    TransmitStart { agent: AgentId, frame: Outgoing },
    /// End of a frame's airtime.
    Delivery { tx: TxId },
    /// Scripted external control input.
    Scripted { index: usize },
    MotionTick { platoon: usize },
    SensorTick { agent: AgentId },
    /// The off-body classifier answers for a sample that came back positive.
    ComputeReturn { agent: AgentId, segment: SegmentId },
    TreatmentComplete { agent: AgentId, episode: u64 },
    /// Repeat an unacknowledged command if the episode has not moved on.
    CommandTimeout {
        agent: AgentId,
        kind: MessageKind,
        episode: u64,
    },
}

impl Classified for SimEvent {
    fn class(&self) -> PriorityClass {
        match self {
            SimEvent::Delivery { .. } => PriorityClass::Delivery,
            SimEvent::Scripted { .. } => PriorityClass::ScenarioCommand,
            SimEvent::TransmitStart { .. } => PriorityClass::Transmit,
            SimEvent::MotionTick { .. }
            | SimEvent::SensorTick { .. }
            | SimEvent::ComputeReturn { .. }
            | SimEvent::TreatmentComplete { .. }
            | SimEvent::CommandTimeout { .. } => PriorityClass::Tick,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("platoon {platoon}: {source}")]
    Mission {
        platoon: PlatoonId,
        #[source]
        source: MissionError,
    },
}

#[derive(Debug, Clone)]
struct PlatoonRt {
    id: PlatoonId,
    leader: AgentId,
    members: Vec<AgentId>,
    /// Lowest-position treatment member; the one that gets assignments.
    treater: Option<AgentId>,
    first_vision: Option<AgentId>,
    detector: Option<DetectorModel>,
    cfg: Option<MissionConfig>,
    mission: Option<PlatoonMission>,
    /// Transmit start of the alert behind the current halt, until the Halt
    /// frame reaches a member.
    halt_cause: Option<SimTime>,
}

/// Everything the agents reach through [`RadioHost`].
struct Host<'a> {
    queue: &'a mut EventQueue<SimEvent>,
    channel: &'a mut Channel,
    trace: &'a mut TraceRecorder,
    collector: &'a mut Collector,
    t_end: SimTime,
}

impl RadioHost for Host<'_> {
    fn now(&self) -> SimTime {
        self.queue.now()
    }

    fn schedule_transmit(&mut self, agent: AgentId, frame: Outgoing, delay: SimDuration) -> EventId {
        self.queue.schedule(delay, SimEvent::TransmitStart { agent, frame })
    }

    fn unschedule_beacon(&mut self, platoon: PlatoonId, agent: AgentId, id: EventId) -> bool {
        let removed = self.queue.unschedule(id);
        if removed {
            self.collector.cancelled_backups += 1;
            self.trace.push(
                TraceLine::new(self.queue.now(), TraceEvent::Cancelled)
                    .platoon(platoon)
                    .sender(agent)
                    .label(MessageKind::MemberBeacon),
            );
        }
        removed
    }

    fn broadcast(&mut self, msg: Message) {
        let now = self.queue.now();
        self.trace.push(
            TraceLine::new(now, TraceEvent::Tx)
                .platoon(msg.platoon)
                .sender(msg.sender)
                .label(msg.kind)
                .value(msg.seq),
        );
        let is_beacon = msg.kind.is_beacon();
        let (tx, end) = self.channel.transmit(msg, now);
        if is_beacon {
            self.collector.beacon_sent(now, end, self.t_end);
        }
        self.queue.schedule(end - now, SimEvent::Delivery { tx });
    }
}

pub struct Simulation {
    seed: u64,
    t_end: SimTime,
    slb: SlbConfig,
    motion_tick: SimDuration,
    commands: Vec<(PlatoonId, Command)>,
    rng: RandomStream,
    channel: Channel,
    agents: Vec<AgentState>,
    /// Platoon index of every agent.
    platoon_of: Vec<usize>,
    receivers: Vec<AgentId>,
    platoons: Vec<PlatoonRt>,
    world: Option<World>,
    samples: Vec<u64>,
    collector: Collector,
    trace: TraceRecorder,
}

macro_rules! host {
    ($self:ident, $queue:expr) => {
        &mut Host {
            queue: &mut *$queue,
            channel: &mut $self.channel,
            trace: &mut $self.trace,
            collector: &mut $self.collector,
            t_end: $self.t_end,
        }
    };
}

impl Simulation {
    /// Build the model and seed the queue with startup events. `scenario`
    /// must be valid.
    pub fn new(scenario: &Scenario, record_trace: bool, queue: &mut EventQueue<SimEvent>) -> Self {
        let slots = scenario.agents();
        let mut platoons: Vec<PlatoonRt> = scenario
            .platoons
            .iter()
            .map(|p| PlatoonRt {
                id: p.id,
                leader: AgentId(0),
                members: Vec::new(),
                treater: None,
                first_vision: None,
                detector: p.detector,
                cfg: p.mission.clone(),
                mission: p.mission.as_ref().map(|m| PlatoonMission::new(m, p.speed)),
                halt_cause: None,
            })
            .collect();
        for s in &slots {
            let p = &mut platoons[s.platoon_index];
            p.members.push(s.id);
            match s.role {
                Role::Leader => p.leader = s.id,
                Role::Treatment if p.treater.is_none() => p.treater = Some(s.id),
                Role::Vision if p.first_vision.is_none() => p.first_vision = Some(s.id),
                _ => {}
            }
        }

        let mut sim = Simulation {
            seed: scenario.seed,
            t_end: scenario.t_end,
            slb: scenario.slb,
            motion_tick: scenario.motion_tick,
            commands: scenario.scripted_commands.iter().map(|c| (c.platoon, c.command)).collect(),
            rng: RandomStream::new(scenario.seed),
            channel: Channel::new(scenario.channel.clone(), scenario.slb.slot_width),
            agents: slots
                .iter()
                .map(|s| AgentState::new(s.id, s.platoon, s.role, s.position))
                .collect(),
            platoon_of: slots.iter().map(|s| s.platoon_index).collect(),
            receivers: slots.iter().map(|s| s.id).collect(),
            platoons,
            world: scenario.world.as_ref().map(World::new),
            samples: vec![0; slots.len()],
            collector: Collector::default(),
            trace: TraceRecorder::new(record_trace),
        };

        sim.trace.push(
            TraceLine::new(SimTime::ZERO, TraceEvent::Run)
                .label(scenario.slb.slot_width)
                .value(scenario.seed),
        );
        for s in &slots {
            sim.trace.push(
                TraceLine::new(SimTime::ZERO, TraceEvent::Join)
                    .platoon(s.platoon)
                    .sender(s.id)
                    .label(s.role)
                    .value(s.position.0 as u64),
            );
        }

        for (i, spec) in scenario.platoons.iter().enumerate() {
            let members = sim.platoons[i].members.clone();
            for id in members {
                let host = host!(sim, queue);
                sim.agents[id.0 as usize].on_startup(spec.start_offset, host);
            }
            if spec.mission.is_some() {
                queue.schedule(scenario.motion_tick, SimEvent::MotionTick { platoon: i });
                if let Some(d) = &spec.detector {
                    for s in slots.iter().filter(|s| s.platoon_index == i && s.role == Role::Vision) {
                        queue.schedule(spec.start_offset + d.sense_period, SimEvent::SensorTick { agent: s.id });
                    }
                }
            }
        }
        for (index, c) in scenario.scripted_commands.iter().enumerate() {
            let delay = c.time.saturating_since(queue.now());
            queue.schedule(delay, SimEvent::Scripted { index });
        }
        sim
    }

    pub fn trace(&self) -> &TraceRecorder {
        &self.trace
    }

    pub fn collector(&self) -> &Collector {
        &self.collector
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn world(&self) -> Option<&World> {
        self.world.as_ref()
    }

    /// Mission state of every platoon that has a mission, in scenario order.
    pub fn missions(&self) -> Vec<(PlatoonId, &PlatoonMission)> {
        self.platoons
            .iter()
            .filter_map(|p| p.mission.as_ref().map(|m| (p.id, m)))
            .collect()
    }

    fn snapshot(&self, agent: AgentId) -> KinematicSnapshot {
        let p = &self.platoons[self.platoon_of[agent.0 as usize]];
        match (&p.mission, &self.world) {
            (Some(m), Some(w)) => m.snapshot(w),
            _ => KinematicSnapshot::default(),
        }
    }

    fn mission_error(&self, pi: usize, source: MissionError) -> ModelError {
        ModelError::Mission {
            platoon: self.platoons[pi].id,
            source,
        }
    }

    fn state_line(&mut self, pi: usize, state: MissionState, segment: SegmentId, now: SimTime) {
        let p = &self.platoons[pi];
        self.trace.push(
            TraceLine::new(now, TraceEvent::State)
                .platoon(p.id)
                .sender(p.leader)
                .label(state)
                .value(segment.0 as u64),
        );
    }

    fn set_state(&mut self, pi: usize, to: MissionState, now: SimTime) -> Result<(), ModelError> {
        let world = self.world.as_ref().expect("missions need a world");
        let mission = self.platoons[pi].mission.as_mut().expect("platoon has a mission");
        if let Err(e) = mission.transition(to) {
            return Err(self.mission_error(pi, e));
        }
        let seg = mission.segment(world);
        self.state_line(pi, to, seg, now);
        Ok(())
    }

    fn mission_state(&self, pi: usize) -> Option<MissionState> {
        self.platoons[pi].mission.as_ref().map(|m| m.state)
    }

    fn on_transmit(
        &mut self,
        queue: &mut EventQueue<SimEvent>,
        fired: EventId,
        agent: AgentId,
        frame: Outgoing,
    ) -> Result<(), ModelError> {
        let snap = self.snapshot(agent);
        let slb = self.slb;
        let a = agent.0 as usize;
        match frame {
            Outgoing::Beacon => {
                let host = host!(self, queue);
                self.agents[a].send_beacon(&slb, fired, snap, host);
            }
            Outgoing::Command { kind, segment } => {
                let host = host!(self, queue);
                self.agents[a].send_command(kind, segment, snap, host)?;
            }
        }
        Ok(())
    }

    fn on_delivery(&mut self, queue: &mut EventQueue<SimEvent>, tx: TxId) -> Result<(), ModelError> {
        let now = queue.now();
        let delivery = self.channel.deliver(tx, &self.receivers, &self.rng);
        let msg = delivery.transmission.msg.clone();
        let sender_pi = self.platoon_of[msg.sender.0 as usize];

        if msg.kind.is_beacon() {
            let received = delivery.received_by().count() as u64;
            self.collector
                .beacon_resolved(self.receivers.len().saturating_sub(1) as u64, received);
        }
        if delivery.collided() {
            self.collector.collisions += 1;
            self.trace.push(
                TraceLine::new(now, TraceEvent::Collided)
                    .platoon(msg.platoon)
                    .sender(msg.sender)
                    .label(msg.kind)
                    .value(msg.seq),
            );
            return Ok(());
        }

        if msg.kind == MessageKind::Halt {
            let reached_member = delivery
                .received_by()
                .any(|rx| self.platoon_of[rx.0 as usize] == sender_pi);
            if reached_member {
                if let Some(cause) = self.platoons[sender_pi].halt_cause.take() {
                    self.collector.latencies.push(now - cause);
                }
            }
        }

        let slb = self.slb;
        for &(rx, reception) in &delivery.receptions {
            let event = match reception {
                Reception::Received => TraceEvent::Rx,
                Reception::Lost => TraceEvent::Lost,
            };
            self.trace.push(
                TraceLine::new(now, event)
                    .platoon(msg.platoon)
                    .sender(msg.sender)
                    .label(msg.kind)
                    .value(msg.seq)
                    .receiver(rx),
            );
            if reception == Reception::Lost {
                continue;
            }
            let inbound = {
                let host = host!(self, queue);
                self.agents[rx.0 as usize].on_message(&msg, &slb, host)
            };
            self.react(queue, rx, &msg, delivery.transmission.airtime.start, inbound)?;
        }
        Ok(())
    }

    /// Mission-level reaction of `rx` to an own-platoon frame.
    fn react(
        &mut self,
        queue: &mut EventQueue<SimEvent>,
        rx: AgentId,
        msg: &Message,
        tx_start: SimTime,
        inbound: Inbound,
    ) -> Result<(), ModelError> {
        let now = queue.now();
        let pi = self.platoon_of[rx.0 as usize];
        let Some(state) = self.mission_state(pi) else {
            return Ok(());
        };
        let slb = self.slb;
        match inbound {
            Inbound::Alert { segment } => {
                if state != MissionState::Patrol {
                    debug!("t={now} platoon {} ignoring alert while {state}", self.platoons[pi].id);
                    return Ok(());
                }
                let mission = self.platoons[pi].mission.as_ref().expect("mission");
                if mission.capacity_exhausted() {
                    info!("t={now} platoon {} out of treatment capacity", self.platoons[pi].id);
                    return self.set_state(pi, MissionState::Exiting, now);
                }
                let outcome = {
                    let host = host!(self, queue);
                    self.agents[rx.0 as usize].leader_handle_alert(msg, &slb, false, host)?
                };
                debug_assert_eq!(outcome, AlertOutcome::Halting);
                self.set_state(pi, MissionState::Halted, now)?;
                let world = self.world.as_ref().expect("world");
                let p = &mut self.platoons[pi];
                let mission = p.mission.as_mut().expect("mission");
                mission.episode += 1;
                mission.target = Some(segment.unwrap_or_else(|| mission.segment(world)));
                p.halt_cause = Some(tx_start);
                let timeout = p.cfg.as_ref().expect("mission config").command_timeout;
                queue.schedule(
                    slb.slot_width + timeout,
                    SimEvent::CommandTimeout {
                        agent: rx,
                        kind: MessageKind::TreatAssign,
                        episode: mission.episode,
                    },
                );
            }
            Inbound::TreatAssign { .. } => {
                if state != MissionState::Halted || self.platoons[pi].treater != Some(rx) {
                    return Ok(());
                }
                let world = self.world.as_ref().expect("world");
                let p = &mut self.platoons[pi];
                let mission = p.mission.as_mut().expect("mission");
                let target = mission.target.expect("halted platoon has a target");
                let real = mission
                    .begin_treatment(world, target)
                    .map_err(|e| ModelError::Mission { platoon: p.id, source: e })?;
                let episode = mission.episode;
                let duration = p.cfg.as_ref().expect("mission config").treatment_duration;
                self.state_line(pi, MissionState::Treating, target, now);
                let delay = if real { duration } else { SimDuration::ZERO };
                queue.schedule(delay, SimEvent::TreatmentComplete { agent: rx, episode });
            }
            Inbound::TreatDone { .. } => {
                let resumed = {
                    let host = host!(self, queue);
                    self.agents[rx.0 as usize].leader_resume(msg, state == MissionState::Treating, host)?
                };
                if resumed {
                    self.set_state(pi, MissionState::Patrol, now)?;
                    let mission = self.platoons[pi].mission.as_mut().expect("mission");
                    mission.target = None;
                    mission.treatment_finished = false;
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn on_motion(&mut self, queue: &mut EventQueue<SimEvent>, pi: usize) {
        let now = queue.now();
        let world = self.world.as_ref().expect("world");
        let p = &mut self.platoons[pi];
        let mission = p.mission.as_mut().expect("mission");
        let events = mission.advance_motion(world, self.motion_tick);
        let done = mission.state == MissionState::Done;
        let (id, leader) = (p.id, p.leader);
        for ev in events {
            match ev {
                MotionEvent::LoopCompleted { cycles } => {
                    self.collector.cycles_completed += 1;
                    self.trace.push(
                        TraceLine::new(now, TraceEvent::Cycle)
                            .platoon(id)
                            .sender(leader)
                            .label("Patrol")
                            .value(cycles as u64),
                    );
                }
                MotionEvent::StateChanged { to, segment } => {
                    info!("t={now} platoon {id} -> {to}");
                    self.state_line(pi, to, segment, now);
                }
            }
        }
        if !done {
            queue.schedule(self.motion_tick, SimEvent::MotionTick { platoon: pi });
        }
    }

    fn on_sense(&mut self, queue: &mut EventQueue<SimEvent>, agent: AgentId) {
        let pi = self.platoon_of[agent.0 as usize];
        let p = &self.platoons[pi];
        let detector = p.detector.expect("sensing platoon has a detector");
        let mission = p.mission.as_ref().expect("mission");
        if mission.state == MissionState::Done {
            return;
        }
        queue.schedule(detector.sense_period, SimEvent::SensorTick { agent });
        if mission.state != MissionState::Patrol {
            return;
        }
        let world = self.world.as_ref().expect("world");
        let segment = mission.segment(world);
        let sample = self.samples[agent.0 as usize];
        self.samples[agent.0 as usize] += 1;
        let p_pos = detector.positive_probability(world.cells(segment));
        if self
            .rng
            .bernoulli(Substream::Detector, agent_sample_key(agent.0, sample), p_pos)
        {
            queue.schedule(detector.compute_round_trip, SimEvent::ComputeReturn { agent, segment });
        }
    }

    fn on_compute_return(
        &mut self,
        queue: &mut EventQueue<SimEvent>,
        agent: AgentId,
        segment: SegmentId,
    ) -> Result<(), ModelError> {
        let now = queue.now();
        let pi = self.platoon_of[agent.0 as usize];
        let p = &mut self.platoons[pi];
        let mission = p.mission.as_mut().expect("mission");
        if mission.state != MissionState::Patrol {
            debug!("t={now} agent {agent} dropping classification while {}", mission.state);
            return Ok(());
        }
        mission.record_detection();
        self.trace.push(
            TraceLine::new(now, TraceEvent::Classified)
                .platoon(p.id)
                .sender(agent)
                .label("Detection")
                .value(segment.0 as u64),
        );
        let host = host!(self, queue);
        self.agents[agent.0 as usize].raise_detection(Some(segment), host)?;
        Ok(())
    }

    fn on_treatment_complete(
        &mut self,
        queue: &mut EventQueue<SimEvent>,
        agent: AgentId,
        episode: u64,
    ) -> Result<(), ModelError> {
        let now = queue.now();
        let pi = self.platoon_of[agent.0 as usize];
        let world = self.world.as_mut().expect("world");
        let p = &mut self.platoons[pi];
        let mission = p.mission.as_mut().expect("mission");
        if mission.episode != episode || mission.state != MissionState::Treating {
            return Ok(());
        }
        let target = mission.target.expect("treating platoon has a target");
        let result = mission
            .apply_treatment(world, target)
            .map_err(|e| ModelError::Mission { platoon: p.id, source: e })?;
        let label = match result {
            TreatmentResult::Inactivated => {
                self.collector.cells_inactivated += 1;
                "Inactivated"
            }
            TreatmentResult::FalseAlarm => {
                self.collector.false_halts += 1;
                "FalseAlarm"
            }
        };
        let timeout = p.cfg.as_ref().expect("mission config").command_timeout;
        self.trace.push(
            TraceLine::new(now, TraceEvent::Treated)
                .platoon(p.id)
                .sender(agent)
                .label(label)
                .value(target.0 as u64),
        );
        let host = host!(self, queue);
        self.agents[agent.0 as usize].schedule_command(MessageKind::TreatDone, Some(target), SimDuration::ZERO, host)?;
        queue.schedule(
            timeout,
            SimEvent::CommandTimeout {
                agent,
                kind: MessageKind::TreatDone,
                episode,
            },
        );
        Ok(())
    }

    fn on_timeout(
        &mut self,
        queue: &mut EventQueue<SimEvent>,
        agent: AgentId,
        kind: MessageKind,
        episode: u64,
    ) -> Result<(), ModelError> {
        let pi = self.platoon_of[agent.0 as usize];
        let p = &self.platoons[pi];
        let mission = p.mission.as_ref().expect("mission");
        if mission.episode != episode {
            return Ok(());
        }
        let still_waiting = match kind {
            MessageKind::TreatAssign => mission.state == MissionState::Halted,
            MessageKind::TreatDone => mission.state == MissionState::Treating && mission.treatment_finished,
            _ => false,
        };
        if !still_waiting {
            return Ok(());
        }
        debug!("t={} agent {agent} repeating {kind}", queue.now());
        let target = mission.target;
        let timeout = p.cfg.as_ref().expect("mission config").command_timeout;
        let host = host!(self, queue);
        self.agents[agent.0 as usize].schedule_command(kind, target, SimDuration::ZERO, host)?;
        queue.schedule(timeout, SimEvent::CommandTimeout { agent, kind, episode });
        Ok(())
    }

    fn on_scripted(&mut self, queue: &mut EventQueue<SimEvent>, index: usize) -> Result<(), ModelError> {
        let now = queue.now();
        let (platoon, command) = self.commands[index];
        let pi = self
            .platoons
            .iter()
            .position(|p| p.id == platoon)
            .expect("validated platoon");
        let Some(state) = self.mission_state(pi) else {
            return Ok(());
        };
        match command {
            Command::Recall => {
                if state == MissionState::Patrol {
                    info!("t={now} platoon {platoon} recalled");
                    self.set_state(pi, MissionState::Exiting, now)?;
                } else {
                    debug!("t={now} platoon {platoon} ignoring recall while {state}");
                }
            }
            Command::InjectDetection { segment } => {
                let p = &self.platoons[pi];
                let agent = p.first_vision.expect("mission platoon has a vision member");
                let world = self.world.as_ref().expect("world");
                let segment = segment.unwrap_or_else(|| p.mission.as_ref().expect("mission").segment(world));
                queue.schedule(SimDuration::ZERO, SimEvent::ComputeReturn { agent, segment });
            }
        }
        Ok(())
    }
}

impl Model for Simulation {
    type Event = SimEvent;
    type Error = ModelError;

    fn handle(&mut self, queue: &mut EventQueue<SimEvent>, event: Event<SimEvent>) -> Result<(), ModelError> {
        match event.payload {
            SimEvent::TransmitStart { agent, frame } => self.on_transmit(queue, event.id, agent, frame),
            SimEvent::Delivery { tx } => self.on_delivery(queue, tx),
            SimEvent::Scripted { index } => self.on_scripted(queue, index),
            SimEvent::MotionTick { platoon } => {
                self.on_motion(queue, platoon);
                Ok(())
            }
            SimEvent::SensorTick { agent } => {
                self.on_sense(queue, agent);
                Ok(())
            }
            SimEvent::ComputeReturn { agent, segment } => self.on_compute_return(queue, agent, segment),
            SimEvent::TreatmentComplete { agent, episode } => self.on_treatment_complete(queue, agent, episode),
            SimEvent::CommandTimeout { agent, kind, episode } => self.on_timeout(queue, agent, kind, episode),
        }
    }
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    /// Empty when tracing was off.
    pub trace: String,
    pub summary: RunSummary,
}

/// A run that can be advanced in steps.
pub struct Runner {
    engine: Engine<Simulation>,
    platoons: usize,
}

impl Runner {
    pub fn new(scenario: &Scenario, record_trace: bool) -> Self {
        let mut queue = EventQueue::new();
        let sim = Simulation::new(scenario, record_trace, &mut queue);
        let mut engine = Engine::new(sim);
        *engine.queue_mut() = queue;
        Self {
            engine,
            platoons: scenario.platoons.len(),
        }
    }

    /// Keep the engine's fired-event log; see [`Engine::fired_log`].
    pub fn with_fired_log(mut self) -> Self {
        self.engine = self.engine.with_fired_log();
        self
    }

    pub fn engine(&self) -> &Engine<Simulation> {
        &self.engine
    }

    pub fn sim(&self) -> &Simulation {
        self.engine.model()
    }

    pub fn now(&self) -> SimTime {
        self.engine.now()
    }

    /// Advance to `t`, capped at the scenario end.
    pub fn run_until(&mut self, t: SimTime) -> Result<RunSummary, SimError> {
        let t = t.min(self.engine.model().t_end);
        self.engine.run_until(t)
    }

    /// Run to the scenario end and close the trace.
    pub fn finish(mut self) -> Result<RunOutput, SimError> {
        let t_end = self.engine.model().t_end;
        self.engine.run_until(t_end)?;
        let events = self.engine.events_fired();
        let sim = self.engine.model_mut();
        sim.trace.push(TraceLine::new(t_end, TraceEvent::End).value(events));
        let report = sim.collector.finish(sim.seed, t_end, self.platoons, events);
        Ok(RunOutput {
            report,
            trace: sim.trace.render(),
            summary: RunSummary {
                events_fired: events,
                final_clock: t_end,
            },
        })
    }
}

/// Run `scenario` from start to end.
pub fn run(scenario: &Scenario, record_trace: bool) -> Result<RunOutput, SimError> {
    Runner::new(scenario, record_trace).finish()
}
