use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::CoverageGrid;
use crate::geometry::Point;
use crate::metrics::{
    ActiveChange, ConflictSnapshot, Counters, FailureRecord, MetricsLog, MetricsRecord, NodeSummary, SleepSample,
    Transition,
};
use crate::protocol::{
    self, Effect, Message, NodeId, NodeState, Position, ProbeRequest, ProtocolError, ProtocolParams, Scheme,
    SensorNode,
};
use crate::sched::ProbeRate;

use super::config::{FailureTarget, SimConfig};
use super::energy::EnergyLedger;
use super::event::{EventKind, EventQueue};
use super::radio::Radio;
use super::SimError;

/// Node positions and first wake-up times.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub positions: Vec<Position>,
    pub first_wake: Vec<f64>,
}

impl Layout {
    /// Uniform positions over the field and uniform initial sleeps in
    /// `(0, ts_initial_max]`.
    pub fn random<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Self {
        let n = config.n_nodes as usize;
        let positions = (0..n)
            .map(|_| Point::planar(rng.gen::<f64>() * config.field_width, rng.gen::<f64>() * config.field_height))
            .collect();
        let first_wake = (0..n).map(|_| (1.0 - rng.gen::<f64>()) * config.ts_initial_max).collect();
        Self { positions, first_wake }
    }
}

pub struct World {
    config: SimConfig,
    params: ProtocolParams,
    scheme: Scheme,
    nodes: Vec<SensorNode>,
    ledgers: Vec<EnergyLedger>,
    state_epoch: Vec<u64>,
    timer_epoch: Vec<u64>,
    ever_active: Vec<bool>,
    false_activation: Vec<bool>,
    radio: Radio,
    queue: EventQueue,
    rng: ChaCha8Rng,
    counters: Counters,
    grid: CoverageGrid<f64>,
    sample_index: u64,
    records: Vec<MetricsRecord>,
    failures: Vec<FailureRecord>,
    active_trace: Vec<ActiveChange>,
    conflicts: Vec<ConflictSnapshot>,
    transitions: Option<Vec<Transition>>,
    sleep_trace: Option<Vec<SleepSample>>,
}

/// Validates `config` and places its nodes.
pub fn deploy(config: SimConfig) -> Result<World, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let layout = Layout::random(&config, &mut rng);
    World::build(config, layout, rng)
}

/// Deploys and runs to completion.
pub fn simulate(config: SimConfig) -> Result<MetricsLog, SimError> {
    deploy(config)?.run()
}

impl World {
    /// Deploys a scripted layout instead of a random one. Failure injections
    /// and the rest of the run still draw from the configured seed.
    pub fn with_layout(config: SimConfig, layout: Layout) -> Result<Self, SimError> {
        config.validate()?;
        if layout.positions.len() != config.n_nodes as usize || layout.first_wake.len() != layout.positions.len() {
            return Err(SimError::config("layout size does not match n_nodes"));
        }
        if layout.first_wake.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(SimError::config("first wake times must be non-negative"));
        }
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::build(config, layout, rng)
    }

    fn build(config: SimConfig, layout: Layout, rng: ChaCha8Rng) -> Result<Self, SimError> {
        let params = config.protocol_params();
        let scheme = config.scheme();
        let rate = ProbeRate::new(config.lambda_init).map_err(|e| SimError::config(e.to_string()))?;
        let nodes: Vec<SensorNode> = layout
            .positions
            .iter()
            .enumerate()
            .map(|(i, p)| SensorNode::new(i as NodeId, *p, config.energy.initial_energy, rate, config.beta))
            .collect();
        let n = nodes.len();
        let radio = Radio::new(layout.positions.clone(), config.r_c, config.bitrate, config.loss_probability);
        let grid = CoverageGrid::new(config.field_width, config.field_height, config.grid_resolution)
            .map_err(|e| SimError::config(e.to_string()))?;
        let mut world = Self {
            ledgers: vec![EnergyLedger::new(config.energy.initial_energy); n],
            state_epoch: vec![0; n],
            timer_epoch: vec![0; n],
            ever_active: vec![false; n],
            false_activation: vec![false; n],
            radio,
            queue: EventQueue::new(),
            rng,
            counters: Counters::default(),
            grid,
            sample_index: 0,
            records: Vec::new(),
            failures: Vec::new(),
            active_trace: Vec::new(),
            conflicts: Vec::new(),
            transitions: None,
            sleep_trace: None,
            params,
            scheme,
            nodes,
            config,
        };
        world.queue.schedule(0.0, EventKind::MetricsSample)?;
        for (i, &t) in layout.first_wake.iter().enumerate() {
            world.nodes[i].wake_deadline = t;
            if t <= world.config.duration {
                world.queue.schedule(t, EventKind::Wake { node: i as NodeId, epoch: 0 })?;
            }
            world.schedule_depletion(i as NodeId, 0.0)?;
        }
        for (index, f) in world.config.failure_injections.iter().enumerate() {
            world.queue.schedule(f.time, EventKind::FailureInjection { index })?;
        }
        world.queue.schedule(world.config.duration, EventKind::EndOfRun)?;
        Ok(world)
    }

    /// Records every state transition in the output log.
    pub fn trace_transitions(mut self) -> Self {
        self.transitions = Some(Vec::new());
        self
    }

    /// Records probe rate and drawn sleep at every Sentinel sleep entry.
    pub fn trace_sleeps(mut self) -> Self {
        self.sleep_trace = Some(Vec::new());
        self
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[SensorNode] {
        &self.nodes
    }

    pub fn clock(&self) -> f64 {
        self.queue.clock()
    }

    /// Processes events in `(time, sequence)` order until the end of the run.
    pub fn run(mut self) -> Result<MetricsLog, SimError> {
        while let Some(ev) = self.queue.pop() {
            let now = ev.time;
            match ev.kind {
                EventKind::Wake { node, epoch } => self.handle_wake(node, epoch, now)?,
                EventKind::ReplyTimeout { node, epoch } => self.handle_timeout(node, epoch, now)?,
                EventKind::SendReply { node, epoch } => self.handle_send_reply(node, epoch, now)?,
                EventKind::MessageDelivery { frame } => self.handle_delivery(frame, now)?,
                EventKind::MetricsSample => self.handle_sample(now)?,
                EventKind::FailureInjection { index } => self.handle_failure(index, now)?,
                EventKind::Depletion { node, epoch } => self.handle_depletion(node, epoch, now)?,
                EventKind::EndOfRun => {
                    self.settle_all(now)?;
                    if self.records.last().is_none_or(|r| r.time < now) {
                        self.take_sample(now);
                    }
                    break;
                }
            }
        }
        Ok(self.into_log())
    }

    fn into_log(self) -> MetricsLog {
        let nodes = self
            .nodes
            .iter()
            .zip(self.ledgers)
            .map(|(n, ledger)| NodeSummary {
                id: n.id,
                position: n.position,
                final_state: n.state,
                ledger,
                ever_active: self.ever_active[n.id as usize],
                false_activation: self.false_activation[n.id as usize],
                final_probe_rate: n.probe_rate.value(),
            })
            .collect();
        MetricsLog {
            config: self.config,
            records: self.records,
            failures: self.failures,
            active_trace: self.active_trace,
            conflicts: self.conflicts,
            nodes,
            counters: self.counters,
            transitions: self.transitions,
            sleep_trace: self.sleep_trace,
        }
    }

    fn protocol_err(now: f64) -> impl Fn(ProtocolError) -> SimError {
        move |source| SimError::Protocol { time: now, source }
    }

    /// Brings the node's energy balance up to `now`; returns whether it is
    /// still alive.
    fn settle(&mut self, id: NodeId, now: f64) -> Result<bool, SimError> {
        let i = id as usize;
        let state = self.nodes[i].state;
        if state == NodeState::Dead {
            self.ledgers[i].accrue(now, state, &self.config.energy);
            return Ok(false);
        }
        let exhausted = self.ledgers[i].accrue(now, state, &self.config.energy);
        self.nodes[i].energy_remaining = self.ledgers[i].remaining();
        if exhausted {
            self.kill(id, now)?;
            return Ok(false);
        }
        Ok(true)
    }

    fn settle_all(&mut self, now: f64) -> Result<(), SimError> {
        for id in 0..self.nodes.len() as NodeId {
            self.settle(id, now)?;
        }
        Ok(())
    }

    fn kill(&mut self, id: NodeId, now: f64) -> Result<(), SimError> {
        let i = id as usize;
        let from = self.nodes[i].state;
        if from == NodeState::Dead {
            return Ok(());
        }
        self.nodes[i].transition(NodeState::Dead).map_err(Self::protocol_err(now))?;
        self.nodes[i].energy_remaining = self.ledgers[i].remaining();
        self.state_changed(id, from, now)
    }

    /// Bookkeeping after a node's state changed from `from`.
    fn state_changed(&mut self, id: NodeId, from: NodeState, now: f64) -> Result<(), SimError> {
        let i = id as usize;
        let to = self.nodes[i].state;
        self.state_epoch[i] += 1;
        self.timer_epoch[i] += 1;
        if !to.radio_on() {
            self.radio.radio_off(id);
        }
        let position = self.nodes[i].position;
        if from == NodeState::Active {
            self.active_trace.push(ActiveChange { time: now, node: id, position, active: false });
        }
        if to == NodeState::Active {
            self.active_trace.push(ActiveChange { time: now, node: id, position, active: true });
        }
        if let Some(t) = self.transitions.as_mut() {
            t.push(Transition { time: now, node: id, from, to });
        }
        self.schedule_depletion(id, now)
    }

    fn schedule_depletion(&mut self, id: NodeId, now: f64) -> Result<(), SimError> {
        let i = id as usize;
        if let Some(dt) = self.ledgers[i].time_to_empty(self.nodes[i].state, &self.config.energy) {
            let at = now + dt;
            if at <= self.config.duration {
                self.queue.schedule(at, EventKind::Depletion { node: id, epoch: self.state_epoch[i] })?;
            }
        }
        Ok(())
    }

    /// Runs `handler` on a live node and applies its effects.
    fn dispatch(
        &mut self,
        id: NodeId,
        now: f64,
        handler: impl FnOnce(&mut SensorNode, &ProtocolParams, &Scheme, &mut ChaCha8Rng) -> Result<Vec<Effect>, ProtocolError>,
    ) -> Result<(), SimError> {
        let i = id as usize;
        let from = self.nodes[i].state;
        let effects = handler(&mut self.nodes[i], &self.params, &self.scheme, &mut self.rng)
            .map_err(Self::protocol_err(now))?;
        if self.nodes[i].state != from {
            self.state_changed(id, from, now)?;
        }
        for effect in effects {
            self.apply(id, effect, now)?;
        }
        Ok(())
    }

    fn apply(&mut self, id: NodeId, effect: Effect, now: f64) -> Result<(), SimError> {
        let i = id as usize;
        match effect {
            Effect::Broadcast(msg) => self.broadcast(id, msg, now)?,
            Effect::ArmTimeout(at) => {
                self.timer_epoch[i] += 1;
                self.queue.schedule(at, EventKind::ReplyTimeout { node: id, epoch: self.timer_epoch[i] })?;
            }
            Effect::SleepUntil(at) => {
                if let (Some(trace), Scheme::Sentinel) = (self.sleep_trace.as_mut(), &self.scheme) {
                    trace.push(SleepSample {
                        time: now,
                        node: id,
                        probe_rate: self.nodes[i].probe_rate.value(),
                        sleep: at - now,
                    });
                }
                let at = at + self.config.wake_jitter * self.rng.gen::<f64>();
                if at <= self.config.duration {
                    self.queue.schedule(at, EventKind::Wake { node: id, epoch: self.state_epoch[i] })?;
                }
            }
            Effect::Activated => {
                self.counters.activations += 1;
                self.ever_active[i] = true;
                let me = self.nodes[i].position;
                let guarded = self.nodes.iter().any(|n| {
                    n.id != id && n.state == NodeState::Active && protocol::scan_check(n.position.distance(&me), self.params.delta)
                });
                if guarded {
                    self.false_activation[i] = true;
                }
            }
            Effect::Withdrew => self.counters.withdrawals += 1,
            Effect::Died => {}
        }
        Ok(())
    }

    fn broadcast(&mut self, id: NodeId, msg: Message, now: f64) -> Result<(), SimError> {
        let i = id as usize;
        if !self.nodes[i].state.radio_on() {
            return Ok(());
        }
        match msg {
            Message::Request(_) => self.counters.probes_sent += 1,
            Message::Reply(_) => self.counters.replies_sent += 1,
        }
        let nodes = &self.nodes;
        let tx = self.radio.transmit(msg, now, |n| nodes[n as usize].state.radio_on(), &mut self.rng);
        self.counters.collisions += tx.collisions;
        self.queue.schedule(tx.end, EventKind::MessageDelivery { frame: tx.frame })?;
        let exhausted = self.ledgers[i].charge_tx(&self.config.energy);
        self.nodes[i].energy_remaining = self.ledgers[i].remaining();
        if exhausted {
            self.kill(id, now)?;
        }
        Ok(())
    }

    fn handle_wake(&mut self, id: NodeId, epoch: u64, now: f64) -> Result<(), SimError> {
        let i = id as usize;
        if self.state_epoch[i] != epoch || self.nodes[i].state == NodeState::Dead {
            return Ok(());
        }
        if !self.settle(id, now)? {
            return Ok(());
        }
        self.dispatch(id, now, |node, params, _, _| protocol::on_wake(node, now, params))
    }

    fn handle_timeout(&mut self, id: NodeId, epoch: u64, now: f64) -> Result<(), SimError> {
        let i = id as usize;
        if self.timer_epoch[i] != epoch || self.nodes[i].state != NodeState::Probing {
            return Ok(());
        }
        if !self.settle(id, now)? {
            return Ok(());
        }
        self.dispatch(id, now, |node, params, _, _| protocol::on_reply_timeout(node, now, params))
    }

    fn handle_send_reply(&mut self, id: NodeId, epoch: u64, now: f64) -> Result<(), SimError> {
        let i = id as usize;
        if self.state_epoch[i] != epoch || self.nodes[i].state != NodeState::Active {
            return Ok(());
        }
        if !self.settle(id, now)? {
            return Ok(());
        }
        let node = &self.nodes[i];
        let probe = ProbeRequest { sender_id: id, sender_position: node.position, size: self.params.msg_size };
        if let Some(reply) = protocol::on_probe_request(node, &probe, now, &self.params) {
            self.broadcast(id, Message::Reply(reply), now)?;
        }
        Ok(())
    }

    fn handle_delivery(&mut self, frame: u64, now: f64) -> Result<(), SimError> {
        let Some((frame, receivers)) = self.radio.complete(frame) else {
            return Ok(());
        };
        if matches!(frame.message, Message::Reply(_)) && !receivers.is_empty() {
            self.counters.reply_frames_delivered += 1;
        }
        for rx in receivers {
            let i = rx as usize;
            if !self.nodes[i].state.radio_on() || !self.settle(rx, now)? {
                continue;
            }
            let exhausted = self.ledgers[i].charge_rx(&self.config.energy);
            self.nodes[i].energy_remaining = self.ledgers[i].remaining();
            if exhausted {
                self.kill(rx, now)?;
                continue;
            }
            match frame.message {
                Message::Request(req) => {
                    self.counters.probes_received += 1;
                    if protocol::on_probe_request(&self.nodes[i], &req, now, &self.params).is_some() {
                        let at = now + self.params.reply_jitter * self.rng.gen::<f64>();
                        self.queue.schedule(at, EventKind::SendReply { node: rx, epoch: self.state_epoch[i] })?;
                    }
                }
                Message::Reply(mut reply) => {
                    self.counters.replies_received += 1;
                    // age as of reception
                    reply.activity_age += now - frame.start;
                    self.dispatch(rx, now, |node, params, scheme, rng| {
                        protocol::on_probe_reply(node, &reply, now, scheme, params, rng)
                    })?;
                }
            }
        }
        Ok(())
    }

    fn handle_failure(&mut self, index: usize, now: f64) -> Result<(), SimError> {
        let injection = self.config.failure_injections[index];
        let target = match injection.target {
            FailureTarget::Node(id) => Some(id),
            FailureTarget::RandomSentinel => {
                let active: Vec<NodeId> =
                    self.nodes.iter().filter(|n| n.state == NodeState::Active).map(|n| n.id).collect();
                (!active.is_empty()).then(|| active[self.rng.gen_range(0..active.len())])
            }
        };
        let Some(id) = target else {
            self.failures.push(FailureRecord { time: now, node: None, position: None, was_active: false });
            return Ok(());
        };
        let alive = self.settle(id, now)?;
        let was_active = self.nodes[id as usize].state == NodeState::Active;
        if alive {
            self.kill(id, now)?;
        }
        self.failures.push(FailureRecord {
            time: now,
            node: Some(id),
            position: Some(self.nodes[id as usize].position),
            was_active,
        });
        Ok(())
    }

    fn handle_depletion(&mut self, id: NodeId, epoch: u64, now: f64) -> Result<(), SimError> {
        if self.state_epoch[id as usize] != epoch || self.nodes[id as usize].state == NodeState::Dead {
            return Ok(());
        }
        if self.settle(id, now)? {
            self.schedule_depletion(id, now)?;
        }
        Ok(())
    }

    fn handle_sample(&mut self, now: f64) -> Result<(), SimError> {
        self.settle_all(now)?;
        self.take_sample(now);
        self.sample_index += 1;
        let next = self.sample_index as f64 * self.config.metrics_interval;
        if next < self.config.duration {
            self.queue.schedule(next, EventKind::MetricsSample)?;
        }
        Ok(())
    }

    fn take_sample(&mut self, now: f64) {
        let mut counts = [0u32; 4];
        for n in &self.nodes {
            counts[n.state.index()] += 1;
        }
        let active: Vec<&SensorNode> = self.nodes.iter().filter(|n| n.state == NodeState::Active).collect();
        let positions: Vec<Position> = active.iter().map(|n| n.position).collect();
        let coverage = crate::analysis::coverage_fraction(&positions, self.config.r_s, &mut self.grid);

        let window = 2.0 * self.config.t_w + self.config.airtime();
        let (mut conflicting, mut persistent) = (0, 0);
        for (a_idx, a) in active.iter().enumerate() {
            for b in &active[a_idx + 1..] {
                if a.position.distance(&b.position) < self.config.delta {
                    conflicting += 1;
                    let overlap_start = a.activity_start.unwrap_or(now).max(b.activity_start.unwrap_or(now));
                    if now - overlap_start > window {
                        persistent += 1;
                    }
                }
            }
        }
        self.conflicts.push(ConflictSnapshot { time: now, conflicting_pairs: conflicting, persistent_pairs: persistent });

        let c = &self.counters;
        self.records.push(MetricsRecord {
            time: now,
            active_count: counts[NodeState::Active.index()],
            sleeping_count: counts[NodeState::Sleeping.index()],
            probing_count: counts[NodeState::Probing.index()],
            dead_count: counts[NodeState::Dead.index()],
            total_energy_consumed: self.ledgers.iter().map(|l| l.consumed).sum(),
            coverage_fraction: coverage,
            probes_sent: c.probes_sent,
            probes_received: c.probes_received,
            replies_sent: c.replies_sent,
            replies_received: c.replies_received,
            collisions: c.collisions,
            withdrawals: c.withdrawals,
        });
    }
}
