//! Sentinel node state machine.
//!
//! Handlers mutate a single [`SensorNode`] and return the [`Effect`]s the
//! engine must carry out (broadcasts, timers, sleep). They never touch other
//! nodes; every inter-node interaction goes through the radio model.

use rand::distributions::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;
use crate::peas::{peas_sample_sleep, PeasParams};
use crate::sched::{
    sample_sleep_time, update_probe_rate, ProbeRate, RateBounds, SchedError, SleepBounds,
    WeibullParams,
};

pub type NodeId = u32;
pub type Position = Point<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("node {id}: illegal transition {from:?} -> {to:?}")]
    IllegalTransition { id: NodeId, from: NodeState, to: NodeState },
    #[error("node {id}: {event} handled in state {state:?}")]
    UnexpectedEvent { id: NodeId, event: &'static str, state: NodeState },
    #[error(transparent)]
    Sched(#[from] SchedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeState {
    Sleeping,
    Probing,
    Active,
    Dead,
}

impl NodeState {
    pub const ALL: [NodeState; 4] =
        [NodeState::Sleeping, NodeState::Probing, NodeState::Active, NodeState::Dead];

    pub fn can_transition_to(self, next: NodeState) -> bool {
        use NodeState::*;
        matches!(
            (self, next),
            (Sleeping, Probing)
                | (Probing, Sleeping)
                | (Probing, Active)
                | (Active, Sleeping)
                | (Active, Dead)
                | (Probing, Dead)
                | (Sleeping, Dead)
        )
    }

    pub fn radio_on(self) -> bool {
        matches!(self, NodeState::Probing | NodeState::Active)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRequest {
    pub sender_id: NodeId,
    pub sender_position: Position,
    pub size: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeReply {
    pub sender_id: NodeId,
    pub sender_position: Position,
    /// Seconds the sender has been Active.
    pub activity_age: f64,
    pub size: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Message {
    Request(ProbeRequest),
    Reply(ProbeReply),
}

impl Message {
    pub fn sender(&self) -> NodeId {
        match self {
            Message::Request(m) => m.sender_id,
            Message::Reply(m) => m.sender_id,
        }
    }

    pub fn size(&self) -> u32 {
        match self {
            Message::Request(m) => m.size,
            Message::Reply(m) => m.size,
        }
    }
}

/// Protocol knobs shared by the Sentinel scheme and the PEAS baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Distance threshold between Active nodes (meters).
    pub delta: f64,
    /// Reply wait timer per probe attempt (seconds).
    pub t_w: f64,
    pub k_probes: u32,
    /// Upper bound of the uniform initial sleep, seconds.
    pub ts_initial_max: f64,
    pub r_s: f64,
    pub r_c: f64,
    pub msg_size: u32,
    /// Active nodes delay each reply by a uniform draw in `[0, reply_jitter]`.
    pub reply_jitter: f64,
    pub sleep_bounds: SleepBounds<f64>,
    pub rate_bounds: RateBounds<f64>,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            delta: 20.0,
            t_w: 1.0,
            k_probes: 3,
            ts_initial_max: 10.0,
            r_s: 10.0,
            r_c: 20.0,
            msg_size: 25,
            reply_jitter: 0.005,
            sleep_bounds: SleepBounds::default(),
            rate_bounds: RateBounds::default(),
        }
    }
}

/// Scheduling policy a node runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scheme {
    Sentinel,
    Peas(PeasParams),
}

impl Scheme {
    /// Distance within which a reply proves the neighborhood is guarded.
    pub fn guard_distance(&self, params: &ProtocolParams) -> f64 {
        match self {
            Scheme::Sentinel => params.delta,
            Scheme::Peas(p) => p.probing_range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorNode {
    pub id: NodeId,
    pub position: Position,
    pub state: NodeState,
    pub energy_remaining: f64,
    pub probe_rate: ProbeRate<f64>,
    pub beta: f64,
    pub activity_start: Option<f64>,
    pub wake_deadline: f64,
    pub probes_sent_this_round: u32,
}

/// What the engine must do after a handler ran.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Broadcast(Message),
    /// Reply-wait deadline at an absolute time. Replaces any pending one.
    ArmTimeout(f64),
    /// Node went to sleep; wake at the absolute time given.
    SleepUntil(f64),
    Activated,
    Withdrew,
    Died,
}

impl SensorNode {
    pub fn new(id: NodeId, position: Position, energy: f64, probe_rate: ProbeRate<f64>, beta: f64) -> Self {
        Self {
            id,
            position,
            state: NodeState::Sleeping,
            energy_remaining: energy,
            probe_rate,
            beta,
            activity_start: None,
            wake_deadline: 0.0,
            probes_sent_this_round: 0,
        }
    }

    pub fn transition(&mut self, next: NodeState) -> Result<(), ProtocolError> {
        if !self.state.can_transition_to(next) {
            return Err(ProtocolError::IllegalTransition { id: self.id, from: self.state, to: next });
        }
        self.state = next;
        if next != NodeState::Active {
            self.activity_start = None;
        }
        if next != NodeState::Probing {
            self.probes_sent_this_round = 0;
        }
        Ok(())
    }

    /// Seconds spent Active as of `now`, zero when not Active.
    pub fn activity_age(&self, now: f64) -> f64 {
        self.activity_start.map_or(0.0, |s| (now - s).max(0.0))
    }

    fn request(&self, params: &ProtocolParams) -> Message {
        Message::Request(ProbeRequest {
            sender_id: self.id,
            sender_position: self.position,
            size: params.msg_size,
        })
    }

    /// Puts the node to sleep, drawing its next wake-up under `scheme`.
    fn go_to_sleep<R: Rng + ?Sized>(
        &mut self,
        now: f64,
        scheme: &Scheme,
        params: &ProtocolParams,
        rng: &mut R,
    ) -> Result<f64, ProtocolError> {
        let r: f64 = rng.sample(Open01);
        let duration = match scheme {
            Scheme::Sentinel => {
                self.probe_rate = update_probe_rate(self.probe_rate, now, self.beta, &params.rate_bounds)?;
                let law = WeibullParams::from_rate(self.probe_rate, self.beta)?;
                sample_sleep_time(&law, r, &params.sleep_bounds)?
            }
            Scheme::Peas(p) => peas_sample_sleep(p.lambda_peas, r)?,
        };
        self.transition(NodeState::Sleeping)?;
        self.wake_deadline = now + duration;
        Ok(self.wake_deadline)
    }
}

/// Redundancy test: a responder at distance `d` guards this node's area.
pub fn scan_check(d: f64, delta: f64) -> bool {
    d <= delta
}

/// Wake timer fired: start a probing round.
pub fn on_wake(node: &mut SensorNode, now: f64, params: &ProtocolParams) -> Result<Vec<Effect>, ProtocolError> {
    if node.state != NodeState::Sleeping {
        return Err(ProtocolError::UnexpectedEvent { id: node.id, event: "wake", state: node.state });
    }
    if node.energy_remaining <= 0.0 {
        node.transition(NodeState::Dead)?;
        return Ok(vec![Effect::Died]);
    }
    node.transition(NodeState::Probing)?;
    node.probes_sent_this_round = 1;
    Ok(vec![Effect::Broadcast(node.request(params)), Effect::ArmTimeout(now + params.t_w)])
}

/// Only Active nodes answer probes.
pub fn on_probe_request(node: &SensorNode, _msg: &ProbeRequest, now: f64, params: &ProtocolParams) -> Option<ProbeReply> {
    (node.state == NodeState::Active).then(|| ProbeReply {
        sender_id: node.id,
        sender_position: node.position,
        activity_age: node.activity_age(now),
        size: params.msg_size,
    })
}

/// A probe reply reached this node.
///
/// Probing nodes sleep on the first reply that passes the redundancy test.
/// Active nodes treat the reply as a potential conflict.
pub fn on_probe_reply<R: Rng + ?Sized>(
    node: &mut SensorNode,
    msg: &ProbeReply,
    now: f64,
    scheme: &Scheme,
    params: &ProtocolParams,
    rng: &mut R,
) -> Result<Vec<Effect>, ProtocolError> {
    match node.state {
        NodeState::Probing => {
            let d = node.position.distance(&msg.sender_position);
            if !scan_check(d, scheme.guard_distance(params)) {
                return Ok(Vec::new());
            }
            let wake = node.go_to_sleep(now, scheme, params, rng)?;
            Ok(vec![Effect::SleepUntil(wake)])
        }
        NodeState::Active => on_withdrawal_check(node, msg, now, scheme, params, rng),
        NodeState::Sleeping | NodeState::Dead => Ok(Vec::new()),
    }
}

/// Reply wait expired without a guarding reply.
pub fn on_reply_timeout(node: &mut SensorNode, now: f64, params: &ProtocolParams) -> Result<Vec<Effect>, ProtocolError> {
    if node.state != NodeState::Probing {
        return Err(ProtocolError::UnexpectedEvent { id: node.id, event: "reply timeout", state: node.state });
    }
    if node.probes_sent_this_round < params.k_probes {
        node.probes_sent_this_round += 1;
        return Ok(vec![Effect::Broadcast(node.request(params)), Effect::ArmTimeout(now + params.t_w)]);
    }
    node.transition(NodeState::Active)?;
    node.activity_start = Some(now);
    Ok(vec![Effect::Activated])
}

/// Conflict resolution between two Active nodes closer than `delta`: the
/// younger one goes back to sleep, equal ages resolve to the higher id.
/// `msg.activity_age` must be the peer's age at `now`.
pub fn on_withdrawal_check<R: Rng + ?Sized>(
    node: &mut SensorNode,
    msg: &ProbeReply,
    now: f64,
    scheme: &Scheme,
    params: &ProtocolParams,
    rng: &mut R,
) -> Result<Vec<Effect>, ProtocolError> {
    if node.state != NodeState::Active || msg.sender_id == node.id {
        return Ok(Vec::new());
    }
    if matches!(scheme, Scheme::Peas(_)) {
        return Ok(Vec::new());
    }
    let d = node.position.distance(&msg.sender_position);
    if d >= params.delta {
        return Ok(Vec::new());
    }
    let own_age = node.activity_age(now);
    let yields = own_age < msg.activity_age || (own_age == msg.activity_age && node.id > msg.sender_id);
    if !yields {
        return Ok(Vec::new());
    }
    let wake = node.go_to_sleep(now, scheme, params, rng)?;
    Ok(vec![Effect::Withdrew, Effect::SleepUntil(wake)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn node(id: NodeId, x: f64, y: f64) -> SensorNode {
        SensorNode::new(id, Point::planar(x, y), 100.0, ProbeRate::new(0.01).unwrap(), 2.0)
    }

    fn reply_from(id: NodeId, x: f64, y: f64, age: f64) -> ProbeReply {
        ProbeReply { sender_id: id, sender_position: Point::planar(x, y), activity_age: age, size: 25 }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn activate(n: &mut SensorNode, at: f64) {
        n.state = NodeState::Active;
        n.activity_start = Some(at);
    }

    #[test]
    fn transition_table() {
        use NodeState::*;
        let allowed = [
            (Sleeping, Probing),
            (Probing, Sleeping),
            (Probing, Active),
            (Active, Sleeping),
            (Active, Dead),
            (Probing, Dead),
            (Sleeping, Dead),
        ];
        for a in NodeState::ALL {
            for b in NodeState::ALL {
                assert_eq!(a.can_transition_to(b), allowed.contains(&(a, b)), "{a:?}->{b:?}");
            }
        }
        for b in NodeState::ALL {
            assert!(!Dead.can_transition_to(b));
        }
    }

    #[test]
    fn wake_starts_probing_round() {
        let p = ProtocolParams::default();
        let mut n = node(1, 0.0, 0.0);
        let fx = on_wake(&mut n, 120.0, &p).unwrap();
        assert_eq!(n.state, NodeState::Probing);
        assert_eq!(n.probes_sent_this_round, 1);
        assert!(matches!(fx[0], Effect::Broadcast(Message::Request(_))));
        assert_eq!(fx[1], Effect::ArmTimeout(121.0));
    }

    #[test]
    fn wake_with_empty_battery_dies() {
        let mut n = node(1, 0.0, 0.0);
        n.energy_remaining = 0.0;
        let fx = on_wake(&mut n, 5.0, &ProtocolParams::default()).unwrap();
        assert_eq!(fx, vec![Effect::Died]);
        assert_eq!(n.state, NodeState::Dead);
    }

    #[test]
    fn wake_on_active_node_is_an_invariant_error() {
        let mut n = node(1, 0.0, 0.0);
        activate(&mut n, 0.0);
        assert!(matches!(
            on_wake(&mut n, 5.0, &ProtocolParams::default()),
            Err(ProtocolError::UnexpectedEvent { .. })
        ));
    }

    #[test]
    fn only_active_nodes_reply() {
        let p = ProtocolParams::default();
        let req = ProbeRequest { sender_id: 9, sender_position: Point::planar(1.0, 1.0), size: 25 };
        let mut n = node(1, 0.0, 0.0);
        assert!(on_probe_request(&n, &req, 150.0, &p).is_none());
        n.state = NodeState::Probing;
        assert!(on_probe_request(&n, &req, 150.0, &p).is_none());
        activate(&mut n, 100.0);
        let rep = on_probe_request(&n, &req, 150.0, &p).unwrap();
        assert_eq!(rep.activity_age, 50.0);
        assert_eq!(rep.sender_position, n.position);
        assert_eq!(rep.size, 25);
    }

    #[test]
    fn scan_boundary_is_inclusive() {
        assert!(scan_check(15.0, 20.0));
        assert!(!scan_check(25.0, 20.0));
        assert!(scan_check(20.0, 20.0));
    }

    #[test]
    fn guarded_reply_puts_prober_to_sleep_with_updated_rate() {
        let p = ProtocolParams::default();
        let mut n = node(1, 0.0, 0.0);
        on_wake(&mut n, 100.0, &p).unwrap();
        let fx = on_probe_reply(&mut n, &reply_from(2, 10.0, 0.0, 3.0), 100.0, &Scheme::Sentinel, &p, &mut rng())
            .unwrap();
        assert_eq!(n.state, NodeState::Sleeping);
        assert!((n.probe_rate.value() - 0.02).abs() < 1e-15);
        let Effect::SleepUntil(at) = fx[0] else { panic!("{fx:?}") };
        assert!(at >= 101.0 && at <= 100.0 + 10.0 / 0.02);
        assert_eq!(n.wake_deadline, at);
        assert_eq!(n.probes_sent_this_round, 0);
    }

    #[test]
    fn distant_reply_is_ignored() {
        let p = ProtocolParams::default();
        let mut n = node(1, 0.0, 0.0);
        on_wake(&mut n, 100.0, &p).unwrap();
        let fx = on_probe_reply(&mut n, &reply_from(2, 30.0, 0.0, 3.0), 100.0, &Scheme::Sentinel, &p, &mut rng())
            .unwrap();
        assert!(fx.is_empty());
        assert_eq!(n.state, NodeState::Probing);
        assert_eq!(n.probe_rate.value(), 0.01);
    }

    #[test]
    fn second_reply_after_sleeping_is_discarded() {
        let p = ProtocolParams::default();
        let mut n = node(1, 0.0, 0.0);
        on_wake(&mut n, 100.0, &p).unwrap();
        let mut r = rng();
        on_probe_reply(&mut n, &reply_from(2, 10.0, 0.0, 3.0), 100.0, &Scheme::Sentinel, &p, &mut r).unwrap();
        let snapshot = n.clone();
        let fx = on_probe_reply(&mut n, &reply_from(3, 5.0, 0.0, 9.0), 100.001, &Scheme::Sentinel, &p, &mut r)
            .unwrap();
        assert!(fx.is_empty());
        assert_eq!(n, snapshot);
    }

    #[test]
    fn timeouts_retry_then_activate() {
        let p = ProtocolParams::default();
        let mut n = node(1, 0.0, 0.0);
        on_wake(&mut n, 10.0, &p).unwrap();
        let fx = on_reply_timeout(&mut n, 11.0, &p).unwrap();
        assert!(matches!(fx[0], Effect::Broadcast(Message::Request(_))));
        assert_eq!(fx[1], Effect::ArmTimeout(12.0));
        assert_eq!(n.probes_sent_this_round, 2);
        on_reply_timeout(&mut n, 12.0, &p).unwrap();
        assert_eq!(n.probes_sent_this_round, 3);
        let fx = on_reply_timeout(&mut n, 13.0, &p).unwrap();
        assert_eq!(fx, vec![Effect::Activated]);
        assert_eq!(n.state, NodeState::Active);
        assert_eq!(n.activity_start, Some(13.0));
        assert_eq!(n.probes_sent_this_round, 0);
    }

    #[test]
    fn single_attempt_activates_on_first_timeout() {
        let p = ProtocolParams { k_probes: 1, ..Default::default() };
        let mut n = node(1, 0.0, 0.0);
        on_wake(&mut n, 10.0, &p).unwrap();
        assert_eq!(on_reply_timeout(&mut n, 11.0, &p).unwrap(), vec![Effect::Activated]);
    }

    #[test]
    fn younger_active_withdraws() {
        let p = ProtocolParams::default();
        let mut n = node(1, 0.0, 0.0);
        activate(&mut n, 95.0);
        let fx = on_withdrawal_check(&mut n, &reply_from(2, 10.0, 0.0, 12.0), 100.0, &Scheme::Sentinel, &p, &mut rng())
            .unwrap();
        assert_eq!(fx[0], Effect::Withdrew);
        assert_eq!(n.state, NodeState::Sleeping);
        assert_eq!(n.activity_start, None);
        assert!((n.probe_rate.value() - 2.0 * 0.01 * 0.01 * 100.0).abs() < 1e-15);
    }

    #[test]
    fn older_active_ignores_younger_peer() {
        let p = ProtocolParams::default();
        let mut n = node(1, 0.0, 0.0);
        activate(&mut n, 88.0);
        let fx = on_withdrawal_check(&mut n, &reply_from(2, 10.0, 0.0, 5.0), 100.0, &Scheme::Sentinel, &p, &mut rng())
            .unwrap();
        assert!(fx.is_empty());
        assert_eq!(n.state, NodeState::Active);
    }

    #[test]
    fn distant_actives_do_not_conflict() {
        let p = ProtocolParams::default();
        let mut n = node(1, 0.0, 0.0);
        activate(&mut n, 99.0);
        for x in [20.0, 25.0] {
            let fx = on_withdrawal_check(&mut n, &reply_from(2, x, 0.0, 50.0), 100.0, &Scheme::Sentinel, &p, &mut rng())
                .unwrap();
            assert!(fx.is_empty());
        }
    }

    #[test]
    fn equal_ages_exactly_one_withdraws() {
        let p = ProtocolParams::default();
        let mut a = node(3, 0.0, 0.0);
        let mut b = node(8, 10.0, 0.0);
        activate(&mut a, 93.0);
        activate(&mut b, 93.0);
        let ra = on_probe_request(&a, &ProbeRequest { sender_id: 0, sender_position: a.position, size: 25 }, 100.0, &p).unwrap();
        let rb = on_probe_request(&b, &ProbeRequest { sender_id: 0, sender_position: b.position, size: 25 }, 100.0, &p).unwrap();
        assert_eq!(ra.activity_age, 7.0);
        let fa = on_withdrawal_check(&mut a, &rb, 100.0, &Scheme::Sentinel, &p, &mut rng()).unwrap();
        let fb = on_withdrawal_check(&mut b, &ra, 100.0, &Scheme::Sentinel, &p, &mut rng()).unwrap();
        assert!(fa.is_empty());
        assert_eq!(fb[0], Effect::Withdrew);
        assert_eq!(a.state, NodeState::Active);
        assert_eq!(b.state, NodeState::Sleeping);
    }

    #[test]
    fn probing_node_routes_nothing_to_withdrawal() {
        let p = ProtocolParams::default();
        let mut n = node(1, 0.0, 0.0);
        n.state = NodeState::Sleeping;
        let fx = on_probe_reply(&mut n, &reply_from(2, 1.0, 0.0, 1.0), 5.0, &Scheme::Sentinel, &p, &mut rng()).unwrap();
        assert!(fx.is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn conflicting_pair_has_exactly_one_withdrawal(
                start_a in 0.0f64..500.0, start_b in 0.0f64..500.0,
                d in 0.0f64..19.99, id_a in 0u32..1000, id_b in 0u32..1000,
            ) {
                prop_assume!(id_a != id_b);
                let p = ProtocolParams::default();
                let now = 600.0;
                let mut a = node(id_a, 0.0, 0.0);
                let mut b = node(id_b, d, 0.0);
                activate(&mut a, start_a);
                activate(&mut b, start_b);
                let req = ProbeRequest { sender_id: 5000, sender_position: Point::planar(0.0, 0.0), size: 25 };
                let ra = on_probe_request(&a, &req, now, &p).unwrap();
                let rb = on_probe_request(&b, &req, now, &p).unwrap();
                let mut r = rng();
                let fa = on_withdrawal_check(&mut a, &rb, now, &Scheme::Sentinel, &p, &mut r).unwrap();
                let fb = on_withdrawal_check(&mut b, &ra, now, &Scheme::Sentinel, &p, &mut r).unwrap();
                let withdrawn = usize::from(!fa.is_empty()) + usize::from(!fb.is_empty());
                prop_assert_eq!(withdrawn, 1);
            }

            #[test]
            fn sleeps_stay_within_bounds(now in 0.0f64..10_000.0, lambda in 1e-4f64..10.0, beta in 1.0f64..3.0) {
                let p = ProtocolParams::default();
                let mut n = node(1, 0.0, 0.0);
                n.probe_rate = ProbeRate::new(lambda).unwrap();
                n.beta = beta;
                n.state = NodeState::Probing;
                let fx = on_probe_reply(&mut n, &reply_from(2, 1.0, 0.0, 1.0), now, &Scheme::Sentinel, &p, &mut rng()).unwrap();
                let Effect::SleepUntil(at) = fx[0] else { panic!() };
                let alpha = 1.0 / n.probe_rate.value();
                let ts = at - now;
                prop_assert!(ts.is_finite());
                prop_assert!(ts >= p.sleep_bounds.min - 1e-9);
                prop_assert!(ts <= (p.sleep_bounds.max_factor * alpha).max(p.sleep_bounds.min) * (1.0 + 1e-12));
            }
        }
    }
}
