use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::protocol::NodeId;

use super::SimError;

pub type FrameId = u64;

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// Sleep timer expiry. `epoch` is the node's state epoch at scheduling.
    Wake { node: NodeId, epoch: u64 },
    ReplyTimeout { node: NodeId, epoch: u64 },
    /// An Active node transmits a (jittered) answer to a probe.
    SendReply { node: NodeId, epoch: u64 },
    /// End of a frame's airtime; receivers that heard it cleanly get it.
    MessageDelivery { frame: FrameId },
    MetricsSample,
    FailureInjection { index: usize },
    /// Projected battery exhaustion under the node's current draw.
    Depletion { node: NodeId, epoch: u64 },
    EndOfRun,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub sequence: u64,
    pub kind: EventKind,
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (time, sequence)
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Time-ordered queue; equal times pop in insertion order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<SimEvent>,
    next_sequence: u64,
    clock: f64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, time: f64, kind: EventKind) -> Result<u64, SimError> {
        if !(time >= self.clock) || !time.is_finite() {
            return Err(SimError::Queue(format!(
                "event {kind:?} scheduled at {time} before clock {}",
                self.clock
            )));
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(SimEvent { time, sequence, kind });
        Ok(sequence)
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        let ev = self.heap.pop()?;
        debug_assert!(ev.time >= self.clock);
        self.clock = ev.time;
        Some(ev)
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.time)
    }
}
