//! Unit-disk broadcast channel.
//!
//! Every frame occupies the air for `size * 8 / bitrate` seconds. A receiver
//! hears a frame only if its radio is on when the frame starts and stays on
//! until it ends. Two frames audible at the same receiver with overlapping
//! airtime destroy each other there (no capture). Independently, each
//! reception may be dropped with the configured loss probability.

use std::collections::HashMap;

use rand::Rng;

use crate::protocol::{Message, NodeId, Position};

use super::event::FrameId;

#[derive(Debug, Clone)]
struct Transmission {
    frame: FrameId,
    sender: NodeId,
    end: f64,
}

#[derive(Debug, Clone, Copy)]
struct Reception {
    frame: FrameId,
    clean: bool,
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub message: Message,
    pub start: f64,
    pub end: f64,
}

/// Outcome of starting a transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxStart {
    pub frame: FrameId,
    pub end: f64,
    pub collisions: u64,
}

#[derive(Debug)]
pub struct Radio {
    positions: Vec<Position>,
    neighbors: Vec<Vec<NodeId>>,
    range_sq: f64,
    airtime_per_octet: f64,
    loss_probability: f64,
    on_air: Vec<Transmission>,
    frames: HashMap<FrameId, Frame>,
    receptions: Vec<Vec<Reception>>,
    next_frame: FrameId,
}

impl Radio {
    pub fn new(positions: Vec<Position>, r_c: f64, bitrate: f64, loss_probability: f64) -> Self {
        let range_sq = r_c * r_c;
        let n = positions.len();
        let neighbors = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && positions[i].distance_sq(&positions[j]) <= range_sq)
                    .map(|j| j as NodeId)
                    .collect()
            })
            .collect();
        Self {
            positions,
            neighbors,
            range_sq,
            airtime_per_octet: 8.0 / bitrate,
            loss_probability,
            on_air: Vec::new(),
            frames: HashMap::new(),
            receptions: vec![Vec::new(); n],
            next_frame: 0,
        }
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.neighbors[node as usize]
    }

    pub fn airtime(&self, size: u32) -> f64 {
        f64::from(size) * self.airtime_per_octet
    }

    fn audible(&self, from: NodeId, at: NodeId) -> bool {
        self.positions[from as usize].distance_sq(&self.positions[at as usize]) <= self.range_sq
    }

    /// Starts `message` from its sender at `now`. `listening` reports whether
    /// a node's radio is currently on.
    pub fn transmit<R: Rng + ?Sized>(
        &mut self,
        message: Message,
        now: f64,
        listening: impl Fn(NodeId) -> bool,
        rng: &mut R,
    ) -> TxStart {
        let sender = message.sender();
        let end = now + self.airtime(message.size());
        let frame = self.next_frame;
        self.next_frame += 1;
        self.on_air.retain(|t| t.end > now);

        // half duplex: whatever the sender was receiving is lost
        for r in &mut self.receptions[sender as usize] {
            r.clean = false;
        }

        let mut collisions = 0;
        for idx in 0..self.neighbors[sender as usize].len() {
            let rx = self.neighbors[sender as usize][idx];
            if !listening(rx) {
                continue;
            }
            let mut clean = true;
            let self_busy = self.on_air.iter().any(|t| t.sender == rx);
            let interferers: Vec<FrameId> = self
                .on_air
                .iter()
                .filter(|t| t.sender != sender && t.sender != rx && self.audible(t.sender, rx))
                .map(|t| t.frame)
                .collect();
            if !interferers.is_empty() {
                clean = false;
                collisions += 1;
                for r in &mut self.receptions[rx as usize] {
                    if interferers.contains(&r.frame) {
                        r.clean = false;
                    }
                }
            }
            if self_busy {
                clean = false;
            }
            if self.loss_probability > 0.0 && rng.gen::<f64>() < self.loss_probability {
                clean = false;
            }
            self.receptions[rx as usize].push(Reception { frame, clean });
        }

        self.on_air.push(Transmission { frame, sender, end });
        self.frames.insert(frame, Frame { message, start: now, end });
        TxStart { frame, end, collisions }
    }

    /// Radio switched off or node died: pending receptions are abandoned.
    pub fn radio_off(&mut self, node: NodeId) {
        self.receptions[node as usize].clear();
    }

    /// Ends a frame's airtime. Returns the frame and the receivers (in id
    /// order) that got it intact.
    pub fn complete(&mut self, frame: FrameId) -> Option<(Frame, Vec<NodeId>)> {
        let f = self.frames.remove(&frame)?;
        let sender = f.message.sender();
        let mut delivered = Vec::new();
        for &rx in &self.neighbors[sender as usize] {
            let list = &mut self.receptions[rx as usize];
            if let Some(pos) = list.iter().position(|r| r.frame == frame) {
                let r = list.swap_remove(pos);
                if r.clean {
                    delivered.push(rx);
                }
            }
        }
        Some((f, delivered))
    }
}
