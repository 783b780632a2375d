use serde::{Deserialize, Serialize};

use crate::protocol::NodeState;

use super::config::EnergyModel;

/// Per-node energy bookkeeping. Remaining energy is tracked alongside the
/// decomposition into time-in-state and per-frame charges so the two can be
/// reconciled after a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub initial: f64,
    /// Joules drawn so far, accumulated directly so small charges keep their
    /// relative precision.
    pub consumed: f64,
    pub last_update: f64,
    /// Seconds spent in each state, indexed by [`NodeState::index`].
    pub state_time: [f64; 4],
    pub tx_frames: u64,
    pub rx_frames: u64,
    /// Joules actually charged for frames (equals count times unit cost
    /// unless the battery ran out mid-charge).
    pub tx_energy: f64,
    pub rx_energy: f64,
    pub death_time: Option<f64>,
}

impl EnergyLedger {
    pub fn new(initial: f64) -> Self {
        Self {
            initial,
            consumed: 0.0,
            last_update: 0.0,
            state_time: [0.0; 4],
            tx_frames: 0,
            rx_frames: 0,
            tx_energy: 0.0,
            rx_energy: 0.0,
            death_time: None,
        }
    }

    pub fn remaining(&self) -> f64 {
        (self.initial - self.consumed).max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.consumed >= self.initial
    }

    /// Charges the draw of `state` from the last update until `now`.
    /// Returns `true` when the battery empties within the interval; the
    /// exhaustion instant is then recorded in `death_time`.
    pub fn accrue(&mut self, now: f64, state: NodeState, model: &EnergyModel) -> bool {
        let dt = now - self.last_update;
        if dt <= 0.0 {
            return self.is_empty();
        }
        self.last_update = now;
        if state == NodeState::Dead {
            return false;
        }
        let p = model.power(state);
        let cost = p * dt;
        let left = self.remaining();
        if cost < left {
            self.consumed += cost;
            self.state_time[state.index()] += dt;
            return false;
        }
        let alive_for = if p > 0.0 { left / p } else { dt };
        self.state_time[state.index()] += alive_for;
        self.consumed += p * alive_for;
        self.death_time.get_or_insert(now - dt + alive_for);
        true
    }

    fn charge(&mut self, amount: f64) -> f64 {
        let taken = amount.min(self.remaining());
        self.consumed += taken;
        taken
    }

    /// Returns `true` if the frame emptied the battery.
    pub fn charge_tx(&mut self, model: &EnergyModel) -> bool {
        self.tx_frames += 1;
        self.tx_energy += self.charge(model.e_tx);
        self.is_empty()
    }

    pub fn charge_rx(&mut self, model: &EnergyModel) -> bool {
        self.rx_frames += 1;
        self.rx_energy += self.charge(model.e_rx);
        self.is_empty()
    }

    /// Energy implied by the state-time and frame decomposition.
    pub fn decomposed(&self, model: &EnergyModel) -> f64 {
        NodeState::ALL
            .iter()
            .map(|s| model.power(*s) * self.state_time[s.index()])
            .sum::<f64>()
            + self.tx_energy
            + self.rx_energy
    }

    /// Relative mismatch between the running balance and the decomposition.
    pub fn reconciliation_error(&self, model: &EnergyModel) -> f64 {
        let consumed = self.consumed;
        let decomposed = self.decomposed(model);
        let scale = consumed.abs().max(decomposed.abs());
        if scale == 0.0 {
            0.0
        } else {
            (consumed - decomposed).abs() / scale
        }
    }

    /// Seconds until exhaustion under the draw of `state`.
    pub fn time_to_empty(&self, state: NodeState, model: &EnergyModel) -> Option<f64> {
        let p = model.power(state);
        let left = self.remaining();
        (p > 0.0 && left > 0.0).then(|| left / p)
    }
}
