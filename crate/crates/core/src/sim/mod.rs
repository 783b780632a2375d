//! Deterministic discrete-event kernel.

pub mod config;
pub mod energy;
pub mod event;
pub mod radio;
mod world;

use thiserror::Error;

use crate::protocol::ProtocolError;

pub use config::{EnergyModel, FailureInjection, FailureTarget, ProtocolKind, SimConfig};
pub use energy::EnergyLedger;
pub use event::{EventKind, EventQueue, SimEvent};
pub use world::{deploy, simulate, Layout, World};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("event queue invariant violated: {0}")]
    Queue(String),
    #[error("protocol invariant violated at t={time}: {source}")]
    Protocol { time: f64, source: ProtocolError },
}

impl SimError {
    pub fn config(msg: impl Into<String>) -> Self {
        SimError::Config(msg.into())
    }
}
