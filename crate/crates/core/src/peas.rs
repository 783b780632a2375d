//! Simplified PEAS baseline.
//!
//! Sleepers wake at a fixed exponential rate and probe. A guarding reply sends
//! them back to sleep with the same rate; silence after the probe budget makes
//! them work for the rest of their life. There is no rate adaptation and no
//! withdrawal, so redundant workers created by lost replies persist.
//!
//! The state machine itself is shared with the Sentinel scheme
//! ([`crate::protocol`]); [`crate::protocol::Scheme::Peas`] selects this policy.

use serde::{Deserialize, Serialize};

use crate::sched::SchedError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeasParams {
    /// Minimum spacing between working nodes (meters).
    pub probing_range: f64,
    /// Wake-up rate (1/s).
    pub lambda_peas: f64,
}

impl PeasParams {
    pub fn new(probing_range: f64, lambda_peas: f64) -> Result<Self, SchedError> {
        if !(probing_range > 0.0) || !probing_range.is_finite() {
            return Err(SchedError::InvalidBounds(probing_range, probing_range));
        }
        if !(lambda_peas > 0.0) || !lambda_peas.is_finite() {
            return Err(SchedError::InvalidRate(lambda_peas));
        }
        Ok(Self { probing_range, lambda_peas })
    }
}

/// Exponential sleep `ln(1/r) / lambda`.
pub fn peas_sample_sleep(lambda_peas: f64, r: f64) -> Result<f64, SchedError> {
    if !(r > 0.0 && r < 1.0) {
        return Err(SchedError::UniformOutOfRange(r));
    }
    if !(lambda_peas > 0.0) || !lambda_peas.is_finite() {
        return Err(SchedError::InvalidRate(lambda_peas));
    }
    Ok((1.0 / r).ln() / lambda_peas)
}
