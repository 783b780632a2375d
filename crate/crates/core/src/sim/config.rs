use serde::{Deserialize, Serialize};

use crate::peas::PeasParams;
use crate::protocol::{NodeId, ProtocolParams, Scheme};
use crate::sched::{RateBounds, SleepBounds};

use super::SimError;

/// Per-state power draw and per-frame radio costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    /// Watts.
    pub p_sleep: f64,
    pub p_probe_listen: f64,
    pub p_active: f64,
    /// Joules per transmitted frame.
    pub e_tx: f64,
    /// Joules per received frame.
    pub e_rx: f64,
    /// Joules per node at deployment.
    pub initial_energy: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        // 2 x AA at ~2600 mAh, 1.2 V
        Self {
            p_sleep: 3e-6,
            p_probe_listen: 60e-3,
            p_active: 15e-3,
            e_tx: 50e-6,
            e_rx: 50e-6,
            initial_energy: 18_720.0,
        }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let finite = [self.p_sleep, self.p_probe_listen, self.p_active, self.e_tx, self.e_rx, self.initial_energy]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(SimError::config("energy model values must be finite"));
        }
        if self.p_sleep < 0.0 {
            return Err(SimError::config("p_sleep must be non-negative"));
        }
        if !(self.p_sleep < self.p_probe_listen) || !(self.p_sleep < self.p_active) {
            return Err(SimError::config("p_sleep must be below both p_probe_listen and p_active"));
        }
        if self.e_tx < 0.0 || self.e_rx < 0.0 {
            return Err(SimError::config("per-message energies must be non-negative"));
        }
        if !(self.initial_energy > 0.0) {
            return Err(SimError::config("initial_energy must be positive"));
        }
        Ok(())
    }

    pub fn power(&self, state: crate::protocol::NodeState) -> f64 {
        use crate::protocol::NodeState::*;
        match state {
            Sleeping => self.p_sleep,
            Probing => self.p_probe_listen,
            Active => self.p_active,
            Dead => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Sentinel,
    Peas,
}

impl ProtocolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::Sentinel => "sentinel",
            ProtocolKind::Peas => "peas",
        }
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sentinel" => Ok(ProtocolKind::Sentinel),
            "peas" => Ok(ProtocolKind::Peas),
            other => Err(format!("unknown protocol `{other}` (expected sentinel or peas)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FailureTarget {
    Node(NodeId),
    /// Whichever Active node the run picks at injection time.
    RandomSentinel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureInjection {
    pub target: FailureTarget,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub field_width: f64,
    pub field_height: f64,
    pub n_nodes: u32,
    pub r_s: f64,
    pub r_c: f64,
    pub delta: f64,
    pub duration: f64,
    pub seed: u64,
    pub protocol: ProtocolKind,
    pub beta: f64,
    pub lambda_init: f64,
    pub t_w: f64,
    pub k_probes: u32,
    pub msg_size: u32,
    /// Bits per second.
    pub bitrate: f64,
    pub loss_probability: f64,
    pub energy: EnergyModel,
    pub metrics_interval: f64,
    pub failure_injections: Vec<FailureInjection>,
    pub ts_initial_max: f64,
    /// Upper bound of a uniform delay before an Active node answers a probe, seconds.
    pub reply_jitter: f64,
    /// Upper bound of a uniform delay added to every wake timer, seconds.
    /// Models timer tolerance; keeps nodes that fall asleep together from
    /// waking in lockstep.
    pub wake_jitter: f64,
    /// Sleep floor, seconds. Once the probe rate reaches `lambda_max` every
    /// Sentinel sleep lands on this floor, so it sets the reserve probing duty.
    pub t_s_min: f64,
    pub t_s_max_factor: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// PEAS wake rate; `lambda_init` when unset.
    pub peas_lambda: Option<f64>,
    /// PEAS probing range; `delta` when unset.
    pub peas_probing_range: Option<f64>,
    pub grid_resolution: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let sleep = SleepBounds::<f64>::default();
        let rate = RateBounds::<f64>::default();
        Self {
            field_width: 50.0,
            field_height: 50.0,
            n_nodes: 200,
            r_s: 10.0,
            r_c: 20.0,
            delta: 20.0,
            duration: 6000.0,
            seed: 1,
            protocol: ProtocolKind::Sentinel,
            beta: 2.0,
            lambda_init: 0.01,
            t_w: 1.0,
            k_probes: 3,
            msg_size: 25,
            bitrate: 250_000.0,
            loss_probability: 0.05,
            energy: EnergyModel::default(),
            metrics_interval: 10.0,
            failure_injections: Vec::new(),
            ts_initial_max: 10.0,
            reply_jitter: 0.005,
            wake_jitter: 0.1,
            t_s_min: 10.0,
            t_s_max_factor: sleep.max_factor,
            lambda_min: rate.min,
            lambda_max: rate.max,
            peas_lambda: None,
            peas_probing_range: None,
            grid_resolution: 1.0,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), SimError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SimError::config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        positive("field_width", self.field_width)?;
        positive("field_height", self.field_height)?;
        positive("r_s", self.r_s)?;
        positive("r_c", self.r_c)?;
        positive("delta", self.delta)?;
        positive("beta", self.beta)?;
        positive("lambda_init", self.lambda_init)?;
        positive("t_w", self.t_w)?;
        positive("bitrate", self.bitrate)?;
        positive("metrics_interval", self.metrics_interval)?;
        positive("ts_initial_max", self.ts_initial_max)?;
        positive("t_s_min", self.t_s_min)?;
        positive("t_s_max_factor", self.t_s_max_factor)?;
        positive("lambda_min", self.lambda_min)?;
        positive("lambda_max", self.lambda_max)?;
        positive("grid_resolution", self.grid_resolution)?;
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return Err(SimError::config(format!("duration must be non-negative, got {}", self.duration)));
        }
        if self.delta > 2.0 * self.r_s {
            return Err(SimError::config(format!(
                "delta ({}) must not exceed twice the sensing radius ({})",
                self.delta, self.r_s
            )));
        }
        if self.r_c < self.r_s {
            return Err(SimError::config(format!(
                "communication radius ({}) must be at least the sensing radius ({})",
                self.r_c, self.r_s
            )));
        }
        if self.k_probes < 1 {
            return Err(SimError::config("k_probes must be at least 1"));
        }
        if self.msg_size == 0 {
            return Err(SimError::config("msg_size must be positive"));
        }
        if !(0.0..1.0).contains(&self.loss_probability) {
            return Err(SimError::config(format!(
                "loss_probability must lie in [0, 1), got {}",
                self.loss_probability
            )));
        }
        if !(self.reply_jitter >= 0.0) || !self.reply_jitter.is_finite() {
            return Err(SimError::config("reply_jitter must be non-negative"));
        }
        if !(self.wake_jitter >= 0.0) || !self.wake_jitter.is_finite() {
            return Err(SimError::config("wake_jitter must be non-negative"));
        }
        if self.lambda_max < self.lambda_min {
            return Err(SimError::config("lambda_max must be at least lambda_min"));
        }
        if let Some(l) = self.peas_lambda {
            positive("peas_lambda", l)?;
        }
        if let Some(r) = self.peas_probing_range {
            positive("peas_probing_range", r)?;
        }
        self.energy.validate()?;
        for f in &self.failure_injections {
            if !(f.time >= 0.0) || f.time > self.duration {
                return Err(SimError::config(format!(
                    "failure injection at t={} lies outside the run [0, {}]",
                    f.time, self.duration
                )));
            }
            if let FailureTarget::Node(id) = f.target {
                if id >= self.n_nodes {
                    return Err(SimError::config(format!(
                        "failure injection targets unknown node {id} (n_nodes = {})",
                        self.n_nodes
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn airtime(&self) -> f64 {
        f64::from(self.msg_size) * 8.0 / self.bitrate
    }

    pub fn protocol_params(&self) -> ProtocolParams {
        ProtocolParams {
            delta: self.delta,
            t_w: self.t_w,
            k_probes: self.k_probes,
            ts_initial_max: self.ts_initial_max,
            r_s: self.r_s,
            r_c: self.r_c,
            msg_size: self.msg_size,
            reply_jitter: self.reply_jitter,
            sleep_bounds: SleepBounds { min: self.t_s_min, max_factor: self.t_s_max_factor },
            rate_bounds: RateBounds { min: self.lambda_min, max: self.lambda_max },
        }
    }

    pub fn scheme(&self) -> Scheme {
        match self.protocol {
            ProtocolKind::Sentinel => Scheme::Sentinel,
            ProtocolKind::Peas => Scheme::Peas(PeasParams {
                probing_range: self.peas_probing_range.unwrap_or(self.delta),
                lambda_peas: self.peas_lambda.unwrap_or(self.lambda_init),
            }),
        }
    }
}
