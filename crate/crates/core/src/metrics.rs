//! Records emitted by a simulation run.

use serde::{Deserialize, Serialize};

use crate::protocol::{NodeId, NodeState, Position};
use crate::sim::config::SimConfig;
use crate::sim::energy::EnergyLedger;

/// One row of the metrics time series. Counters are cumulative since t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub time: f64,
    pub active_count: u32,
    pub sleeping_count: u32,
    pub probing_count: u32,
    pub dead_count: u32,
    pub total_energy_consumed: f64,
    pub coverage_fraction: f64,
    pub probes_sent: u64,
    pub probes_received: u64,
    pub replies_sent: u64,
    pub replies_received: u64,
    pub collisions: u64,
    pub withdrawals: u64,
}

impl MetricsRecord {
    pub const CSV_HEADER: &'static str = "time,active_count,sleeping_count,probing_count,dead_count,\
total_energy_consumed,coverage_fraction,probes_sent,probes_received,replies_sent,replies_received,\
collisions,withdrawals";

    pub fn state_total(&self) -> u32 {
        self.active_count + self.sleeping_count + self.probing_count + self.dead_count
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{:.6},{},{},{},{},{:.6},{:.6},{},{},{},{},{},{}",
            self.time,
            self.active_count,
            self.sleeping_count,
            self.probing_count,
            self.dead_count,
            self.total_energy_consumed,
            self.coverage_fraction,
            self.probes_sent,
            self.probes_received,
            self.replies_sent,
            self.replies_received,
            self.collisions,
            self.withdrawals
        )
    }
}

/// Cumulative radio and protocol counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub probes_sent: u64,
    pub probes_received: u64,
    pub replies_sent: u64,
    pub replies_received: u64,
    /// Distinct reply frames that reached at least one node.
    pub reply_frames_delivered: u64,
    pub collisions: u64,
    pub withdrawals: u64,
    pub activations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub time: f64,
    pub node: Option<NodeId>,
    pub position: Option<Position>,
    pub was_active: bool,
}

/// A node entering or leaving the Active set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActiveChange {
    pub time: f64,
    pub node: NodeId,
    pub position: Position,
    pub active: bool,
}

/// Active pairs closer than delta at a sampling instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictSnapshot {
    pub time: f64,
    pub conflicting_pairs: u32,
    /// Pairs whose overlap has lasted longer than the persistence window.
    pub persistent_pairs: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub time: f64,
    pub node: NodeId,
    pub from: NodeState,
    pub to: NodeState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub id: NodeId,
    pub position: Position,
    pub final_state: NodeState,
    pub ledger: EnergyLedger,
    pub ever_active: bool,
    /// Became Active while another Active node was within delta.
    pub false_activation: bool,
    pub final_probe_rate: f64,
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub config: SimConfig,
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<FailureRecord>,
    pub active_trace: Vec<ActiveChange>,
    pub conflicts: Vec<ConflictSnapshot>,
    pub nodes: Vec<NodeSummary>,
    pub counters: Counters,
    /// Present only when the run was asked to trace transitions.
    pub transitions: Option<Vec<Transition>>,
    /// Probe rate and sleep duration drawn at each Sentinel sleep entry,
    /// present only when traced.
    pub sleep_trace: Option<Vec<SleepSample>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SleepSample {
    pub time: f64,
    pub node: NodeId,
    pub probe_rate: f64,
    pub sleep: f64,
}

impl MetricsLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(MetricsRecord::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.to_csv_row());
            out.push('\n');
        }
        out
    }

    pub fn final_record(&self) -> Option<&MetricsRecord> {
        self.records.last()
    }

    /// Total energy consumed by all nodes over the run.
    pub fn total_energy(&self) -> f64 {
        self.nodes.iter().map(|n| n.ledger.consumed).sum()
    }
}
