//! Post-processing over completed runs: area coverage, hole recovery,
//! control overhead and energy comparison.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;
use crate::metrics::{Counters, MetricsLog};
use crate::num::Scalar;
use crate::protocol::Position;
use crate::sim::config::{EnergyModel, ProtocolKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("invalid coverage grid: {0}")]
    Grid(String),
    #[error("runs are not comparable: {0}")]
    Mismatch(String),
}

/// Regular sampling grid over the field; a cell counts as covered when its
/// center is within sensing range of an Active node.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid<T> {
    width: T,
    height: T,
    resolution: T,
    nx: usize,
    ny: usize,
    cells: Vec<bool>,
}

impl<T: Scalar> CoverageGrid<T> {
    pub fn new(width: T, height: T, resolution: T) -> Result<Self, AnalysisError> {
        if !(resolution > T::zero()) || !(width > T::zero()) || !(height > T::zero()) {
            return Err(AnalysisError::Grid(format!(
                "width {width}, height {height} and resolution {resolution} must be positive"
            )));
        }
        let nx = (width / resolution).ceil().to_usize().unwrap_or(0);
        let ny = (height / resolution).ceil().to_usize().unwrap_or(0);
        Ok(Self { width, height, resolution, nx, ny, cells: vec![false; nx * ny] })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn resolution(&self) -> T {
        self.resolution
    }

    pub fn extent(&self) -> (T, T) {
        (self.width, self.height)
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Point<T> {
        let half = T::lit(0.5);
        Point::planar(
            (T::from(ix).unwrap() + half) * self.resolution,
            (T::from(iy).unwrap() + half) * self.resolution,
        )
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    /// Recomputes the covered flags for the given Active positions.
    pub fn mark(&mut self, active: &[Point<T>], r_s: T) {
        self.cells.iter_mut().for_each(|c| *c = false);
        if self.nx == 0 || self.ny == 0 {
            return;
        }
        let r_sq = r_s * r_s;
        let half = T::lit(0.5);
        let index_range = |lo: T, hi: T, n: usize| -> (usize, usize) {
            let a = (lo / self.resolution - half).floor().max(T::zero());
            let b = (hi / self.resolution - half).ceil();
            let a = a.to_usize().unwrap_or(0).min(n);
            let b = if b < T::zero() { 0 } else { b.to_usize().unwrap_or(n).saturating_add(1).min(n) };
            (a, b)
        };
        for p in active {
            let (x0, x1) = index_range(p.x - r_s, p.x + r_s, self.nx);
            let (y0, y1) = index_range(p.y - r_s, p.y + r_s, self.ny);
            for iy in y0..y1 {
                for ix in x0..x1 {
                    let idx = iy * self.nx + ix;
                    if !self.cells[idx] && self.cell_center(ix, iy).distance_sq(p) <= r_sq {
                        self.cells[idx] = true;
                    }
                }
            }
        }
    }

    pub fn covered_fraction(&self) -> T {
        if self.cells.is_empty() {
            return T::zero();
        }
        let covered = self.cells.iter().filter(|c| **c).count();
        T::from(covered).unwrap() / T::from(self.cells.len()).unwrap()
    }
}

/// Fraction of grid cells covered by the Active set.
pub fn coverage_fraction<T: Scalar>(active: &[Point<T>], r_s: T, grid: &mut CoverageGrid<T>) -> T {
    grid.mark(active, r_s);
    grid.covered_fraction()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Recovery {
    Recovered(f64),
    /// The hole was still open when the run ended.
    Unrecovered,
}

impl Recovery {
    pub fn latency(self) -> Option<f64> {
        match self {
            Recovery::Recovered(t) => Some(t),
            Recovery::Unrecovered => None,
        }
    }
}

/// Time from `failure_time` until some Active node lies within `delta` of
/// `failed_position`.
pub fn recovery_latency(log: &MetricsLog, failure_time: f64, failed_position: &Position, delta: f64) -> Recovery {
    let within = |p: &Position| p.distance(failed_position) <= delta;
    let mut active: BTreeMap<u32, Position> = BTreeMap::new();
    let mut later = log.active_trace.iter().peekable();
    while let Some(c) = later.next_if(|c| c.time <= failure_time) {
        if c.active {
            active.insert(c.node, c.position);
        } else {
            active.remove(&c.node);
        }
    }
    if active.values().any(within) {
        return Recovery::Recovered(0.0);
    }
    later
        .find(|c| c.active && within(&c.position))
        .map_or(Recovery::Unrecovered, |c| Recovery::Recovered(c.time - failure_time))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverheadRow {
    pub time: f64,
    pub probes_sent: u64,
    pub probes_received: u64,
    pub replies_sent: u64,
    pub replies_received: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub rows: Vec<OverheadRow>,
    /// Every reply frame counted as received was actually sent.
    pub reply_conservation: bool,
}

impl OverheadReport {
    pub fn sent_vs_received_requests(&self) -> Vec<(u64, u64)> {
        self.rows.iter().map(|r| (r.probes_sent, r.probes_received)).collect()
    }

    pub fn received_requests_vs_replies(&self) -> Vec<(u64, u64)> {
        self.rows.iter().map(|r| (r.probes_received, r.replies_received)).collect()
    }
}

pub fn overhead_report(log: &MetricsLog) -> OverheadReport {
    let rows = log
        .records
        .iter()
        .map(|r| OverheadRow {
            time: r.time,
            probes_sent: r.probes_sent,
            probes_received: r.probes_received,
            replies_sent: r.replies_sent,
            replies_received: r.replies_received,
        })
        .collect();
    let c = &log.counters;
    OverheadReport { rows, reply_conservation: c.reply_frames_delivered <= c.replies_sent }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub n_nodes: u32,
    pub beta: f64,
    pub duration: f64,
    pub field_width: f64,
    pub field_height: f64,
    pub energy_model: EnergyModel,
    pub total_energy: f64,
    pub avg_energy_per_node: f64,
    pub energy_ratio_vs_baseline: Option<f64>,
    pub mean_coverage: f64,
    pub mean_active_count: f64,
    pub false_activation_fraction: f64,
    pub ever_active_fraction: f64,
    pub recovery_latencies: Vec<Recovery>,
    pub counters: Counters,
}

impl SummaryReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

pub fn summarize(log: &MetricsLog) -> SummaryReport {
    let cfg = &log.config;
    let n = f64::from(cfg.n_nodes);
    let total = log.total_energy();
    let per_node = |count: usize| if cfg.n_nodes == 0 { 0.0 } else { count as f64 / n };
    let mean = |f: &dyn Fn(&crate::metrics::MetricsRecord) -> f64| {
        if log.records.is_empty() {
            0.0
        } else {
            log.records.iter().map(f).sum::<f64>() / log.records.len() as f64
        }
    };
    let recovery_latencies = log
        .failures
        .iter()
        .filter_map(|f| f.position.map(|p| recovery_latency(log, f.time, &p, cfg.delta)))
        .collect();
    SummaryReport {
        protocol: cfg.protocol,
        seed: cfg.seed,
        n_nodes: cfg.n_nodes,
        beta: cfg.beta,
        duration: cfg.duration,
        field_width: cfg.field_width,
        field_height: cfg.field_height,
        energy_model: cfg.energy,
        total_energy: total,
        avg_energy_per_node: if cfg.n_nodes == 0 { 0.0 } else { total / n },
        energy_ratio_vs_baseline: None,
        mean_coverage: mean(&|r| r.coverage_fraction),
        mean_active_count: mean(&|r| f64::from(r.active_count)),
        false_activation_fraction: per_node(log.nodes.iter().filter(|s| s.false_activation).count()),
        ever_active_fraction: per_node(log.nodes.iter().filter(|s| s.ever_active).count()),
        recovery_latencies,
        counters: log.counters,
    }
}

/// Relative energy saving of `sentinel` over `baseline`:
/// `(baseline - sentinel) / baseline`. Negative when the sentinel run used more.
pub fn compare_runs(sentinel: &SummaryReport, baseline: &SummaryReport) -> Result<f64, AnalysisError> {
    let checks = [
        (sentinel.seed == baseline.seed, "seed"),
        (sentinel.n_nodes == baseline.n_nodes, "n_nodes"),
        (sentinel.duration == baseline.duration, "duration"),
        (sentinel.field_width == baseline.field_width && sentinel.field_height == baseline.field_height, "field"),
        (sentinel.energy_model == baseline.energy_model, "energy model"),
    ];
    if let Some((_, what)) = checks.iter().find(|(ok, _)| !ok) {
        return Err(AnalysisError::Mismatch(format!("{what} differs")));
    }
    if baseline.avg_energy_per_node == 0.0 {
        return Err(AnalysisError::Mismatch("baseline consumed no energy".into()));
    }
    Ok((baseline.avg_energy_per_node - sentinel.avg_energy_per_node) / baseline.avg_energy_per_node)
}
