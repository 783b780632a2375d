//! Sentinel sleep scheduling for dense wireless sensor networks.
//!
//! Reserve nodes sleep for Weibull-distributed periods whose rate follows the
//! Weibull hazard of the network's age; a node that wakes and hears no Active
//! neighbor within the distance threshold stands guard itself, and Active
//! nodes that find themselves too close resolve the conflict by age. The crate
//! bundles the scheduling math, the node state machine, a deterministic
//! discrete-event simulator with a unit-disk collision channel, a PEAS
//! baseline, analysis helpers and an experiment runner.
//!
//! The scheduling math, geometry and coverage grid are generic over the
//! floating-point type; the aliases below fix it for the common cases.

pub mod analysis;
pub mod experiment;
pub mod geometry;
pub mod metrics;
pub mod num;
pub mod peas;
pub mod protocol;
pub mod sched;
pub mod sim;

pub use num::Scalar;

pub type WeibullParams = sched::WeibullParams<f64>;
pub type WeibullParamsF32 = sched::WeibullParams<f32>;
pub type ProbeRate = sched::ProbeRate<f64>;
pub type ProbeRateF32 = sched::ProbeRate<f32>;
pub type SleepBounds = sched::SleepBounds<f64>;
pub type RateBounds = sched::RateBounds<f64>;
pub type Point = geometry::Point<f64>;
pub type PointF32 = geometry::Point<f32>;
pub type CoverageGrid = analysis::CoverageGrid<f64>;

pub use analysis::{compare_runs, coverage_fraction, overhead_report, recovery_latency, summarize, SummaryReport};
pub use metrics::{MetricsLog, MetricsRecord};
pub use protocol::{NodeState, Scheme, SensorNode};
pub use sim::{deploy, simulate, SimConfig, World};
