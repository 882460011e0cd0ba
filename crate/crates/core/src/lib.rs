//! Discrete-event simulator for a slot-based beaconing protocol in
//! micro-robot platoons patrolling a vascular route.

pub mod channel;
pub mod engine;
pub mod metrics;
pub mod mission;
pub mod protocol;
pub mod replay;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod sweep;
pub mod time;
pub mod trace;

pub use metrics::MetricsReport;
pub use scenario::{Scenario, ScenarioError};
pub use sim::{run, RunOutput, Runner};
