//! Scenario-driven simulation: configuration, the event loop, traces,
//! metrics and trace audits.

pub mod audit;
pub mod engine;
pub mod fuzz;
pub mod metrics;
pub mod scenario;
pub mod trace;

pub use engine::{run_simulation, SimError, SimOutput};
pub use metrics::{compute_metrics, render_table, MetricsReport};
pub use scenario::{load_scenario, ScenarioConfig, ScenarioError};
pub use trace::Trace;
