//! Deterministic scenario simulation and behavioral scoring.

pub mod bench;
pub mod generate;
pub mod metrics;
pub mod report;
pub mod scenario;
pub mod sim;

pub use bench::{bench, evaluate, load_dir, BenchReport, HarnessError};
pub use generate::{generate, GenOptions, Mix, Timing};
pub use metrics::{compute_metrics, MetricsReport};
pub use report::{emit_report, ReportFormat};
pub use scenario::{Expected, Scenario, ScenarioEvent};
pub use sim::{simulate, SimError};
