//! Discrete-event simulation of multi-stage cargo screening pipelines.
//!
//! Lorries arrive at one or more sources, pass through service sheds where
//! sensors screen them for clandestines, are routed probabilistically or to
//! the shortest queue, and may park at a Berth where mobile squads check
//! them before departure. [`oracle`] computes the exact detection
//! probability of acyclic networks for validation and [`analysis`] turns
//! replications into estimates and CSV.

pub mod analysis;
pub mod berth;
pub mod des;
pub mod dist;
pub mod error;
pub mod network;
pub mod oracle;
pub mod screening;
pub mod sim;

pub use analysis::{run_replications, summarize, Metric, ReplicationSet, RunCounters};
pub use des::{make_stream, Lorry, Minutes, RandomStream, Side};
pub use error::ModelError;
pub use network::{load_scenario, Model, Scenario, ScenarioError};
pub use oracle::{analytic_detection, reduce, AnalyticNet, OracleError};
pub use screening::{DetectionProfile, Drm, DrmKey, RateTarget};
pub use sim::{run_until, Simulation};
