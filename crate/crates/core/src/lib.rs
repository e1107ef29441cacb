//! Freshness-aware routing for a shared-vehicle fleet.
//!
//! Edge travel times come from a digital twin whose per-edge observations
//! age between refreshes. Pickup legs can discount stale congestion so
//! vehicles re-explore roads nobody has looked at recently; passenger legs
//! always trust the latest observation. A deterministic fixed-step
//! simulator compares this against a planner that ignores freshness.

pub mod export;
pub mod fleet;
pub mod graph;
pub mod ledger;
pub mod metrics;
pub mod router;
pub mod scenario;
pub mod sim;
pub mod traffic;

pub use graph::{Edge, EdgeId, Node, NodeId, RoadGraph};
pub use ledger::TwinLedger;
pub use router::{RoutePlan, ReplanPolicy};
pub use scenario::{load_scenario, load_scenario_file, ScenarioConfig};
pub use sim::{run, run_with, Method, RunOptions, SimulationResult};
pub use traffic::{ModelParams, WeightMatrix};
