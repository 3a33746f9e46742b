//! Cluster-based routing simulator for mobile ad hoc networks.

pub mod baselines;
pub mod batch;
pub mod chra;
pub mod clustering;
pub mod config;
pub mod csa;
pub mod engine;
pub mod metrics;
pub mod mobility;
pub mod network;
pub mod packet;
pub mod rng;
pub mod routing;
pub mod sim;
pub mod traffic;

pub use config::{Protocol, ScenarioConfig};
pub use metrics::{RunMetrics, Summary};
pub use network::{NodeId, Point, Role};
pub use sim::{run_scenario, RunOutput, Scenario, Simulation};
