//! Deterministic discrete-event simulation of replicated objects.

pub mod config;
pub mod explore;
pub mod metrics;
pub mod replica;
pub mod runner;
pub mod simulation;
pub mod verify;
pub mod workload;

pub use config::{Crash, Delivery, EngineKind, SimConfig};
pub use metrics::{MetricsReport, SampleRow};
pub use replica::SimReplica;
pub use runner::{run_simulation, run_simulation_with, RunOptions};
pub use simulation::Simulation;
pub use workload::{generate_workload, SimDataType, WorkloadOp};
