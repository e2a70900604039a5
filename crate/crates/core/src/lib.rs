//! Discrete-event simulation of HPC clusters running static and malleable
//! MPI-style job workloads.
//!
//! The crate models the resource manager's resize policy, the
//! reconfiguration engine's strategy selection and costs, block data
//! redistribution, and the workload-level metrics (makespan, utilization,
//! resize overheads) used to compare static and dynamic executions.

pub mod calibration;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod policy;
pub mod reconfig;
pub mod scalability;
pub mod workload;

pub use engine::{run, EngineConfig, Simulation, SimulationTrace};
pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentResult, RunConfig, RunOutput, Variant};
pub use metrics::{aggregate, compute, AggregateReport, RunReport};
pub use model::{ClusterState, JobId, JobSpec, JobState, JobType};
pub use policy::{PolicyConfig, QueueState, ReconfigDecision};
pub use reconfig::{ConfigRule, CostParams, MamConfig, ReconfigPlan, SpawnMethod};
pub use scalability::{ProfileSet, ScalabilityProfile};
pub use workload::{Workload, WorkloadSpec};
