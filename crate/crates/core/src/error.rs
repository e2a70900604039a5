use std::path::PathBuf;

use thiserror::Error;

use crate::model::{JobId, JobType};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("job {job} cannot grow to {requested} nodes: only {idle} idle")]
    InfeasibleAllocation {
        job: JobId,
        requested: u32,
        idle: u32,
    },

    #[error("unknown job {0}")]
    UnknownJob(JobId),

    #[error("invalid cluster: {total_nodes} nodes with {ranks_per_node} ranks per node")]
    InvalidCluster {
        total_nodes: u32,
        ranks_per_node: u32,
    },

    #[error("job {job}: invalid {field}: {reason}")]
    InvalidJob {
        job: JobId,
        field: &'static str,
        reason: String,
    },

    #[error("unknown job type `{0}`")]
    UnknownJobType(String),

    #[error("simulated time cannot move from {now} back to {requested}")]
    TimeReversal { now: f64, requested: f64 },

    #[error("{jtype} needs at least {min} nodes, got {nodes}")]
    BelowMinimum {
        jtype: JobType,
        nodes: u32,
        min: u32,
    },

    #[error("invalid scalability profile for {jtype}: {reason}")]
    InvalidProfile { jtype: JobType, reason: String },

    #[error("no scalability profile for {0}")]
    MissingProfile(JobType),

    #[error("series has no spread (min == max == {0})")]
    DegenerateSeries(f64),

    #[error("invalid workload spec: {0}")]
    InvalidSpec(String),

    #[error("malformed file {path}: {detail}")]
    MalformedFile { path: PathBuf, detail: String },

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("job {0} is not eligible for a reconfiguration decision")]
    NotEligible(JobId),

    #[error("rank {rank} is outside a group of {size}")]
    InvalidRank { rank: u64, size: u64 },

    #[error("dimension of {n_dim} cannot be split over {size} ranks")]
    UndersizedDimension { n_dim: u64, size: u64 },

    #[error("simulation stalled at t={time} with {remaining} unfinished jobs")]
    StalledSimulation { time: f64, remaining: usize },

    #[error("event queue is empty")]
    EmptyQueue,

    #[error("trace is incomplete: job {0} never finished")]
    IncompleteTrace(JobId),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::MalformedFile {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
