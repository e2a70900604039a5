//! Shared domain vocabulary: cluster allocation state, job descriptions and
//! the simulated clock.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Iterations a malleable job must complete after a resize before it asks
/// the resource manager again.
pub const DEFAULT_INHIBIT_WINDOW: u32 = 4;

/// Compute nodes in the reference cluster (one extra node hosts the controller).
pub const DEFAULT_COMPUTE_NODES: u32 = 31;

/// One MPI rank per core.
pub const DEFAULT_RANKS_PER_NODE: u32 = 112;

/// Job identifier, unique within a workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JobId(pub u32);

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Problem-size class of an MPDATA job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum JobType {
    Small,
    Medium,
    Large,
}

impl JobType {
    pub const ALL: [JobType; 3] = [JobType::Small, JobType::Medium, JobType::Large];

    pub fn name(self) -> &'static str {
        match self {
            JobType::Small => "Small",
            JobType::Medium => "Medium",
            JobType::Large => "Large",
        }
    }

    /// Time steps executed by one job of this type.
    pub fn iterations(self) -> u32 {
        match self {
            JobType::Small => 20,
            JobType::Medium => 60,
            JobType::Large => 100,
        }
    }

    /// Grid extents `(N, M, L)`.
    pub fn grid(self) -> (u64, u64, u64) {
        match self {
            JobType::Small => (8192, 2048, 128),
            JobType::Medium => (8192, 4096, 128),
            JobType::Large => (8192, 8192, 128),
        }
    }

    /// Values in one N-plane of the grid, `(M + 1) * (L + 1)`.
    pub fn slice_volume(self) -> u64 {
        let (_, m, l) = self.grid();
        (m + 1) * (l + 1)
    }

    /// Planes along the distributed dimension.
    pub fn slices(self) -> u64 {
        self.grid().0
    }
}

impl fmt::Display for JobType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for JobType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(JobType::Small),
            "medium" => Ok(JobType::Medium),
            "large" => Ok(JobType::Large),
            _ => Err(Error::UnknownJobType(s.to_string())),
        }
    }
}

fn default_inhibit() -> u32 {
    DEFAULT_INHIBIT_WINDOW
}

/// Static description of a submitted job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub id: JobId,
    pub jtype: JobType,
    pub iterations: u32,
    pub min_nodes: u32,
    pub max_nodes: u32,
    pub malleable: bool,
    pub submit_time: f64,
    /// Run-level setting, not part of the workload file.
    #[serde(skip, default = "default_inhibit")]
    pub inhibit_window: u32,
}

impl JobSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Error::InvalidJob {
            job: self.id,
            field,
            reason,
        };
        if self.min_nodes < 1 {
            return Err(bad("min_nodes", "must be at least 1".into()));
        }
        if self.min_nodes > self.max_nodes {
            return Err(bad(
                "max_nodes",
                format!("{} is below min_nodes {}", self.max_nodes, self.min_nodes),
            ));
        }
        if self.iterations < 1 {
            return Err(bad("iterations", "must be at least 1".into()));
        }
        if !self.submit_time.is_finite() || self.submit_time < 0.0 {
            return Err(bad(
                "submit_time",
                format!("{} is not a non-negative time", self.submit_time),
            ));
        }
        Ok(())
    }

    /// Node count the job needs before it can start.
    pub fn start_size(&self) -> u32 {
        self.min_nodes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JobPhase {
    Pending,
    Running,
    Resizing,
    Done,
}

/// Mutable lifecycle record of one job inside the engine.
#[derive(Debug, Clone, PartialEq)]
pub struct JobState {
    pub spec: JobSpec,
    pub phase: JobPhase,
    pub current_nodes: u32,
    /// Node count at job start; anchors the "original ranks" of strategy selection.
    pub start_nodes: u32,
    pub iterations_done: u32,
    pub inhibit_remaining: u32,
    pub pending_resize: Option<crate::reconfig::ReconfigPlan>,
    pub start_time: Option<f64>,
    pub end_time: Option<f64>,
}

impl JobState {
    pub fn new(spec: JobSpec) -> Self {
        Self {
            spec,
            phase: JobPhase::Pending,
            current_nodes: 0,
            start_nodes: 0,
            iterations_done: 0,
            inhibit_remaining: 0,
            pending_resize: None,
            start_time: None,
            end_time: None,
        }
    }

    pub fn id(&self) -> JobId {
        self.spec.id
    }

    pub fn is_active(&self) -> bool {
        matches!(self.phase, JobPhase::Running | JobPhase::Resizing)
    }

    pub fn wait_time(&self) -> Option<f64> {
        self.start_time.map(|s| s - self.spec.submit_time)
    }

    pub fn run_time(&self) -> Option<f64> {
        Some(self.end_time? - self.start_time?)
    }
}

/// Whole-node allocation map of the cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterState {
    total_nodes: u32,
    ranks_per_node: u32,
    allocations: BTreeMap<JobId, u32>,
}

impl ClusterState {
    pub fn new(total_nodes: u32, ranks_per_node: u32) -> Result<Self> {
        if total_nodes == 0 || ranks_per_node == 0 {
            return Err(Error::InvalidCluster {
                total_nodes,
                ranks_per_node,
            });
        }
        Ok(Self {
            total_nodes,
            ranks_per_node,
            allocations: BTreeMap::new(),
        })
    }

    pub fn total_nodes(&self) -> u32 {
        self.total_nodes
    }

    pub fn ranks_per_node(&self) -> u32 {
        self.ranks_per_node
    }

    pub fn allocations(&self) -> &BTreeMap<JobId, u32> {
        &self.allocations
    }

    pub fn allocated_nodes(&self) -> u32 {
        self.allocations.values().sum()
    }

    pub fn idle_nodes(&self) -> u32 {
        self.total_nodes - self.allocated_nodes()
    }

    pub fn nodes_of(&self, job: JobId) -> Option<u32> {
        self.allocations.get(&job).copied()
    }

    pub fn ranks(&self, nodes: u32) -> u32 {
        nodes * self.ranks_per_node
    }

    /// Sets `job` to exactly `nodes` nodes; zero releases the allocation.
    ///
    /// A job absent from the map may only be created with a non-zero size.
    pub fn apply_allocation(&mut self, job: JobId, nodes: u32) -> Result<()> {
        let current = self.allocations.get(&job).copied();
        if current.is_none() && nodes == 0 {
            return Err(Error::UnknownJob(job));
        }
        let held = current.unwrap_or(0);
        if nodes > held {
            let growth = nodes - held;
            let idle = self.idle_nodes();
            if growth > idle {
                return Err(Error::InfeasibleAllocation {
                    job,
                    requested: nodes,
                    idle,
                });
            }
        }
        if nodes == 0 {
            self.allocations.remove(&job);
        } else {
            self.allocations.insert(job, nodes);
        }
        Ok(())
    }

    /// Like [`apply_allocation`](Self::apply_allocation) but fails on a job that holds no nodes.
    pub fn resize(&mut self, job: JobId, nodes: u32) -> Result<()> {
        if !self.allocations.contains_key(&job) {
            return Err(Error::UnknownJob(job));
        }
        self.apply_allocation(job, nodes)
    }
}

/// Monotone simulated time in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd)]
pub struct SimClock {
    now: f64,
}

impl SimClock {
    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        if t < self.now || !t.is_finite() {
            return Err(Error::TimeReversal {
                now: self.now,
                requested: t,
            });
        }
        self.now = t;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cluster_with_a(nodes: u32) -> ClusterState {
        let mut c = ClusterState::new(31, 112).unwrap();
        c.apply_allocation(JobId(0), nodes).unwrap();
        c
    }

    #[test]
    fn expand_within_idle() {
        let mut c = cluster_with_a(4);
        c.apply_allocation(JobId(1), 17).unwrap();
        assert_eq!(c.idle_nodes(), 10);
        c.apply_allocation(JobId(0), 6).unwrap();
        assert_eq!(c.nodes_of(JobId(0)), Some(6));
        assert_eq!(c.idle_nodes(), 8);
    }

    #[test]
    fn expand_beyond_total_is_infeasible() {
        let mut c = cluster_with_a(4);
        let err = c.apply_allocation(JobId(0), 40).unwrap_err();
        assert!(matches!(err, Error::InfeasibleAllocation { .. }));
        assert_eq!(c.nodes_of(JobId(0)), Some(4));
    }

    #[test]
    fn release_returns_nodes() {
        let mut c = cluster_with_a(4);
        let idle = c.idle_nodes();
        c.apply_allocation(JobId(0), 0).unwrap();
        assert_eq!(c.nodes_of(JobId(0)), None);
        assert_eq!(c.idle_nodes(), idle + 4);
    }

    #[test]
    fn unknown_job_errors() {
        let mut c = cluster_with_a(4);
        assert!(matches!(
            c.apply_allocation(JobId(9), 0),
            Err(Error::UnknownJob(JobId(9)))
        ));
        assert!(matches!(c.resize(JobId(9), 2), Err(Error::UnknownJob(_))));
    }

    #[test]
    fn clock_rejects_reversal() {
        let mut clock = SimClock::default();
        clock.advance_to(5.0).unwrap();
        assert!(clock.advance_to(4.0).is_err());
        clock.advance_to(5.0).unwrap();
        assert_eq!(clock.now(), 5.0);
    }

    #[test]
    fn job_spec_validation() {
        let mut spec = JobSpec {
            id: JobId(1),
            jtype: JobType::Small,
            iterations: 20,
            min_nodes: 1,
            max_nodes: 8,
            malleable: true,
            submit_time: 0.0,
            inhibit_window: 4,
        };
        spec.validate().unwrap();
        spec.min_nodes = 9;
        assert!(spec.validate().is_err());
        spec.min_nodes = 1;
        spec.submit_time = -1.0;
        assert!(spec.validate().is_err());
    }

    proptest! {
        #[test]
        fn node_conservation(ops in proptest::collection::vec((0u32..6, 0u32..40), 1..200)) {
            let mut c = ClusterState::new(31, 112).unwrap();
            for (job, nodes) in ops {
                let _ = c.apply_allocation(JobId(job), nodes);
                prop_assert_eq!(c.allocated_nodes() + c.idle_nodes(), 31);
                prop_assert!(c.allocations().values().all(|&n| n >= 1));
                prop_assert!(c.allocated_nodes() <= 31);
            }
        }
    }
}
