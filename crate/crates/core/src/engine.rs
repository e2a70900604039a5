//! Deterministic discrete-event core.
//!
//! Jobs iterate with durations taken from their scalability profile. At the
//! end of every iteration a malleable job that is neither inhibited nor
//! already resizing asks the policy for a new size. A synchronous resize
//! blocks the job for its whole duration; an asynchronous one lets the job
//! keep iterating at a reduced rate and is applied at the first iteration
//! boundary after it finishes. Growth is allocated when the resize is
//! decided, released nodes return to the pool when it completes.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterState, JobId, JobPhase, JobState, JobType, SimClock};
use crate::policy::{self, PolicyConfig, QueueState};
use crate::reconfig::{self, ConfigRule, CostParams, ReconfigPlan};
use crate::scalability::ProfileSet;
use crate::workload::Workload;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Arrival,
    IterationEnd,
    ResizeDone,
    JobDone,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub job: JobId,
    pub seq: u64,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Kinds of lines in the exported trace log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RecordKind {
    Arrival,
    Start,
    IterationEnd,
    ResizeStart,
    ResizeDone,
    JobDone,
}

impl RecordKind {
    pub fn name(self) -> &'static str {
        match self {
            RecordKind::Arrival => "arrival",
            RecordKind::Start => "start",
            RecordKind::IterationEnd => "iteration_end",
            RecordKind::ResizeStart => "resize_start",
            RecordKind::ResizeDone => "resize_done",
            RecordKind::JobDone => "job_done",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub kind: RecordKind,
    pub job: JobId,
    pub nodes_before: u32,
    pub nodes_after: u32,
}

/// Allocated nodes right after a change, with the per-job breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSnapshot {
    pub time: f64,
    pub allocated: u32,
    pub per_job: Vec<(JobId, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResizeEpisode {
    pub job: JobId,
    pub t_start: f64,
    pub t_end: f64,
    pub plan: ReconfigPlan,
    /// Iterations completed while the resize ran in the background.
    pub iterations_overlapped: u32,
    pub released_for: Option<JobId>,
}

impl ResizeEpisode {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobRecord {
    pub id: JobId,
    pub jtype: JobType,
    pub malleable: bool,
    pub submit: f64,
    pub start: Option<f64>,
    pub end: Option<f64>,
    pub start_nodes: u32,
    pub iterations: u32,
    /// Integral of the job's allocation over time.
    pub node_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub total_nodes: u32,
    pub records: Vec<TraceRecord>,
    pub allocation_snapshots: Vec<AllocationSnapshot>,
    pub resize_episodes: Vec<ResizeEpisode>,
    pub jobs: Vec<JobRecord>,
}

impl SimulationTrace {
    /// Line-delimited `time,kind,job,nodes_before,nodes_after` records.
    pub fn to_log(&self) -> String {
        let mut out = String::from("time,kind,job,nodes_before,nodes_after\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.time,
                r.kind.name(),
                r.job,
                r.nodes_before,
                r.nodes_after
            )
            .expect("writing to a String cannot fail");
        }
        out
    }

    pub fn iteration_ends(&self, job: JobId) -> impl Iterator<Item = &TraceRecord> {
        self.records
            .iter()
            .filter(move |r| r.job == job && r.kind == RecordKind::IterationEnd)
    }
}

/// Cluster shape and the knobs that shape one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub total_nodes: u32,
    pub ranks_per_node: u32,
    pub policy: PolicyConfig,
    pub reconfig: ConfigRule,
    pub cost: CostParams,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            total_nodes: crate::model::DEFAULT_COMPUTE_NODES,
            ranks_per_node: crate::model::DEFAULT_RANKS_PER_NODE,
            policy: PolicyConfig::default(),
            reconfig: ConfigRule::Auto {
                asynchronous: false,
            },
            cost: CostParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
struct OpenEpisode {
    t_start: f64,
    /// Background completion time; `None` for blocking resizes.
    deadline: Option<f64>,
    overlapped: u32,
    released_for: Option<JobId>,
}

/// Single-threaded event loop over one workload.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: EngineConfig,
    profiles: ProfileSet,
    clock: SimClock,
    cluster: ClusterState,
    queue: QueueState,
    events: BinaryHeap<Reverse<Event>>,
    next_seq: u64,
    jobs: BTreeMap<JobId, JobState>,
    open: BTreeMap<JobId, OpenEpisode>,
    /// Last time each job's node-seconds were brought up to date.
    accounted_at: BTreeMap<JobId, f64>,
    record_index: BTreeMap<JobId, usize>,
    trace: SimulationTrace,
}

impl Simulation {
    pub fn new(workload: &Workload, config: EngineConfig, profiles: ProfileSet) -> Result<Self> {
        config.cost.validate()?;
        let cluster = ClusterState::new(config.total_nodes, config.ranks_per_node)?;
        let mut jobs = BTreeMap::new();
        let mut records = Vec::with_capacity(workload.len());
        for spec in workload.jobs() {
            let profile = profiles.get(spec.jtype)?;
            if spec.min_nodes > config.total_nodes {
                return Err(Error::InvalidConfig(format!(
                    "job {} needs {} nodes but the cluster has {}",
                    spec.id, spec.min_nodes, config.total_nodes
                )));
            }
            if spec.min_nodes < profile.base_nodes() {
                return Err(Error::BelowMinimum {
                    jtype: spec.jtype,
                    nodes: spec.min_nodes,
                    min: profile.base_nodes(),
                });
            }
            records.push(JobRecord {
                id: spec.id,
                jtype: spec.jtype,
                malleable: spec.malleable,
                submit: spec.submit_time,
                start: None,
                end: None,
                start_nodes: 0,
                iterations: 0,
                node_seconds: 0.0,
            });
            jobs.insert(spec.id, JobState::new(spec.clone()));
        }
        let mut sim = Self {
            trace: SimulationTrace {
                total_nodes: config.total_nodes,
                records: Vec::new(),
                allocation_snapshots: vec![AllocationSnapshot {
                    time: 0.0,
                    allocated: 0,
                    per_job: Vec::new(),
                }],
                resize_episodes: Vec::new(),
                jobs: records,
            },
            config,
            profiles,
            clock: SimClock::default(),
            cluster,
            queue: QueueState::default(),
            events: BinaryHeap::new(),
            next_seq: 0,
            jobs,
            open: BTreeMap::new(),
            accounted_at: BTreeMap::new(),
            record_index: workload
                .jobs()
                .iter()
                .enumerate()
                .map(|(i, j)| (j.id, i))
                .collect(),
        };
        for spec in workload.jobs() {
            sim.schedule(spec.submit_time, EventKind::Arrival, spec.id);
        }
        Ok(sim)
    }

    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    pub fn cluster(&self) -> &ClusterState {
        &self.cluster
    }

    pub fn job(&self, id: JobId) -> Option<&JobState> {
        self.jobs.get(&id)
    }

    pub fn trace(&self) -> &SimulationTrace {
        &self.trace
    }

    pub fn pending_events(&self) -> usize {
        self.events.len()
    }

    pub fn is_finished(&self) -> bool {
        self.jobs.values().all(|j| j.phase == JobPhase::Done)
    }

    /// Processes exactly one event and returns it.
    pub fn step(&mut self) -> Result<Event> {
        let Reverse(event) = self.events.pop().ok_or(Error::EmptyQueue)?;
        self.clock.advance_to(event.time)?;
        match event.kind {
            EventKind::Arrival => self.on_arrival(event.job)?,
            EventKind::IterationEnd => self.on_iteration_end(event.job)?,
            EventKind::ResizeDone => self.on_resize_done(event.job)?,
            EventKind::JobDone => self.on_job_done(event.job)?,
        }
        Ok(event)
    }

    /// Runs to quiescence.
    pub fn run_to_end(mut self) -> Result<SimulationTrace> {
        while !self.events.is_empty() {
            self.step()?;
        }
        self.finish()
    }

    /// Consumes a drained simulation and returns its trace.
    pub fn finish(self) -> Result<SimulationTrace> {
        let remaining = self
            .jobs
            .values()
            .filter(|j| j.phase != JobPhase::Done)
            .count();
        if remaining > 0 || !self.events.is_empty() {
            return Err(Error::StalledSimulation {
                time: self.clock.now(),
                remaining,
            });
        }
        Ok(self.trace)
    }

    fn schedule(&mut self, time: f64, kind: EventKind, job: JobId) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.events.push(Reverse(Event {
            time,
            kind,
            job,
            seq,
        }));
    }

    fn record(&mut self, kind: RecordKind, job: JobId, before: u32, after: u32) {
        self.trace.records.push(TraceRecord {
            time: self.clock.now(),
            kind,
            job,
            nodes_before: before,
            nodes_after: after,
        });
    }

    fn job_mut(&mut self, id: JobId) -> Result<&mut JobState> {
        self.jobs.get_mut(&id).ok_or(Error::UnknownJob(id))
    }

    fn job_record_mut(&mut self, id: JobId) -> &mut JobRecord {
        let idx = self.record_index[&id];
        &mut self.trace.jobs[idx]
    }

    /// Brings the job's node-seconds up to now before its allocation changes.
    fn account(&mut self, id: JobId) {
        let now = self.clock.now();
        let nodes = self.cluster.nodes_of(id).unwrap_or(0);
        if let Some(since) = self.accounted_at.insert(id, now) {
            let delta = f64::from(nodes) * (now - since);
            self.job_record_mut(id).node_seconds += delta;
        }
    }

    fn set_allocation(&mut self, id: JobId, nodes: u32) -> Result<()> {
        self.account(id);
        self.cluster.apply_allocation(id, nodes)?;
        let snapshot = AllocationSnapshot {
            time: self.clock.now(),
            allocated: self.cluster.allocated_nodes(),
            per_job: self
                .cluster
                .allocations()
                .iter()
                .map(|(&k, &v)| (k, v))
                .collect(),
        };
        match self.trace.allocation_snapshots.last_mut() {
            Some(last) if last.time == snapshot.time => *last = snapshot,
            _ => self.trace.allocation_snapshots.push(snapshot),
        }
        Ok(())
    }

    fn iteration_time(&self, job: &JobState) -> Result<f64> {
        let base = self
            .profiles
            .get(job.spec.jtype)?
            .iteration_time(job.current_nodes)?;
        let background = self
            .open
            .get(&job.id())
            .is_some_and(|ep| ep.deadline.is_some());
        let dilation = match &job.pending_resize {
            Some(plan) if background => plan.overlap_speedup,
            _ => 1.0,
        };
        Ok(base / dilation)
    }

    fn schedule_next_iteration(&mut self, id: JobId) -> Result<()> {
        let job = &self.jobs[&id];
        let dt = self.iteration_time(job)?;
        let at = self.clock.now() + dt;
        self.schedule(at, EventKind::IterationEnd, id);
        Ok(())
    }

    fn on_arrival(&mut self, id: JobId) -> Result<()> {
        let spec = self
            .jobs
            .get(&id)
            .ok_or(Error::UnknownJob(id))?
            .spec
            .clone();
        self.record(RecordKind::Arrival, id, 0, 0);
        self.queue.push(spec);
        self.start_jobs()
    }

    fn start_jobs(&mut self) -> Result<()> {
        let now = self.clock.now();
        let starts = policy::try_start_jobs(&self.queue, &self.cluster, now, &self.config.policy);
        for start in starts {
            self.queue.remove(start.job);
            self.set_allocation(start.job, start.nodes)?;
            let job = self.job_mut(start.job)?;
            job.phase = JobPhase::Running;
            job.current_nodes = start.nodes;
            job.start_nodes = start.nodes;
            job.inhibit_remaining = job.spec.inhibit_window;
            job.start_time = Some(now);
            let record = self.job_record_mut(start.job);
            record.start = Some(now);
            record.start_nodes = start.nodes;
            self.record(RecordKind::Start, start.job, 0, start.nodes);
            self.schedule_next_iteration(start.job)?;
        }
        Ok(())
    }

    fn on_iteration_end(&mut self, id: JobId) -> Result<()> {
        let now = self.clock.now();
        let nodes = {
            let job = self.job_mut(id)?;
            job.iterations_done += 1;
            job.current_nodes
        };
        self.job_record_mut(id).iterations += 1;
        self.record(RecordKind::IterationEnd, id, nodes, nodes);

        // A background resize in flight, or one that just landed on this
        // boundary, skips both the inhibit countdown and the policy.
        let mut skip_policy = false;
        if let Some(ep) = self.open.get_mut(&id) {
            let deadline = ep
                .deadline
                .expect("blocking resizes never see iteration ends");
            ep.overlapped += 1;
            skip_policy = true;
            if now >= deadline {
                self.complete_resize(id)?;
            }
        }

        let job = &self.jobs[&id];
        if job.iterations_done >= job.spec.iterations {
            let done_at = self
                .open
                .get(&id)
                .and_then(|ep| ep.deadline)
                .map_or(now, |d| d.max(now));
            self.schedule(done_at, EventKind::JobDone, id);
            return Ok(());
        }
        if skip_policy {
            return self.schedule_next_iteration(id);
        }
        if job.inhibit_remaining > 0 {
            self.job_mut(id)?.inhibit_remaining -= 1;
            return self.schedule_next_iteration(id);
        }
        if job.spec.malleable && job.phase == JobPhase::Running {
            let decision =
                policy::select_natural(job, &self.queue, &self.cluster, &self.config.policy)?;
            if decision.is_change() {
                return self.begin_resize(id, decision);
            }
        }
        self.schedule_next_iteration(id)
    }

    fn begin_resize(&mut self, id: JobId, decision: policy::ReconfigDecision) -> Result<()> {
        let now = self.clock.now();
        let job = &self.jobs[&id];
        let from = job.current_nodes;
        let to = decision.resultant_nodes;
        let plan = reconfig::plan_resize(
            job.spec.jtype,
            from,
            to,
            job.start_nodes,
            self.config.ranks_per_node,
            &self.config.reconfig,
            &self.config.cost,
        )?;
        if to > from {
            self.set_allocation(id, to)?;
        }
        if let Some(target) = decision.released_for {
            self.queue
                .priority_boosts
                .insert(target, decision.reserved_idle);
        }
        let deadline = plan.is_async().then_some(now + plan.async_duration);
        let sync_done = now + plan.sync_duration;
        self.open.insert(
            id,
            OpenEpisode {
                t_start: now,
                deadline,
                overlapped: 0,
                released_for: decision.released_for,
            },
        );
        let job = self.job_mut(id)?;
        job.phase = JobPhase::Resizing;
        job.pending_resize = Some(plan);
        self.record(RecordKind::ResizeStart, id, from, to);
        if deadline.is_some() {
            self.schedule_next_iteration(id)
        } else {
            self.schedule(sync_done, EventKind::ResizeDone, id);
            Ok(())
        }
    }

    fn complete_resize(&mut self, id: JobId) -> Result<()> {
        let now = self.clock.now();
        let episode = self.open.remove(&id).ok_or(Error::UnknownJob(id))?;
        let plan = self
            .job_mut(id)?
            .pending_resize
            .take()
            .ok_or(Error::UnknownJob(id))?;
        let (from, to) = (plan.from_nodes, plan.to_nodes);
        if to < from {
            self.set_allocation(id, to)?;
        }
        let job = self.job_mut(id)?;
        job.current_nodes = to;
        job.phase = JobPhase::Running;
        job.inhibit_remaining = job.spec.inhibit_window;
        self.record(RecordKind::ResizeDone, id, from, to);
        self.trace.resize_episodes.push(ResizeEpisode {
            job: id,
            t_start: episode.t_start,
            t_end: now,
            plan,
            iterations_overlapped: episode.overlapped,
            released_for: episode.released_for,
        });
        if to < from {
            self.start_jobs()?;
        }
        Ok(())
    }

    fn on_resize_done(&mut self, id: JobId) -> Result<()> {
        self.complete_resize(id)?;
        self.schedule_next_iteration(id)
    }

    fn on_job_done(&mut self, id: JobId) -> Result<()> {
        let now = self.clock.now();
        if self.open.contains_key(&id) {
            self.complete_resize(id)?;
        }
        let nodes = self.jobs[&id].current_nodes;
        self.set_allocation(id, 0)?;
        let job = self.job_mut(id)?;
        job.phase = JobPhase::Done;
        job.end_time = Some(now);
        self.job_record_mut(id).end = Some(now);
        self.record(RecordKind::JobDone, id, nodes, 0);
        self.start_jobs()
    }
}

/// Simulates `workload` to completion.
pub fn run(
    workload: &Workload,
    config: &EngineConfig,
    profiles: &ProfileSet,
) -> Result<SimulationTrace> {
    Simulation::new(workload, config.clone(), profiles.clone())?.run_to_end()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JobSpec;
    use crate::policy::StartSizeRule;
    use crate::reconfig::{MamConfig, SpawnMethod};
    use crate::workload::{generate, WorkloadSpec};
    use proptest::prelude::*;

    fn job(id: u32, jtype: JobType, min: u32, max: u32, malleable: bool, submit: f64) -> JobSpec {
        JobSpec {
            id: JobId(id),
            jtype,
            iterations: jtype.iterations(),
            min_nodes: min,
            max_nodes: max,
            malleable,
            submit_time: submit,
            inhibit_window: 4,
        }
    }

    fn sync_config(method: SpawnMethod) -> EngineConfig {
        EngineConfig {
            reconfig: ConfigRule::Fixed(MamConfig::custom(method, false)),
            ..Default::default()
        }
    }

    #[test]
    fn single_static_small_job() {
        let w = Workload::new(vec![job(0, JobType::Small, 1, 1, false, 0.0)]).unwrap();
        let trace = run(&w, &EngineConfig::default(), &ProfileSet::default()).unwrap();
        let rec = &trace.jobs[0];
        let run_time = rec.end.unwrap() - rec.start.unwrap();
        assert!((run_time - 178.0).abs() < 1e-9, "{run_time}");
        assert_eq!(trace.iteration_ends(JobId(0)).count(), 20);
        assert!(trace.resize_episodes.is_empty());
    }

    #[test]
    fn lone_malleable_job_expands_to_max() {
        let w = Workload::new(vec![job(0, JobType::Small, 1, 8, true, 0.0)]).unwrap();
        let config = EngineConfig {
            policy: PolicyConfig {
                start_size: StartSizeRule::Minimum,
                ..Default::default()
            },
            ..sync_config(SpawnMethod::Merge)
        };
        let trace = run(&w, &config, &ProfileSet::default()).unwrap();
        assert_eq!(trace.jobs[0].start_nodes, 1);
        let first = &trace.resize_episodes[0];
        assert_eq!((first.plan.from_nodes, first.plan.to_nodes), (1, 8));
        // Inhibited for the first four boundaries, asks at the fifth.
        let fifth = trace.iteration_ends(JobId(0)).nth(4).unwrap().time;
        assert_eq!(first.t_start, fifth);
        assert_eq!(trace.resize_episodes.len(), 1);
    }

    #[test]
    fn sync_resize_blocks_iterations() {
        let w = Workload::new(vec![job(0, JobType::Large, 4, 11, true, 0.0)]).unwrap();
        let config = EngineConfig {
            policy: PolicyConfig {
                start_size: StartSizeRule::Minimum,
                ..Default::default()
            },
            ..sync_config(SpawnMethod::Baseline)
        };
        let trace = run(&w, &config, &ProfileSet::default()).unwrap();
        let ep = &trace.resize_episodes[0];
        assert!(ep.duration() > 0.0);
        for r in trace.iteration_ends(JobId(0)) {
            assert!(!(r.time >= ep.t_start && r.time < ep.t_end) || r.time == ep.t_start);
        }
        assert_eq!(ep.iterations_overlapped, 0);
    }

    #[test]
    fn async_resize_applies_at_boundary() {
        let w = Workload::new(vec![job(0, JobType::Large, 4, 11, true, 0.0)]).unwrap();
        let mut config = EngineConfig {
            policy: PolicyConfig {
                start_size: StartSizeRule::Minimum,
                ..Default::default()
            },
            reconfig: ConfigRule::Fixed(MamConfig::custom(SpawnMethod::Baseline, true)),
            ..Default::default()
        };
        // Large at 4 nodes: 12.2 s nominal, 12.2 / 0.5 = 24.4 s dilated.
        config.cost.is_baseline_async = 0.5;
        let sim = Simulation::new(&w, config.clone(), ProfileSet::default()).unwrap();
        let trace = sim.run_to_end().unwrap();
        let ep = &trace.resize_episodes[0];
        let async_duration = ep.plan.async_duration;
        let k = (async_duration / 24.4).ceil() as u32;
        assert_eq!(ep.iterations_overlapped, k);
        let ends: Vec<f64> = trace.iteration_ends(JobId(0)).map(|r| r.time).collect();
        let i0 = ends.iter().position(|&t| t == ep.t_start).unwrap();
        for i in 1..=k as usize {
            let dt = ends[i0 + i] - ends[i0 + i - 1];
            assert!((dt - 24.4).abs() < 1e-9, "iteration {i}: {dt}");
        }
        assert_eq!(ep.t_end, ends[i0 + k as usize]);
        let after = ends[i0 + k as usize + 1] - ends[i0 + k as usize];
        assert!((after - 4.19).abs() < 1e-9, "{after}");
    }

    #[test]
    fn empty_queue_step_errors() {
        let w = Workload::new(vec![job(0, JobType::Small, 1, 1, false, 0.0)]).unwrap();
        let mut sim = Simulation::new(&w, EngineConfig::default(), ProfileSet::default()).unwrap();
        let mut last = 0.0;
        while sim.pending_events() > 0 {
            let e = sim.step().unwrap();
            assert!(e.time >= last);
            last = e.time;
        }
        assert!(matches!(sim.step(), Err(Error::EmptyQueue)));
        assert!(sim.is_finished());
    }

    #[test]
    fn oversized_job_is_rejected() {
        let w = Workload::new(vec![job(0, JobType::Large, 40, 40, false, 0.0)]).unwrap();
        assert!(Simulation::new(&w, EngineConfig::default(), ProfileSet::default()).is_err());
    }

    #[test]
    fn trace_log_format() {
        let w = Workload::new(vec![job(0, JobType::Small, 1, 1, false, 0.5)]).unwrap();
        let trace = run(&w, &EngineConfig::default(), &ProfileSet::default()).unwrap();
        let log = trace.to_log();
        let mut lines = log.lines();
        assert_eq!(lines.next(), Some("time,kind,job,nodes_before,nodes_after"));
        assert_eq!(lines.next(), Some("0.5,arrival,0,0,0"));
        assert_eq!(lines.next(), Some("0.5,start,0,0,1"));
        assert!(log.trim_end().ends_with("job_done,0,1,0"));
    }

    fn check_invariants(trace: &SimulationTrace, workload: &Workload) {
        assert!(trace.records.windows(2).all(|p| p[0].time <= p[1].time));
        for snap in &trace.allocation_snapshots {
            assert!(snap.allocated <= trace.total_nodes);
            assert_eq!(
                snap.per_job.iter().map(|p| p.1).sum::<u32>(),
                snap.allocated
            );
        }
        for spec in workload.jobs() {
            assert_eq!(
                trace.iteration_ends(spec.id).count() as u32,
                spec.iterations
            );
            let rec = trace.jobs.iter().find(|r| r.id == spec.id).unwrap();
            assert!(rec.start.unwrap() >= spec.submit_time);
            for ep in trace.resize_episodes.iter().filter(|e| e.job == spec.id) {
                assert!(ep.t_end <= rec.end.unwrap());
                assert!(ep.plan.to_nodes >= spec.min_nodes && ep.plan.to_nodes <= spec.max_nodes);
                if !ep.plan.is_async() {
                    assert!(trace
                        .iteration_ends(spec.id)
                        .all(|r| r.time <= ep.t_start || r.time >= ep.t_end));
                }
            }
            // Inhibit: at least `window` boundaries between a completed
            // resize and the next decision.
            let mut ends_since_resize: Option<u32> = None;
            for r in trace.records.iter().filter(|r| r.job == spec.id) {
                match r.kind {
                    RecordKind::ResizeDone => ends_since_resize = Some(0),
                    RecordKind::IterationEnd => {
                        if let Some(n) = ends_since_resize.as_mut() {
                            *n += 1;
                        }
                    }
                    RecordKind::ResizeStart => {
                        if let Some(n) = ends_since_resize {
                            assert!(n > spec.inhibit_window, "resize after {n} iterations");
                        }
                    }
                    _ => {}
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn random_workloads_hold_invariants(seed in any::<u64>(), variant in 0usize..5) {
            let spec = WorkloadSpec { seed, malleable: variant != 0, ..Default::default() };
            let w = generate(&spec).unwrap();
            let reconfig = match variant {
                1 => ConfigRule::Fixed(MamConfig::custom(SpawnMethod::Baseline, false)),
                2 => ConfigRule::Auto { asynchronous: false },
                3 => ConfigRule::Fixed(MamConfig::custom(SpawnMethod::Baseline, true)),
                _ => ConfigRule::Auto { asynchronous: true },
            };
            let config = EngineConfig { reconfig, ..Default::default() };
            let trace = run(&w, &config, &ProfileSet::default()).unwrap();
            check_invariants(&trace, &w);
            let again = run(&w, &config, &ProfileSet::default()).unwrap();
            prop_assert_eq!(trace.to_log(), again.to_log());
        }
    }
}
