//! Resource-manager decisions: which queued jobs start, and how a malleable
//! job that reaches a sync point should be resized.
//!
//! The resize rule follows the "natural" selection policy. With nothing
//! waiting, the triggering job grows into idle nodes. With jobs waiting, it
//! gives up just enough nodes (never going below its minimum) for the first
//! waiting job that could then start, and that job is promoted to the head
//! of the queue. Otherwise it grows if it can. Any node count is allowed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterState, JobId, JobPhase, JobSpec, JobState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StartSizeRule {
    /// Malleable jobs take as many nodes as fit, up to their maximum.
    Largest,
    /// Malleable jobs always start at their minimum.
    Minimum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpansionRule {
    /// Grow to the job maximum or until idle nodes run out.
    Maximal,
    /// Grow by at most this many nodes per resize.
    Increment(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub backfill: bool,
    pub start_size: StartSizeRule,
    pub expansion: ExpansionRule,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            backfill: true,
            start_size: StartSizeRule::Largest,
            expansion: ExpansionRule::Maximal,
        }
    }
}

/// Waiting jobs in submit order plus the promoted ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueueState {
    pub pending: Vec<JobSpec>,
    /// Promoted jobs, each with the idle nodes already held back for it.
    pub priority_boosts: BTreeMap<JobId, u32>,
}

impl QueueState {
    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn push(&mut self, job: JobSpec) {
        self.pending.push(job);
    }

    pub fn remove(&mut self, id: JobId) -> Option<JobSpec> {
        self.priority_boosts.remove(&id);
        let pos = self.pending.iter().position(|j| j.id == id)?;
        Some(self.pending.remove(pos))
    }

    pub fn is_boosted(&self, id: JobId) -> bool {
        self.priority_boosts.contains_key(&id)
    }

    /// Idle nodes held back for promoted jobs.
    pub fn reserved_nodes(&self) -> u32 {
        self.priority_boosts.values().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReconfigDecision {
    /// New node count, or 0 to keep the current one.
    pub resultant_nodes: u32,
    /// Pending job promoted by a shrink.
    pub released_for: Option<JobId>,
    /// Idle nodes held for `released_for` until the shrink completes.
    pub reserved_idle: u32,
}

impl ReconfigDecision {
    pub fn no_change() -> Self {
        Self::default()
    }

    pub fn is_change(&self) -> bool {
        self.resultant_nodes != 0
    }
}

fn expand_to(trigger: &JobState, available: u32, rule: ExpansionRule) -> u32 {
    let cap = match rule {
        ExpansionRule::Maximal => trigger.spec.max_nodes,
        ExpansionRule::Increment(step) => trigger
            .spec
            .max_nodes
            .min(trigger.current_nodes.saturating_add(step)),
    };
    let target = cap.min(trigger.current_nodes + available);
    if target > trigger.current_nodes {
        target
    } else {
        0
    }
}

/// Decides how a malleable job at a sync point should be resized.
pub fn select_natural(
    trigger: &JobState,
    queue: &QueueState,
    cluster: &ClusterState,
    config: &PolicyConfig,
) -> Result<ReconfigDecision> {
    let eligible = trigger.phase == JobPhase::Running
        && trigger.spec.malleable
        && trigger.inhibit_remaining == 0
        && trigger.pending_resize.is_none();
    if !eligible {
        return Err(Error::NotEligible(trigger.id()));
    }
    let available = cluster.idle_nodes().saturating_sub(queue.reserved_nodes());
    let expand = || ReconfigDecision {
        resultant_nodes: expand_to(trigger, available, config.expansion),
        ..Default::default()
    };

    if queue.is_empty() {
        return Ok(expand());
    }
    let releasable = trigger.current_nodes.saturating_sub(trigger.spec.min_nodes);
    let candidate = queue
        .pending
        .iter()
        .filter(|job| !queue.is_boosted(job.id))
        .find_map(|job| {
            let deficit = job.start_size().saturating_sub(available);
            (deficit > 0 && deficit <= releasable).then_some((job, deficit))
        });
    if let Some((job, deficit)) = candidate {
        return Ok(ReconfigDecision {
            resultant_nodes: trigger.current_nodes - deficit,
            released_for: Some(job.id),
            reserved_idle: job.start_size() - deficit,
        });
    }
    Ok(expand())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JobStart {
    pub job: JobId,
    pub nodes: u32,
    pub time: f64,
}

/// First-come first-served starts with optional backfill. Promoted jobs go
/// first and may use the idle nodes held for them.
pub fn try_start_jobs(
    queue: &QueueState,
    cluster: &ClusterState,
    now: f64,
    config: &PolicyConfig,
) -> Vec<JobStart> {
    let mut order: Vec<&JobSpec> = queue
        .pending
        .iter()
        .filter(|j| queue.is_boosted(j.id))
        .collect();
    order.extend(queue.pending.iter().filter(|j| !queue.is_boosted(j.id)));

    let mut idle = cluster.idle_nodes();
    let mut reservations = queue.priority_boosts.clone();
    let mut started = Vec::new();
    for job in order {
        let held_for_others: u32 = reservations
            .iter()
            .filter(|(k, _)| **k != job.id)
            .map(|(_, v)| v)
            .sum();
        let available = idle.saturating_sub(held_for_others);
        if job.start_size() <= available {
            let nodes = if job.malleable && config.start_size == StartSizeRule::Largest {
                job.max_nodes.min(available)
            } else {
                job.min_nodes
            };
            idle -= nodes;
            reservations.remove(&job.id);
            started.push(JobStart {
                job: job.id,
                nodes,
                time: now,
            });
        } else if !config.backfill {
            break;
        }
    }
    debug_assert!(started.iter().map(|s| s.nodes).sum::<u32>() <= cluster.idle_nodes());
    started
}
