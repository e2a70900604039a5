//! Workload metrics computed from a finished trace, and their aggregation
//! across repetitions.
//!
//! Medians use the lower-middle element for even counts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::{RecordKind, SimulationTrace};
use crate::error::{Error, Result};
use crate::model::{JobId, JobType};

/// Lower-middle median. `None` for an empty sample.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(sorted[(sorted.len() - 1) / 2])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeMedians {
    pub jobs: usize,
    pub wait: f64,
    pub run: f64,
    pub turnaround: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRow {
    pub id: JobId,
    pub jtype: JobType,
    pub submit: f64,
    pub start: f64,
    pub end: f64,
    pub wait: f64,
    pub run: f64,
    pub turnaround: f64,
    pub start_nodes: u32,
    pub node_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub makespan: f64,
    pub per_type: BTreeMap<JobType, TypeMedians>,
    pub mean_utilization: f64,
    pub utilization_series: Vec<(f64, f64)>,
    pub accumulated_resize: f64,
    pub overlapped_iterations: u32,
    pub resize_count: usize,
    pub median_resize: f64,
    pub median_spawn: f64,
    pub median_redistribution: f64,
    /// Mean iteration speedup during background resizes; 1 when none ran.
    pub iteration_speedup: f64,
    /// First moment after the last arrival at which nothing is waiting.
    pub queue_empty_time: Option<f64>,
    pub jobs: Vec<JobRow>,
}

/// Derives the run metrics from a complete trace.
pub fn compute(trace: &SimulationTrace) -> Result<RunReport> {
    let mut rows = Vec::with_capacity(trace.jobs.len());
    for job in &trace.jobs {
        let (start, end) = match (job.start, job.end) {
            (Some(s), Some(e)) => (s, e),
            _ => return Err(Error::IncompleteTrace(job.id)),
        };
        let wait = start - job.submit;
        let run = end - start;
        rows.push(JobRow {
            id: job.id,
            jtype: job.jtype,
            submit: job.submit,
            start,
            end,
            wait,
            run,
            turnaround: wait + run,
            start_nodes: job.start_nodes,
            node_seconds: job.node_seconds,
        });
    }
    let first_arrival = rows.iter().map(|r| r.submit).fold(f64::INFINITY, f64::min);
    let last_end = rows.iter().map(|r| r.end).fold(f64::NEG_INFINITY, f64::max);
    let makespan = last_end - first_arrival;

    let mut per_type = BTreeMap::new();
    for jtype in JobType::ALL {
        let of_type: Vec<&JobRow> = rows.iter().filter(|r| r.jtype == jtype).collect();
        if of_type.is_empty() {
            continue;
        }
        let pick = |f: fn(&JobRow) -> f64| {
            median(&of_type.iter().map(|r| f(r)).collect::<Vec<_>>()).unwrap_or(0.0)
        };
        per_type.insert(
            jtype,
            TypeMedians {
                jobs: of_type.len(),
                wait: pick(|r| r.wait),
                run: pick(|r| r.run),
                turnaround: pick(|r| r.turnaround),
            },
        );
    }

    let total = f64::from(trace.total_nodes);
    let mut utilization_series = Vec::new();
    let mut area = 0.0;
    let snaps = &trace.allocation_snapshots;
    for (i, snap) in snaps.iter().enumerate() {
        let t0 = snap.time.max(first_arrival);
        let t1 = snaps.get(i + 1).map_or(last_end, |n| n.time).min(last_end);
        let u = f64::from(snap.allocated) / total;
        if snap.time <= last_end && (snap.time >= first_arrival || t1 > first_arrival) {
            utilization_series.push((t0, u));
        }
        if t1 > t0 {
            area += u * (t1 - t0);
        }
    }
    let mean_utilization = if makespan > 0.0 { area / makespan } else { 0.0 };

    let durations: Vec<f64> = trace.resize_episodes.iter().map(|e| e.duration()).collect();
    let spawns: Vec<f64> = trace
        .resize_episodes
        .iter()
        .map(|e| e.plan.spawn_time)
        .collect();
    let redists: Vec<f64> = trace
        .resize_episodes
        .iter()
        .map(|e| e.plan.redist_time)
        .collect();
    let background: Vec<f64> = trace
        .resize_episodes
        .iter()
        .filter(|e| e.plan.is_async())
        .map(|e| e.plan.overlap_speedup)
        .collect();
    let iteration_speedup = if background.is_empty() {
        1.0
    } else {
        background.iter().sum::<f64>() / background.len() as f64
    };

    Ok(RunReport {
        makespan,
        per_type,
        mean_utilization,
        utilization_series,
        accumulated_resize: durations.iter().fold(0.0, |acc, d| acc + d),
        overlapped_iterations: trace
            .resize_episodes
            .iter()
            .map(|e| e.iterations_overlapped)
            .sum(),
        resize_count: durations.len(),
        median_resize: median(&durations).unwrap_or(0.0),
        median_spawn: median(&spawns).unwrap_or(0.0),
        median_redistribution: median(&redists).unwrap_or(0.0),
        iteration_speedup,
        queue_empty_time: queue_empty_time(trace),
        jobs: rows,
    })
}

fn queue_empty_time(trace: &SimulationTrace) -> Option<f64> {
    let last_arrival = trace
        .records
        .iter()
        .filter(|r| r.kind == RecordKind::Arrival)
        .map(|r| r.time)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut waiting: i64 = 0;
    let mut arrivals_left = trace.jobs.len();
    let mut i = 0;
    let records = &trace.records;
    while i < records.len() {
        let t = records[i].time;
        while i < records.len() && records[i].time == t {
            match records[i].kind {
                RecordKind::Arrival => {
                    waiting += 1;
                    arrivals_left -= 1;
                }
                RecordKind::Start => waiting -= 1,
                _ => {}
            }
            i += 1;
        }
        if arrivals_left == 0 && t >= last_arrival && waiting == 0 {
            return Some(t);
        }
    }
    None
}

impl RunReport {
    pub fn jobs_csv(&self) -> String {
        let mut out = String::from(
            "id,jtype,submit,start,end,wait,run,turnaround,start_nodes,node_seconds\n",
        );
        for r in &self.jobs {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.id,
                r.jtype,
                r.submit,
                r.start,
                r.end,
                r.wait,
                r.run,
                r.turnaround,
                r.start_nodes,
                r.node_seconds
            )
            .expect("String write");
        }
        out
    }

    pub fn utilization_csv(&self) -> String {
        let mut out = String::from("time,utilization\n");
        for (t, u) in &self.utilization_series {
            writeln!(out, "{t},{u}").expect("String write");
        }
        out
    }
}

/// Medians across repetitions of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub repetitions: usize,
    pub makespan: f64,
    pub utilization: f64,
    pub accumulated_resize_time: f64,
    pub overlapped_iterations: f64,
    pub iteration_speedup: f64,
    pub median_resize_time: f64,
    pub median_spawn_time: f64,
    pub median_redistribution_time: f64,
    pub resize_count: f64,
    pub per_type: BTreeMap<JobType, TypeMedians>,
}

pub fn aggregate(reports: &[RunReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::InvalidConfig("nothing to aggregate".into()));
    }
    let med = |f: &dyn Fn(&RunReport) -> f64| {
        median(&reports.iter().map(f).collect::<Vec<_>>()).expect("non-empty")
    };
    let mut per_type = BTreeMap::new();
    for jtype in JobType::ALL {
        let with: Vec<&TypeMedians> = reports
            .iter()
            .filter_map(|r| r.per_type.get(&jtype))
            .collect();
        if with.is_empty() {
            continue;
        }
        let m = |f: fn(&TypeMedians) -> f64| {
            median(&with.iter().map(|t| f(t)).collect::<Vec<_>>()).expect("non-empty")
        };
        per_type.insert(
            jtype,
            TypeMedians {
                jobs: m(|t| t.jobs as f64) as usize,
                wait: m(|t| t.wait),
                run: m(|t| t.run),
                turnaround: m(|t| t.turnaround),
            },
        );
    }
    Ok(AggregateReport {
        repetitions: reports.len(),
        makespan: med(&|r| r.makespan),
        utilization: med(&|r| r.mean_utilization),
        accumulated_resize_time: med(&|r| r.accumulated_resize),
        overlapped_iterations: med(&|r| f64::from(r.overlapped_iterations)),
        iteration_speedup: med(&|r| r.iteration_speedup),
        median_resize_time: med(&|r| r.median_resize),
        median_spawn_time: med(&|r| r.median_spawn),
        median_redistribution_time: med(&|r| r.median_redistribution),
        resize_count: med(&|r| r.resize_count as f64),
        per_type,
    })
}
