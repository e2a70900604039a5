//! Synthetic workload generation and the JSON workload file.
//!
//! Submissions follow exponential interarrival gaps and job types are drawn
//! from a weighted mix. Node bounds come from the scalability profiles: a
//! dynamic job may range from its base size to its static size, a static job
//! is pinned to its static size.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{JobId, JobSpec, JobType, DEFAULT_INHIBIT_WINDOW};
use crate::scalability::ProfileSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub job_count: usize,
    pub type_weights: BTreeMap<JobType, f64>,
    pub mean_interarrival: f64,
    pub malleable: bool,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            job_count: 30,
            type_weights: BTreeMap::from([
                (JobType::Small, 0.2),
                (JobType::Medium, 0.2),
                (JobType::Large, 0.6),
            ]),
            mean_interarrival: 10.0,
            malleable: true,
            seed: 0,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.job_count < 1 {
            return Err(Error::InvalidSpec("job_count must be at least 1".into()));
        }
        if !(self.mean_interarrival.is_finite() && self.mean_interarrival > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "mean_interarrival {} must be positive",
                self.mean_interarrival
            )));
        }
        if let Some((t, w)) = self
            .type_weights
            .iter()
            .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
        {
            return Err(Error::InvalidSpec(format!(
                "weight {w} for {t} is not a probability"
            )));
        }
        let total: f64 = self.type_weights.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!(
                "type weights sum to {total}, not 1"
            )));
        }
        Ok(())
    }
}

/// Ordered job list with non-decreasing submit times.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    jobs: Vec<JobSpec>,
}

impl Workload {
    /// Validates and wraps a job list.
    pub fn new(jobs: Vec<JobSpec>) -> Result<Self> {
        if jobs.is_empty() {
            return Err(Error::InvalidSpec("workload has no jobs".into()));
        }
        let mut seen = BTreeSet::new();
        for (i, job) in jobs.iter().enumerate() {
            job.validate()?;
            if !seen.insert(job.id) {
                return Err(Error::InvalidJob {
                    job: job.id,
                    field: "id",
                    reason: "duplicate id".into(),
                });
            }
            if i > 0 && job.submit_time < jobs[i - 1].submit_time {
                return Err(Error::InvalidJob {
                    job: job.id,
                    field: "submit_time",
                    reason: "submit times must be non-decreasing".into(),
                });
            }
        }
        Ok(Self { jobs })
    }

    pub fn jobs(&self) -> &[JobSpec] {
        &self.jobs
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    /// Pins every job to its type's static size and disables malleability.
    pub fn to_static(&self, profiles: &ProfileSet) -> Result<Self> {
        let jobs = self
            .jobs
            .iter()
            .map(|job| {
                let size = profiles.get(job.jtype)?.static_max_nodes();
                Ok(JobSpec {
                    min_nodes: size,
                    max_nodes: size,
                    malleable: false,
                    ..job.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(jobs)
    }

    /// Opens every job to the range between its base size and its static size.
    pub fn to_dynamic(&self, profiles: &ProfileSet) -> Result<Self> {
        let jobs = self
            .jobs
            .iter()
            .map(|job| {
                let profile = profiles.get(job.jtype)?;
                Ok(JobSpec {
                    min_nodes: profile.base_nodes(),
                    max_nodes: profile.static_max_nodes(),
                    malleable: true,
                    ..job.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(jobs)
    }

    pub fn with_inhibit_window(mut self, window: u32) -> Self {
        for job in &mut self.jobs {
            job.inhibit_window = window;
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.jobs).expect("job specs always serialize")
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let jobs: Vec<JobSpec> = serde_json::from_str(text).map_err(|e| {
            Error::malformed(
                origin,
                format!("line {} column {}: {e}", e.line(), e.column()),
            )
        })?;
        Self::new(jobs).map_err(|e| match e {
            Error::InvalidJob { job, field, reason } => {
                let index = jobs_index(text, job);
                Error::malformed(
                    origin,
                    format!("job {job}{index}: field `{field}`: {reason}"),
                )
            }
            other => Error::malformed(origin, other.to_string()),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

/// Best-effort line hint for a job id inside the raw document.
fn jobs_index(text: &str, job: JobId) -> String {
    let needle = format!("\"id\": {}", job.0);
    let compact = format!("\"id\":{}", job.0);
    text.lines()
        .position(|l| l.contains(&needle) || l.contains(&compact))
        .map(|i| format!(" (line {})", i + 1))
        .unwrap_or_default()
}

/// Draws a workload using the built-in iteration profiles.
pub fn generate(spec: &WorkloadSpec) -> Result<Workload> {
    generate_with(spec, &ProfileSet::default())
}

pub fn generate_with(spec: &WorkloadSpec, profiles: &ProfileSet) -> Result<Workload> {
    spec.validate()?;
    let types: Vec<JobType> = spec.type_weights.keys().copied().collect();
    let weights: Vec<f64> = spec.type_weights.values().copied().collect();
    let picker = WeightedIndex::new(&weights).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let gaps =
        Exp::new(1.0 / spec.mean_interarrival).map_err(|e| Error::InvalidSpec(e.to_string()))?;

    let mut type_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut arrival_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);

    let mut submit_time = 0.0;
    let mut jobs = Vec::with_capacity(spec.job_count);
    for i in 0..spec.job_count {
        if i > 0 {
            submit_time += gaps.sample(&mut arrival_rng);
        }
        let jtype = types[picker.sample(&mut type_rng)];
        let profile = profiles.get(jtype)?;
        let static_size = profile.static_max_nodes();
        let (min_nodes, max_nodes) = if spec.malleable {
            (profile.base_nodes(), static_size)
        } else {
            (static_size, static_size)
        };
        jobs.push(JobSpec {
            id: JobId(i as u32),
            jtype,
            iterations: jtype.iterations(),
            min_nodes,
            max_nodes,
            malleable: spec.malleable,
            submit_time,
            inhibit_window: DEFAULT_INHIBIT_WINDOW,
        });
    }
    Workload::new(jobs)
}
