//! Experiment orchestration: run configurations, the five workload variants,
//! seeded repetitions and the files written for each run.
//!
//! Every seed yields one workload that all dynamic variants share; the static
//! variant runs the same submissions pinned to their static sizes.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run, EngineConfig, SimulationTrace};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, compute, AggregateReport, RunReport, TypeMedians};
use crate::model::{
    JobType, DEFAULT_COMPUTE_NODES, DEFAULT_INHIBIT_WINDOW, DEFAULT_RANKS_PER_NODE,
};
use crate::policy::PolicyConfig;
use crate::reconfig::{ConfigRule, CostParams, MamConfig, SpawnMethod};
use crate::scalability::ProfileSet;
use crate::workload::{generate_with, Workload, WorkloadSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    Static,
    Baseline,
    Merge,
    BaselineAsync,
    MergeAsync,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Static,
        Variant::Baseline,
        Variant::Merge,
        Variant::BaselineAsync,
        Variant::MergeAsync,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Static => "Static",
            Variant::Baseline => "Baseline",
            Variant::Merge => "Merge",
            Variant::BaselineAsync => "BaselineAsync",
            Variant::MergeAsync => "MergeAsync",
        }
    }

    pub fn is_dynamic(self) -> bool {
        self != Variant::Static
    }

    /// Reconfiguration rule the engine runs this variant with.
    ///
    /// Baseline variants pin the spawn method; Merge variants use automatic
    /// selection, which merges on every expansion.
    pub fn config_rule(self) -> ConfigRule {
        match self {
            Variant::Static | Variant::Merge => ConfigRule::Auto {
                asynchronous: false,
            },
            Variant::MergeAsync => ConfigRule::Auto { asynchronous: true },
            Variant::Baseline => ConfigRule::Fixed(MamConfig::custom(SpawnMethod::Baseline, false)),
            Variant::BaselineAsync => {
                ConfigRule::Fixed(MamConfig::custom(SpawnMethod::Baseline, true))
            }
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub nodes: u32,
    pub ranks_per_node: u32,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            nodes: DEFAULT_COMPUTE_NODES,
            ranks_per_node: DEFAULT_RANKS_PER_NODE,
        }
    }
}

/// Where the submissions come from: a generator spec reseeded per
/// repetition, or a fixed workload file shared by all repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkloadSource {
    Spec(WorkloadSpec),
    Path(PathBuf),
}

impl Default for WorkloadSource {
    fn default() -> Self {
        WorkloadSource::Spec(WorkloadSpec::default())
    }
}

fn default_variant() -> Variant {
    Variant::Baseline
}

fn default_repetitions() -> usize {
    5
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_inhibit() -> u32 {
    DEFAULT_INHIBIT_WINDOW
}

/// One experiment manifest, read from a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub workload: WorkloadSource,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Shipped parameters are used when absent.
    #[serde(default)]
    pub cost_params: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_inhibit")]
    pub inhibit_window: u32,
    #[serde(default)]
    pub policy: PolicyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            cluster: ClusterConfig::default(),
            workload: WorkloadSource::default(),
            variant: default_variant(),
            repetitions: default_repetitions(),
            seeds: default_seeds(),
            cost_params: None,
            output_dir: default_output(),
            inhibit_window: default_inhibit(),
            policy: PolicyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cluster.nodes == 0 || self.cluster.ranks_per_node == 0 {
            return Err(Error::InvalidCluster {
                total_nodes: self.cluster.nodes,
                ranks_per_node: self.cluster.ranks_per_node,
            });
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if self.repetitions != self.seeds.len() {
            return Err(Error::InvalidConfig(format!(
                "repetitions is {} but {} seeds are listed",
                self.repetitions,
                self.seeds.len()
            )));
        }
        if let WorkloadSource::Spec(spec) = &self.workload {
            spec.validate()?;
        }
        Ok(())
    }

    /// Reads a manifest; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: Self = serde_json::from_str(&text).map_err(|e| {
            Error::malformed(
                path,
                format!("line {} column {}: {e}", e.line(), e.column()),
            )
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let WorkloadSource::Path(p) = &mut config.workload {
            *p = base.join(&*p);
        }
        if let Some(p) = &mut config.cost_params {
            *p = base.join(&*p);
        }
        config.output_dir = base.join(&config.output_dir);
        config
            .validate()
            .map_err(|e| Error::malformed(path, e.to_string()))?;
        Ok(config)
    }

    /// Restricts the run to a single seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = vec![seed];
        self.repetitions = 1;
        self
    }

    pub fn cost(&self) -> Result<CostParams> {
        match &self.cost_params {
            Some(path) => CostParams::load(path),
            None => Ok(CostParams::default()),
        }
    }

    pub fn engine_config(&self, variant: Variant, cost: CostParams) -> EngineConfig {
        EngineConfig {
            total_nodes: self.cluster.nodes,
            ranks_per_node: self.cluster.ranks_per_node,
            policy: self.policy,
            reconfig: variant.config_rule(),
            cost,
        }
    }

    /// The dynamic workload of one repetition.
    pub fn workload_for_seed(&self, seed: u64, profiles: &ProfileSet) -> Result<Workload> {
        let workload = match &self.workload {
            WorkloadSource::Spec(spec) => generate_with(
                &WorkloadSpec {
                    seed,
                    ..spec.clone()
                },
                profiles,
            )?,
            WorkloadSource::Path(path) => Workload::load(path)?,
        };
        Ok(workload.with_inhibit_window(self.inhibit_window))
    }
}

/// The workload a variant actually runs.
pub fn variant_workload(
    variant: Variant,
    dynamic: &Workload,
    profiles: &ProfileSet,
) -> Result<Workload> {
    match variant {
        Variant::Static => dynamic.to_static(profiles),
        _ => Ok(dynamic.clone()),
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub variant: Variant,
    pub seed: u64,
    pub trace: SimulationTrace,
    pub report: RunReport,
}

pub fn run_single(
    config: &RunConfig,
    variant: Variant,
    seed: u64,
    cost: &CostParams,
    profiles: &ProfileSet,
) -> Result<RunOutput> {
    let dynamic = config.workload_for_seed(seed, profiles)?;
    run_on(config, variant, seed, &dynamic, cost, profiles)
}

fn run_on(
    config: &RunConfig,
    variant: Variant,
    seed: u64,
    dynamic: &Workload,
    cost: &CostParams,
    profiles: &ProfileSet,
) -> Result<RunOutput> {
    let workload = variant_workload(variant, dynamic, profiles)?;
    let trace = run(
        &workload,
        &config.engine_config(variant, cost.clone()),
        profiles,
    )?;
    let report = compute(&trace)?;
    Ok(RunOutput {
        variant,
        seed,
        trace,
        report,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// Ordered by variant, then by seed position in the config.
    pub runs: Vec<RunOutput>,
    pub aggregates: BTreeMap<Variant, AggregateReport>,
}

/// Runs every `(variant, seed)` pair in parallel and aggregates per variant.
pub fn run_experiment(
    config: &RunConfig,
    variants: &[Variant],
    cost: &CostParams,
    profiles: &ProfileSet,
) -> Result<ExperimentResult> {
    config.validate()?;
    let workloads = config
        .seeds
        .par_iter()
        .map(|&seed| config.workload_for_seed(seed, profiles))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(Variant, usize)> = variants
        .iter()
        .flat_map(|&v| (0..config.seeds.len()).map(move |i| (v, i)))
        .collect();
    let runs = pairs
        .par_iter()
        .map(|&(variant, i)| {
            run_on(
                config,
                variant,
                config.seeds[i],
                &workloads[i],
                cost,
                profiles,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut aggregates = BTreeMap::new();
    for &variant in variants {
        let reports: Vec<RunReport> = runs
            .iter()
            .filter(|r| r.variant == variant)
            .map(|r| r.report.clone())
            .collect();
        aggregates.insert(variant, aggregate(&reports)?);
    }
    Ok(ExperimentResult { runs, aggregates })
}

/// Scalar part of a run report, written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: Variant,
    pub seed: u64,
    pub makespan: f64,
    pub mean_utilization: f64,
    pub accumulated_resize_time: f64,
    pub overlapped_iterations: u32,
    pub iteration_speedup: f64,
    pub resize_count: usize,
    pub median_resize_time: f64,
    pub median_spawn_time: f64,
    pub median_redistribution_time: f64,
    pub queue_empty_time: Option<f64>,
    pub per_type: BTreeMap<JobType, TypeMedians>,
}

impl RunOutput {
    pub fn summary(&self) -> RunSummary {
        let r = &self.report;
        RunSummary {
            variant: self.variant,
            seed: self.seed,
            makespan: r.makespan,
            mean_utilization: r.mean_utilization,
            accumulated_resize_time: r.accumulated_resize,
            overlapped_iterations: r.overlapped_iterations,
            iteration_speedup: r.iteration_speedup,
            resize_count: r.resize_count,
            median_resize_time: r.median_resize,
            median_spawn_time: r.median_spawn,
            median_redistribution_time: r.median_redistribution,
            queue_empty_time: r.queue_empty_time,
            per_type: r.per_type.clone(),
        }
    }

    pub fn run_dir(&self, root: &Path) -> PathBuf {
        root.join(self.variant.name())
            .join(format!("seed-{}", self.seed))
    }

    /// Writes `jobs.csv`, `utilization.csv`, `trace.log` and `summary.json`.
    pub fn write(&self, root: &Path) -> Result<PathBuf> {
        let dir = self.run_dir(root);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut summary =
            serde_json::to_string_pretty(&self.summary()).expect("summary serializes");
        summary.push('\n');
        for (name, body) in [
            ("jobs.csv", self.report.jobs_csv()),
            ("utilization.csv", self.report.utilization_csv()),
            ("trace.log", self.trace.to_log()),
            ("summary.json", summary),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(dir)
    }
}

const TYPE_COLUMNS: [&str; 3] = ["wait", "run", "turnaround"];

impl ExperimentResult {
    /// One row per variant: workload and resize columns followed by per-type medians.
    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from(
            "experiment,repetitions,makespan,utilization,accumulated_resize_time,\
             overlapped_iterations,iteration_speedup,median_resize_time,median_spawn_time,\
             median_redistribution_time,resize_count",
        );
        for jtype in JobType::ALL {
            for col in TYPE_COLUMNS {
                write!(out, ",{}_{col}", jtype.name().to_ascii_lowercase()).expect("String write");
            }
        }
        out.push('\n');
        for (variant, a) in &self.aggregates {
            write!(
                out,
                "{variant},{},{},{},{},{},{},{},{},{},{}",
                a.repetitions,
                a.makespan,
                a.utilization,
                a.accumulated_resize_time,
                a.overlapped_iterations,
                a.iteration_speedup,
                a.median_resize_time,
                a.median_spawn_time,
                a.median_redistribution_time,
                a.resize_count
            )
            .expect("String write");
            for jtype in JobType::ALL {
                match a.per_type.get(&jtype) {
                    Some(t) => write!(out, ",{},{},{}", t.wait, t.run, t.turnaround),
                    None => out.write_str(",,,"),
                }
                .expect("String write");
            }
            out.push('\n');
        }
        out
    }

    /// Per-repetition scalars for external statistical analysis.
    pub fn runs_csv(&self) -> String {
        let mut out = String::from(
            "experiment,seed,makespan,utilization,accumulated_resize_time,overlapped_iterations,\
             iteration_speedup,resize_count,median_resize_time\n",
        );
        for r in &self.runs {
            let s = r.summary();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                s.variant,
                s.seed,
                s.makespan,
                s.mean_utilization,
                s.accumulated_resize_time,
                s.overlapped_iterations,
                s.iteration_speedup,
                s.resize_count,
                s.median_resize_time
            )
            .expect("String write");
        }
        out
    }

    /// Writes every run directory plus `aggregate.csv`, `aggregate.json` and `runs.csv`.
    pub fn write(&self, root: &Path) -> Result<()> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        for r in &self.runs {
            r.write(root)?;
        }
        let keyed: BTreeMap<&str, &AggregateReport> =
            self.aggregates.iter().map(|(v, a)| (v.name(), a)).collect();
        let mut json = serde_json::to_string_pretty(&keyed).expect("aggregate serializes");
        json.push('\n');
        for (name, body) in [
            ("aggregate.csv", self.aggregate_csv()),
            ("aggregate.json", json),
            ("runs.csv", self.runs_csv()),
        ] {
            let path = root.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> RunConfig {
        RunConfig {
            workload: WorkloadSource::Spec(WorkloadSpec {
                job_count: 8,
                ..WorkloadSpec::default()
            }),
            repetitions: 2,
            seeds: vec![3, 4],
            ..RunConfig::default()
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!(
            "mergeasync".parse::<Variant>().unwrap(),
            Variant::MergeAsync
        );
        assert!("Elastic".parse::<Variant>().is_err());
    }

    #[test]
    fn repetitions_must_match_seeds() {
        let config = RunConfig {
            repetitions: 3,
            ..small_config()
        };
        assert!(matches!(config.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn config_defaults_fill_missing_fields() {
        let config: RunConfig = serde_json::from_str(r#"{"variant": "Merge"}"#).unwrap();
        assert_eq!(config.variant, Variant::Merge);
        assert_eq!(config.cluster, ClusterConfig::default());
        assert_eq!(config.seeds.len(), config.repetitions);
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{"workload": {"path": "w.json"}, "output_dir": "res", "repetitions": 1, "seeds": [0]}"#,
        )
        .unwrap();
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(
            config.workload,
            WorkloadSource::Path(dir.path().join("w.json"))
        );
        assert_eq!(config.output_dir, dir.path().join("res"));
    }

    #[test]
    fn static_variant_pins_sizes() {
        let profiles = ProfileSet::default();
        let dynamic = small_config().workload_for_seed(3, &profiles).unwrap();
        let pinned = variant_workload(Variant::Static, &dynamic, &profiles).unwrap();
        for (d, s) in dynamic.jobs().iter().zip(pinned.jobs()) {
            assert_eq!(d.submit_time, s.submit_time);
            assert_eq!(d.jtype, s.jtype);
            assert!(!s.malleable);
            assert_eq!(s.min_nodes, s.max_nodes);
            assert_eq!(
                s.min_nodes,
                profiles.get(s.jtype).unwrap().static_max_nodes()
            );
        }
    }

    #[test]
    fn experiment_is_ordered_and_complete() {
        let profiles = ProfileSet::default();
        let config = small_config();
        let result =
            run_experiment(&config, &Variant::ALL, &CostParams::default(), &profiles).unwrap();
        assert_eq!(result.runs.len(), 10);
        assert_eq!(result.aggregates.len(), 5);
        let order: Vec<(Variant, u64)> = result.runs.iter().map(|r| (r.variant, r.seed)).collect();
        assert_eq!(order[0], (Variant::Static, 3));
        assert_eq!(order[1], (Variant::Static, 4));
        assert_eq!(order[9], (Variant::MergeAsync, 4));
        let csv = result.aggregate_csv();
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.lines().nth(1).unwrap().starts_with("Static,2,"));
    }

    #[test]
    fn written_outputs_repeat_byte_for_byte() {
        let profiles = ProfileSet::default();
        let config = small_config();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for dir in [&a, &b] {
            run_experiment(&config, &Variant::ALL, &CostParams::default(), &profiles)
                .unwrap()
                .write(dir.path())
                .unwrap();
        }
        for rel in [
            "aggregate.csv",
            "runs.csv",
            "Merge/seed-4/jobs.csv",
            "Baseline/seed-3/trace.log",
        ] {
            let x = std::fs::read(a.path().join(rel)).unwrap();
            let y = std::fs::read(b.path().join(rel)).unwrap();
            assert_eq!(x, y, "{rel}");
        }
    }
}
