//! Reconfiguration engine model: strategy selection, spawn counts, memory
//! footprint, data redistribution and the resulting resize cost.

pub mod distribution;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::JobType;

pub use distribution::{
    block_distribution, redistribution_plan, Block, MessagePlan, Transfer, REDISTRIBUTED_ARRAYS,
};

const DEFAULT_COST_PARAMS: &str = include_str!("../../data/cost_params.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SpawnMethod {
    /// Spawns a complete target group.
    Baseline,
    /// Keeps `min(NS, NT)` ranks and spawns only the difference.
    Merge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SpawnStrategy {
    Parallel,
    Intracomm,
    Async,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RedistMethod {
    Collective,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MamConfig {
    pub spawn_method: SpawnMethod,
    pub strategies: BTreeSet<SpawnStrategy>,
    pub redist_method: RedistMethod,
    pub user_override: bool,
}

impl MamConfig {
    /// A user-supplied configuration that bypasses automatic selection.
    pub fn custom(spawn_method: SpawnMethod, asynchronous: bool) -> Self {
        let mut strategies = BTreeSet::from([SpawnStrategy::Parallel]);
        if asynchronous {
            strategies.insert(SpawnStrategy::Async);
        }
        Self {
            spawn_method,
            strategies,
            redist_method: RedistMethod::Collective,
            user_override: true,
        }
    }

    pub fn is_async(&self) -> bool {
        self.strategies.contains(&SpawnStrategy::Async)
    }

    pub fn with_async(mut self, asynchronous: bool) -> Self {
        if asynchronous {
            self.strategies.insert(SpawnStrategy::Async);
        } else {
            self.strategies.remove(&SpawnStrategy::Async);
        }
        self
    }
}

/// Picks spawn method and strategies for a resize from `ns` to `nt` ranks.
///
/// Expansions merge. Shrinks merge too, unless the target falls below the
/// job's start-up rank count, in which case a fresh intra-communicator group
/// is spawned.
pub fn choose_config(ns: u32, nt: u32, original_ranks: u32, user: Option<&MamConfig>) -> MamConfig {
    if let Some(config) = user {
        return config.clone();
    }
    let mut strategies = BTreeSet::from([SpawnStrategy::Parallel]);
    let spawn_method = if nt > ns {
        SpawnMethod::Merge
    } else if nt < original_ranks {
        strategies = BTreeSet::from([SpawnStrategy::Intracomm]);
        SpawnMethod::Baseline
    } else {
        SpawnMethod::Merge
    };
    MamConfig {
        spawn_method,
        strategies,
        redist_method: RedistMethod::Collective,
        user_override: false,
    }
}

/// Processes created by a resize.
pub fn spawn_count(method: SpawnMethod, ns: u32, nt: u32) -> u32 {
    match method {
        SpawnMethod::Baseline => nt,
        SpawnMethod::Merge => nt.saturating_sub(ns),
    }
}

/// Peak per-rank memory while both data layouts coexist.
pub fn memory_required(method: SpawnMethod, problem_size: f64, ns: u32, nt: u32, c: f64) -> f64 {
    let (ns, nt) = (f64::from(ns), f64::from(nt));
    match method {
        SpawnMethod::Baseline => problem_size / ns + problem_size / nt + c,
        SpawnMethod::Merge => problem_size / ns.min(nt) + c,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    /// Seconds paid by every resize before any rank is created.
    pub spawn_fixed: f64,
    pub spawn_per_rank: f64,
    /// Grid values moved per second during redistribution.
    pub redist_bandwidth: f64,
    pub mam_constant_c: f64,
    /// Sync-to-async total resize time ratio.
    pub async_resize_factor_baseline: f64,
    pub async_resize_factor_merge: f64,
    /// Iteration speedup while resizing in the background.
    pub is_baseline_async: f64,
    pub is_merge_async: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_COST_PARAMS).expect("shipped cost parameters parse")
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("spawn_fixed", self.spawn_fixed),
            ("spawn_per_rank", self.spawn_per_rank),
            ("redist_bandwidth", self.redist_bandwidth),
            (
                "async_resize_factor_baseline",
                self.async_resize_factor_baseline,
            ),
            ("async_resize_factor_merge", self.async_resize_factor_merge),
            ("is_baseline_async", self.is_baseline_async),
            ("is_merge_async", self.is_merge_async),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.mam_constant_c.is_finite() && self.mam_constant_c >= 0.0) {
            return Err(Error::InvalidConfig(
                "mam_constant_c must be non-negative".into(),
            ));
        }
        for (name, v) in [
            (
                "async_resize_factor_baseline",
                self.async_resize_factor_baseline,
            ),
            ("async_resize_factor_merge", self.async_resize_factor_merge),
        ] {
            if v >= 1.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be below 1, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("is_baseline_async", self.is_baseline_async),
            ("is_merge_async", self.is_merge_async),
        ] {
            if v > 1.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must not exceed 1, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn async_factor(&self, method: SpawnMethod) -> f64 {
        match method {
            SpawnMethod::Baseline => self.async_resize_factor_baseline,
            SpawnMethod::Merge => self.async_resize_factor_merge,
        }
    }

    pub fn async_iteration_speedup(&self, method: SpawnMethod) -> f64 {
        match method {
            SpawnMethod::Baseline => self.is_baseline_async,
            SpawnMethod::Merge => self.is_merge_async,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let params: Self = serde_json::from_str(&text).map_err(|e| {
            Error::malformed(
                path,
                format!("line {} column {}: {e}", e.line(), e.column()),
            )
        })?;
        params
            .validate()
            .map_err(|e| Error::malformed(path, e.to_string()))?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("params serialize");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResizeCost {
    pub spawn_time: f64,
    pub redist_time: f64,
    pub sync_duration: f64,
    pub async_duration: f64,
    pub overlap_speedup: f64,
}

/// Affine spawn cost plus bandwidth-bound redistribution.
pub fn resize_cost(
    config: &MamConfig,
    spawned: u32,
    moved_volume: f64,
    params: &CostParams,
) -> ResizeCost {
    let spawn_time = params.spawn_fixed + params.spawn_per_rank * f64::from(spawned);
    let redist_time = moved_volume / params.redist_bandwidth;
    let sync_duration = spawn_time + redist_time;
    let method = config.spawn_method;
    let async_duration = sync_duration / params.async_factor(method);
    let overlap_speedup = if config.is_async() {
        params.async_iteration_speedup(method)
    } else {
        1.0
    };
    ResizeCost {
        spawn_time,
        redist_time,
        sync_duration,
        async_duration,
        overlap_speedup,
    }
}

/// Everything the engine needs to carry out one resize.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconfigPlan {
    pub config: MamConfig,
    pub from_nodes: u32,
    pub to_nodes: u32,
    pub ns: u32,
    pub nt: u32,
    pub spawned: u32,
    pub moved_slices: u64,
    pub spawn_time: f64,
    pub redist_time: f64,
    pub sync_duration: f64,
    pub async_duration: f64,
    pub overlap_speedup: f64,
    pub memory_peak: f64,
}

impl ReconfigPlan {
    pub fn is_async(&self) -> bool {
        self.config.is_async()
    }

    pub fn is_expansion(&self) -> bool {
        self.to_nodes > self.from_nodes
    }

    /// Wall time the resize takes under its configured strategy.
    pub fn duration(&self) -> f64 {
        if self.is_async() {
            self.async_duration
        } else {
            self.sync_duration
        }
    }
}

/// How the engine obtains a [`MamConfig`] for each resize.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConfigRule {
    /// Automatic selection, optionally running in the background.
    Auto { asynchronous: bool },
    /// A fixed user configuration.
    Fixed(MamConfig),
}

/// Builds the plan for moving a job of `jtype` from `from_nodes` to `to_nodes`.
pub fn plan_resize(
    jtype: JobType,
    from_nodes: u32,
    to_nodes: u32,
    start_nodes: u32,
    ranks_per_node: u32,
    rule: &ConfigRule,
    params: &CostParams,
) -> Result<ReconfigPlan> {
    let ns = from_nodes * ranks_per_node;
    let nt = to_nodes * ranks_per_node;
    let original = start_nodes * ranks_per_node;
    let config = match rule {
        ConfigRule::Auto { asynchronous } => {
            choose_config(ns, nt, original, None).with_async(*asynchronous)
        }
        ConfigRule::Fixed(user) => choose_config(ns, nt, original, Some(user)),
    };
    let plan = redistribution_plan(
        jtype.slices(),
        jtype.slice_volume(),
        u64::from(ns),
        u64::from(nt),
    )?;
    let spawned = spawn_count(config.spawn_method, ns, nt);
    let cost = resize_cost(&config, spawned, plan.moved_volume(), params);
    let problem_size = (jtype.slices() * jtype.slice_volume() * plan.arrays) as f64;
    Ok(ReconfigPlan {
        memory_peak: memory_required(
            config.spawn_method,
            problem_size,
            ns,
            nt,
            params.mam_constant_c,
        ),
        config,
        from_nodes,
        to_nodes,
        ns,
        nt,
        spawned,
        moved_slices: plan.moved_slices(),
        spawn_time: cost.spawn_time,
        redist_time: cost.redist_time,
        sync_duration: cost.sync_duration,
        async_duration: cost.async_duration,
        overlap_speedup: cost.overlap_speedup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn expansion_merges() {
        let c = choose_config(448, 672, 448, None);
        assert_eq!(c.spawn_method, SpawnMethod::Merge);
        assert!(c.strategies.contains(&SpawnStrategy::Parallel));
        assert!(!c.user_override);
    }

    #[test]
    fn shrink_below_original_uses_baseline_intracomm() {
        let c = choose_config(672, 336, 448, None);
        assert_eq!(c.spawn_method, SpawnMethod::Baseline);
        assert!(c.strategies.contains(&SpawnStrategy::Intracomm));
    }

    #[test]
    fn shrink_above_original_merges() {
        let c = choose_config(896, 672, 448, None);
        assert_eq!(c.spawn_method, SpawnMethod::Merge);
    }

    #[test]
    fn override_is_returned_unchanged() {
        let user = MamConfig::custom(SpawnMethod::Baseline, true);
        assert_eq!(choose_config(448, 672, 448, Some(&user)), user);
        assert_eq!(choose_config(672, 112, 448, Some(&user)), user);
    }

    #[test]
    fn spawn_counts() {
        assert_eq!(spawn_count(SpawnMethod::Baseline, 448, 672), 672);
        assert_eq!(spawn_count(SpawnMethod::Merge, 448, 672), 224);
        assert_eq!(spawn_count(SpawnMethod::Merge, 672, 448), 0);
    }

    #[test]
    fn memory_examples() {
        assert_eq!(
            memory_required(SpawnMethod::Baseline, 100.0, 4, 5, 0.0),
            45.0
        );
        assert_eq!(memory_required(SpawnMethod::Merge, 100.0, 4, 5, 0.0), 25.0);
        assert_eq!(memory_required(SpawnMethod::Merge, 100.0, 4, 4, 7.0), 32.0);
    }

    #[test]
    fn merge_spawns_faster_than_baseline() {
        let params = CostParams::default();
        let merge = plan_resize(
            JobType::Large,
            4,
            6,
            4,
            112,
            &ConfigRule::Fixed(MamConfig::custom(SpawnMethod::Merge, false)),
            &params,
        )
        .unwrap();
        let baseline = plan_resize(
            JobType::Large,
            4,
            6,
            4,
            112,
            &ConfigRule::Fixed(MamConfig::custom(SpawnMethod::Baseline, false)),
            &params,
        )
        .unwrap();
        assert!(merge.spawn_time < baseline.spawn_time);
        assert_eq!(merge.redist_time, baseline.redist_time);
        assert!(merge.memory_peak < baseline.memory_peak);
    }

    #[test]
    fn async_duration_scales_by_factor() {
        let params = CostParams::default();
        let config = MamConfig::custom(SpawnMethod::Baseline, true);
        let cost = resize_cost(&config, 672, 1.0e9, &params);
        let expected = cost.sync_duration / 0.22;
        assert!((cost.async_duration - expected).abs() <= 1e-9 * expected);
        assert_eq!(cost.overlap_speedup, 0.41);
        let sync = resize_cost(&config.clone().with_async(false), 672, 1.0e9, &params);
        assert_eq!(sync.overlap_speedup, 1.0);
    }

    #[test]
    fn merge_shrink_pays_only_fixed_spawn() {
        let params = CostParams::default();
        let plan = plan_resize(
            JobType::Medium,
            6,
            4,
            2,
            112,
            &ConfigRule::Auto {
                asynchronous: false,
            },
            &params,
        )
        .unwrap();
        assert_eq!(plan.config.spawn_method, SpawnMethod::Merge);
        assert_eq!(plan.spawned, 0);
        assert_eq!(plan.spawn_time, params.spawn_fixed);
    }

    #[test]
    fn shipped_params_are_valid() {
        CostParams::default().validate().unwrap();
        let bad = CostParams {
            async_resize_factor_merge: 1.5,
            ..CostParams::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn merge_needs_less_memory(
            ps in 1.0e-3f64..1.0e12,
            ns in 1u32..100_000,
            nt in 1u32..100_000,
            c_frac in 0.0f64..1.0,
        ) {
            let c = ps * c_frac;
            let merge = memory_required(SpawnMethod::Merge, ps, ns, nt, c);
            let baseline = memory_required(SpawnMethod::Baseline, ps, ns, nt, c);
            prop_assert!(merge < baseline);
        }

        #[test]
        fn merge_never_pairs_with_intracomm(ns in 1u32..5000, nt in 1u32..5000, orig in 1u32..5000) {
            let c = choose_config(ns, nt, orig, None);
            prop_assert!(!(c.spawn_method == SpawnMethod::Merge
                && c.strategies.contains(&SpawnStrategy::Intracomm)));
        }
    }
}
