//! Fits the spawn and redistribution cost parameters to reference resize
//! statistics of the synchronous Baseline and Merge experiments.
//!
//! The search runs in log space over `spawn_fixed`, `spawn_per_rank` and
//! `redist_bandwidth`: a coarse grid picks a start point, then a compass
//! search with a shrinking step refines it. Everything is deterministic.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiment::{run_experiment, RunConfig, Variant};
use crate::reconfig::CostParams;
use crate::scalability::ProfileSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    /// Median accumulated resize time of the Baseline experiment, seconds.
    pub baseline_accumulated: f64,
    pub merge_accumulated: f64,
    /// Baseline over Merge median per-resize duration.
    pub resize_ratio: f64,
    /// Accepted relative deviation of the accumulated times.
    pub accumulated_tolerance: f64,
    pub ratio_tolerance: f64,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self {
            baseline_accumulated: 189.43,
            merge_accumulated: 112.88,
            resize_ratio: 1.15,
            accumulated_tolerance: 0.25,
            ratio_tolerance: 0.13,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observed {
    pub baseline_accumulated: f64,
    pub merge_accumulated: f64,
    pub resize_ratio: f64,
}

impl Observed {
    /// Sum of squared log errors against `targets`, each scaled by its tolerance.
    pub fn loss(&self, targets: &CalibrationTargets) -> f64 {
        let sq = |x: f64, t: f64, tol: f64| ((x / t).ln() / (1.0 + tol).ln()).powi(2);
        let acc = targets.accumulated_tolerance;
        let terms = [
            sq(self.baseline_accumulated, targets.baseline_accumulated, acc),
            sq(self.merge_accumulated, targets.merge_accumulated, acc),
            sq(
                self.resize_ratio,
                targets.resize_ratio,
                targets.ratio_tolerance,
            ),
        ];
        if terms.iter().all(|t| t.is_finite()) {
            terms.iter().sum()
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub params: CostParams,
    pub observed: Observed,
    pub targets: CalibrationTargets,
    pub loss: f64,
    pub evaluations: usize,
}

/// Runs the synchronous Baseline and Merge experiments under `cost`.
pub fn evaluate(config: &RunConfig, cost: &CostParams, profiles: &ProfileSet) -> Result<Observed> {
    let result = run_experiment(config, &[Variant::Baseline, Variant::Merge], cost, profiles)?;
    let b = &result.aggregates[&Variant::Baseline];
    let m = &result.aggregates[&Variant::Merge];
    Ok(Observed {
        baseline_accumulated: b.accumulated_resize_time,
        merge_accumulated: m.accumulated_resize_time,
        resize_ratio: b.median_resize_time / m.median_resize_time,
    })
}

/// Extent of the parameter search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Search {
    /// Grid points along each log axis.
    pub grid: usize,
    /// Best grid points refined by compass search.
    pub refined: usize,
}

impl Default for Search {
    fn default() -> Self {
        Self {
            grid: 10,
            refined: 3,
        }
    }
}

fn with_log_params(base: &CostParams, x: [f64; 3]) -> CostParams {
    CostParams {
        spawn_fixed: x[0].exp(),
        spawn_per_rank: x[1].exp(),
        redist_bandwidth: x[2].exp(),
        ..base.clone()
    }
}

/// Fits the three cost parameters; the remaining fields of `base` are kept.
pub fn calibrate(
    config: &RunConfig,
    base: &CostParams,
    targets: &CalibrationTargets,
    search: Search,
    profiles: &ProfileSet,
) -> Result<CalibrationOutcome> {
    let mut evaluations = 0;
    let mut score = |x: [f64; 3]| -> Result<(f64, Observed)> {
        evaluations += 1;
        let observed = evaluate(config, &with_log_params(base, x), profiles)?;
        Ok((observed.loss(targets), observed))
    };

    // Log-spaced grid; the resize statistics respond to the schedule, so the
    // surface is rough and a few of the best grid points are refined.
    let axis = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64)
            .collect()
    };
    let mut grid = Vec::new();
    let n = search.grid.max(2);
    for f in axis(0.1, 10.0, n) {
        for p in axis(1e-4, 1e-1, n) {
            for b in axis(1e8, 1e11, n) {
                let x = [f, p, b];
                let (loss, obs) = score(x)?;
                grid.push((loss, x, obs));
            }
        }
    }
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut best = grid[0];
    for &(loss, x, obs) in grid.iter().take(search.refined.max(1)) {
        let mut here = (loss, x, obs);
        let mut step = 0.5;
        while step > 1e-3 {
            let mut improved = false;
            for axis in 0..3 {
                for sign in [1.0, -1.0] {
                    let mut x = here.1;
                    x[axis] += sign * step;
                    let (loss, obs) = score(x)?;
                    if loss < here.0 {
                        here = (loss, x, obs);
                        improved = true;
                    }
                }
            }
            if !improved {
                step /= 2.0;
            }
        }
        if here.0 < best.0 {
            best = here;
        }
    }

    Ok(CalibrationOutcome {
        params: with_log_params(base, best.1),
        observed: best.2,
        targets: *targets,
        loss: best.0,
        evaluations,
    })
}
