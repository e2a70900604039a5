//! Iteration-time profiles and the efficiency figures derived from them.
//!
//! A profile maps node counts to measured seconds per iteration, starting at
//! the smallest node count that can hold the problem (`base_nodes`). Speedup
//! and efficiency are both anchored at that base configuration, so
//! `efficiency(base_nodes) == 1` for every profile.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::JobType;

const DEFAULT_TABLE: &str = include_str!("../data/iteration_times.csv");

#[derive(Debug, Clone, PartialEq)]
pub struct ScalabilityProfile {
    jtype: JobType,
    base_nodes: u32,
    samples: BTreeMap<u32, f64>,
}

impl ScalabilityProfile {
    pub fn new(jtype: JobType, samples: BTreeMap<u32, f64>) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidProfile { jtype, reason };
        let (&base_nodes, _) = samples
            .first_key_value()
            .ok_or_else(|| invalid("no samples".into()))?;
        if base_nodes == 0 {
            return Err(invalid("node counts start at 1".into()));
        }
        for (expected, (&nodes, &secs)) in (base_nodes..).zip(&samples) {
            if nodes != expected {
                return Err(invalid(format!("gap in node counts before {nodes}")));
            }
            if !(secs.is_finite() && secs > 0.0) {
                return Err(invalid(format!("non-positive time at {nodes} nodes")));
            }
        }
        Ok(Self {
            jtype,
            base_nodes,
            samples,
        })
    }

    pub fn jtype(&self) -> JobType {
        self.jtype
    }

    pub fn base_nodes(&self) -> u32 {
        self.base_nodes
    }

    pub fn max_sampled_nodes(&self) -> u32 {
        *self
            .samples
            .keys()
            .next_back()
            .expect("profile is non-empty")
    }

    pub fn samples(&self) -> &BTreeMap<u32, f64> {
        &self.samples
    }

    /// Seconds per iteration on `nodes` nodes. Counts above the last sample
    /// reuse the last sampled time.
    pub fn iteration_time(&self, nodes: u32) -> Result<f64> {
        if nodes < self.base_nodes {
            return Err(Error::BelowMinimum {
                jtype: self.jtype,
                nodes,
                min: self.base_nodes,
            });
        }
        let (_, &secs) = self
            .samples
            .range(..=nodes)
            .next_back()
            .expect("base sample is always in range");
        Ok(secs)
    }

    /// `T0 / Ti`.
    pub fn speedup(&self, nodes: u32) -> Result<f64> {
        let base = self.iteration_time(self.base_nodes)?;
        Ok(base / self.iteration_time(nodes)?)
    }

    /// Speedup divided by the node ratio `Ni / N0`.
    pub fn efficiency(&self, nodes: u32) -> Result<f64> {
        let speedup = self.speedup(nodes)?;
        Ok(speedup / (f64::from(nodes) / f64::from(self.base_nodes)))
    }

    /// Largest node count reached from `base_nodes` without the efficiency
    /// ever dropping below the base efficiency.
    pub fn static_max_nodes(&self) -> u32 {
        let mut best = self.base_nodes;
        for &nodes in self.samples.keys().skip(1) {
            match self.efficiency(nodes) {
                Ok(e) if e >= 1.0 => best = nodes,
                _ => break,
            }
        }
        best
    }

    /// Efficiency at every sampled node count, in node order.
    pub fn efficiency_series(&self) -> Vec<(u32, f64)> {
        self.samples
            .keys()
            .map(|&n| (n, self.efficiency(n).expect("sampled counts are valid")))
            .collect()
    }
}

/// Min-max normalization of an efficiency series onto `[0, 1]`.
pub fn normalized_efficiency(series: &[f64]) -> Result<Vec<f64>> {
    let min = series.iter().copied().fold(f64::INFINITY, f64::min);
    let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if series.is_empty() {
        return Err(Error::DegenerateSeries(f64::NAN));
    }
    if max == min {
        return Err(Error::DegenerateSeries(min));
    }
    Ok(series.iter().map(|e| (e - min) / (max - min)).collect())
}

#[derive(Debug, Deserialize)]
struct Record {
    jtype: String,
    nodes: u32,
    seconds: f64,
}

/// One profile per job type.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    profiles: BTreeMap<JobType, ScalabilityProfile>,
}

impl Default for ProfileSet {
    fn default() -> Self {
        Self::from_csv_str(DEFAULT_TABLE, Path::new("<builtin>"))
            .expect("built-in iteration table is valid")
    }
}

impl ProfileSet {
    pub fn get(&self, jtype: JobType) -> Result<&ScalabilityProfile> {
        self.profiles
            .get(&jtype)
            .ok_or(Error::MissingProfile(jtype))
    }

    pub fn iter(&self) -> impl Iterator<Item = &ScalabilityProfile> {
        self.profiles.values()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text, path)
    }

    /// Parses `jtype,nodes,seconds` records.
    pub fn from_csv_str(text: &str, origin: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut grouped: BTreeMap<JobType, BTreeMap<u32, f64>> = BTreeMap::new();
        for (row, record) in reader.deserialize::<Record>().enumerate() {
            let line = row + 2;
            let record =
                record.map_err(|e| Error::malformed(origin, format!("line {line}: {e}")))?;
            let jtype: JobType = record
                .jtype
                .parse()
                .map_err(|e| Error::malformed(origin, format!("line {line}: {e}")))?;
            if grouped
                .entry(jtype)
                .or_default()
                .insert(record.nodes, record.seconds)
                .is_some()
            {
                return Err(Error::malformed(
                    origin,
                    format!(
                        "line {line}: duplicate {jtype} sample at {} nodes",
                        record.nodes
                    ),
                ));
            }
        }
        let profiles = grouped
            .into_iter()
            .map(|(jtype, samples)| Ok((jtype, ScalabilityProfile::new(jtype, samples)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Self { profiles })
    }
}
