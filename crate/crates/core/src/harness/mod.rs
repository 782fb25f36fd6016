//! Experiment drivers behind the `bsl` binary.

pub mod emit;
pub mod experiments;
pub mod fuzz;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::domains::DomainSpec;
use crate::error::{Error, Result};
use crate::metrics::MetricKind;
use crate::reduction::ReductionTheorem;

pub use experiments::{bound_validate, gauss_proj_run, particle_run, reproduce, vi_demo, Filter};
pub use fuzz::{reduction_fuzz, FuzzReport, FuzzTrial};

/// Slack allowed between a measured distance and its bound.
pub const VIOLATION_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    ReproduceCase1,
    ReproduceCase2,
    ReproduceCase3,
    BoundValidate,
    ReductionFuzz,
    ViDemo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainOverride {
    pub lower: f64,
    pub upper: f64,
    pub grid_points: usize,
}

impl DomainOverride {
    pub fn to_domain(&self) -> Result<DomainSpec> {
        DomainSpec::new(self.lower, self.upper, self.grid_points)
    }
}

fn default_steps() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub filter: Option<Filter>,
    #[serde(default)]
    pub theorem: Option<ReductionTheorem>,
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub particles: Option<usize>,
    #[serde(default)]
    pub domain: Option<DomainOverride>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            steps: default_steps(),
            seed: 0,
            filter: None,
            theorem: None,
            trials: None,
            particles: None,
            domain: None,
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.experiment == Experiment::BoundValidate && self.filter.is_none() {
            return Err(Error::Config("bound_validate needs a filter".into()));
        }
        if self.experiment == Experiment::ReductionFuzz && self.theorem.is_none() {
            return Err(Error::Config("reduction_fuzz needs a theorem".into()));
        }
        if let Some(d) = &self.domain {
            d.to_domain().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    /// Output file group, e.g. `case1` or `set2`.
    pub series: String,
    pub step: usize,
    pub metric: MetricKind,
    pub distance: f64,
    pub bound: f64,
    pub evidence_p: f64,
    pub evidence_q: f64,
}

impl RunRow {
    pub fn violates(&self) -> bool {
        !(self.distance <= self.bound + VIOLATION_SLACK)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub rows: Vec<RunRow>,
    pub violations: usize,
    pub metadata: serde_json::Value,
}

impl RunRecord {
    pub fn new(experiment: &str, rows: Vec<RunRow>, metadata: serde_json::Value) -> Self {
        let violations = rows.iter().filter(|r| r.violates()).count();
        Self { experiment: experiment.to_string(), rows, violations, metadata }
    }

    /// Rows grouped by `(series, metric)` in first-appearance order.
    pub fn groups(&self) -> Vec<((String, MetricKind), Vec<&RunRow>)> {
        let mut out: Vec<((String, MetricKind), Vec<&RunRow>)> = Vec::new();
        for r in &self.rows {
            let key = (r.series.clone(), r.metric);
            match out.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(r),
                None => out.push((key, vec![r])),
            }
        }
        out
    }
}

/// What a configured run produced.
#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Record(RunRecord),
    Fuzz(FuzzReport),
}

impl RunOutcome {
    pub fn violations(&self) -> usize {
        match self {
            RunOutcome::Record(r) => r.violations,
            RunOutcome::Fuzz(f) => f.violations,
        }
    }
}

/// Runs a configuration and, if it names an output directory, writes the
/// CSV, SVG and metadata files there.
pub fn run_config(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let outcome = match cfg.experiment {
        Experiment::ReproduceCase1 => RunOutcome::Record(reproduce(1, cfg.steps, cfg.seed)?),
        Experiment::ReproduceCase2 => RunOutcome::Record(reproduce(2, cfg.steps, cfg.seed)?),
        Experiment::ReproduceCase3 => RunOutcome::Record(reproduce(3, cfg.steps, cfg.seed)?),
        Experiment::BoundValidate => RunOutcome::Record(bound_validate(
            cfg.filter.expect("validated"),
            cfg.steps,
            cfg.seed,
            cfg.domain.as_ref(),
            cfg.particles,
        )?),
        Experiment::ReductionFuzz => {
            RunOutcome::Fuzz(reduction_fuzz(cfg.theorem.expect("validated"), cfg.trials.unwrap_or(1000), cfg.seed)?)
        }
        Experiment::ViDemo => RunOutcome::Record(vi_demo(cfg.steps, cfg.seed)?),
    };
    if let Some(dir) = &cfg.output_dir {
        match &outcome {
            RunOutcome::Record(r) => {
                emit::write_all(r, dir)?;
            }
            RunOutcome::Fuzz(f) => emit::write_json(f, &dir.join("fuzz.json"))?,
        }
    }
    Ok(outcome)
}

/// Independent stream seed `stream` of a run seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let c = ExperimentConfig::from_json(r#"{"experiment": "reproduce_case2", "seed": 4}"#).unwrap();
        assert_eq!(c.steps, 20);
        assert_eq!(c.experiment, Experiment::ReproduceCase2);
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"experiment": "reproduce_case2", "steps": 0}"#),
            Err(Error::Config(_))
        ));
        assert!(ExperimentConfig::from_json(r#"{"experiment": "bound_validate"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiment": "vi_demo", "colour": 1}"#).is_err());
        let c = ExperimentConfig::from_json(
            r#"{"experiment": "bound_validate", "filter": "gauss_proj", "domain": {"lower": -5, "upper": 5, "grid_points": 101}}"#,
        )
        .unwrap();
        assert_eq!(c.filter, Some(Filter::GaussProj));
    }

    #[test]
    fn violations_counted_with_slack() {
        let row = |d: f64, b: f64| RunRow {
            series: "s".into(),
            step: 1,
            metric: MetricKind::Tv,
            distance: d,
            bound: b,
            evidence_p: 1.0,
            evidence_q: 1.0,
        };
        let r = RunRecord::new("t", vec![row(0.5, 0.5), row(0.5 + 5e-10, 0.5), row(0.6, 0.5), row(0.1, f64::NAN)], serde_json::Value::Null);
        assert_eq!(r.violations, 2);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(9, 3), derive_seed(9, 3));
    }
}
