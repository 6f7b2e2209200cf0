use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedules::{ScheduleRole, ScheduleSpec};

fn default_budget() -> u64 {
    100_000
}
fn default_max_iterations() -> u64 {
    10_000_000
}
fn default_a() -> f64 {
    2.01
}
fn default_record_every() -> u64 {
    1
}
fn yes() -> bool {
    true
}
fn one() -> f64 {
    1.0
}
fn default_inner_cap() -> u64 {
    1_000_000
}

/// What happens when the next batch would overrun the sample budget.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinalBatchPolicy {
    /// Shrink the batch to the remaining budget.
    Truncate,
    /// Stop without running the iteration.
    Skip,
    /// Run the full batch, then stop.
    #[default]
    Overshoot,
}

/// Settings for the inner solvers of the η-variants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerConfig {
    /// Start each inner solve from the previous inner solution rather than the anchor.
    pub warm_start: bool,
    /// Multiplies the inner SGD step `1/((μ + 1/η) j)`.
    pub step_scale: f64,
    /// Hard ceiling on inner iterations per outer step.
    pub max_steps: u64,
    /// Overrides the initial-gap estimate of the nested variant.
    pub d_hat: Option<f64>,
    /// Overrides the gradient-noise level used by the nested variant.
    pub nu: Option<f64>,
}

impl Default for InnerConfig {
    fn default() -> Self {
        InnerConfig {
            warm_start: true,
            step_scale: 1.0,
            max_steps: default_inner_cap(),
            d_hat: None,
            nu: None,
        }
    }
}

/// Options shared by every solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Sample budget `M`.
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u64,
    #[serde(default)]
    pub step: Option<ScheduleSpec>,
    #[serde(default)]
    pub batch: Option<ScheduleSpec>,
    #[serde(default)]
    pub smoothing: Option<ScheduleSpec>,
    /// Geometric-rate parameter in `ρ = 1 − 1/(a√κ)`.
    #[serde(default = "default_a")]
    pub a: f64,
    /// Initial λ of the strongly convex recursion; defaults to `√κ`.
    #[serde(default)]
    pub lambda1: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Starting point; defaults to the origin.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub inner: InnerConfig,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default)]
    pub final_batch: FinalBatchPolicy,
    /// Stop once the attached gap evaluator reports at most this value.
    #[serde(default)]
    pub stop_gap: Option<f64>,
    /// Fill `elapsed_ms`; off keeps trajectories bit-reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
    /// Draw batch means from their exact law when the problem allows it.
    #[serde(default = "yes")]
    pub aggregate_sampling: bool,
    /// `c` in the constant SGD step `c/√M` used when `μ = 0`.
    #[serde(default = "one")]
    pub sgd_scale: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

fn check_role(spec: &Option<ScheduleSpec>, role: ScheduleRole, field: &str) -> Result<()> {
    if let Some(s) = spec {
        if s.role() != role {
            return Err(Error::param(format!("`{field}` holds a {:?} schedule", s.role())));
        }
        s.validate()?;
    }
    Ok(())
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::param("sample budget must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations must be positive"));
        }
        if self.record_every == 0 {
            return Err(Error::param("record_every must be positive"));
        }
        if !(self.a > 1.0) {
            return Err(Error::param(format!("rate parameter a must exceed 1, got {}", self.a)));
        }
        if !(self.sgd_scale > 0.0) {
            return Err(Error::param("sgd_scale must be positive"));
        }
        if !(self.inner.step_scale > 0.0) || self.inner.max_steps == 0 {
            return Err(Error::param("inner step scale and step cap must be positive"));
        }
        if let Some(d) = self.inner.d_hat {
            if !(d > 0.0) {
                return Err(Error::param("inner d_hat must be positive"));
            }
        }
        if let Some(nu) = self.inner.nu {
            if !(nu > 0.0) {
                return Err(Error::param("inner nu must be positive"));
            }
        }
        check_role(&self.step, ScheduleRole::Step, "step")?;
        check_role(&self.batch, ScheduleRole::Batch, "batch")?;
        check_role(&self.smoothing, ScheduleRole::Smoothing, "smoothing")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = SolverConfig::default();
        assert_eq!(c.budget, 100_000);
        assert_eq!(c.a, 2.01);
        assert!(c.inner.warm_start);
        let back: SolverConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        c.validate().unwrap();
    }

    #[test]
    fn misplaced_schedule_is_rejected() {
        let c = SolverConfig {
            step: Some(ScheduleSpec::PolynomialBatch { a: 2.0, cap: None }),
            ..SolverConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(serde_json::from_str::<SolverConfig>(r#"{"budgett": 3}"#).is_err());
    }
}
