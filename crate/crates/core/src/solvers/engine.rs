use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{FinalBatchPolicy, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::prox::ProxOperator;
use crate::rng::{make_rng, RandomSource};
use crate::schedules::{lambda_next_fista, lambda_next_sc, momentum_fista, momentum_sc};

/// Gap evaluator used for early stopping.
pub type GapFn<'a> = &'a (dyn Fn(&DenseVector) -> f64 + Sync);

/// Why a run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    BudgetExhausted,
    MaxIterations,
    Converged,
    InnerFailure,
}

/// State after `k` completed iterations; `y` is the latest prox-gradient point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub k: u64,
    pub cum_samples: u64,
    pub cum_prox: u64,
    pub cum_inner: u64,
    /// λ in force for the next iteration (0 for methods without momentum).
    pub lambda: f64,
    pub y: DenseVector,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub solver: String,
    pub records: Vec<Record>,
    pub status: Status,
    pub iterations: u64,
    pub cum_samples: u64,
    pub cum_prox: u64,
    pub cum_inner: u64,
    pub final_point: DenseVector,
    /// Run-time constants worth reporting, such as estimated inner constants.
    pub diagnostics: BTreeMap<String, f64>,
    /// Message of the error behind an inner failure.
    pub failure: Option<String>,
}

/// One inexact gradient together with its cost.
pub(crate) struct Estimate {
    pub gradient: DenseVector,
    pub samples: u64,
    pub prox_evals: u64,
    pub inner_steps: u64,
}

pub(crate) trait GradientEstimator {
    /// Gradient at `x` for outer iteration `k` using `n` samples from `rng`.
    fn estimate(&mut self, k: u64, x: &DenseVector, n: u64, rng: &RandomSource) -> Result<Estimate>;

    fn diagnostics(&self) -> Vec<(String, f64)> {
        Vec::new()
    }
}

pub(crate) enum Momentum {
    None,
    StronglyConvex { kappa: f64 },
    Fista,
}

pub(crate) struct Outer<'a> {
    pub name: String,
    pub config: &'a SolverConfig,
    pub x0: DenseVector,
    pub momentum: Momentum,
    pub lambda1: f64,
    pub step: Box<dyn Fn(u64) -> Result<f64> + 'a>,
    pub batch: Box<dyn Fn(u64) -> Result<u64> + 'a>,
    pub prox: Arc<dyn ProxOperator>,
    pub stop: Option<GapFn<'a>>,
}

/// Smallest condition number the strongly convex recursion accepts.
pub(crate) fn clamp_kappa(kappa: f64) -> f64 {
    kappa.max(1.0 + 1e-9)
}

pub(crate) fn run_outer(outer: Outer<'_>, estimator: &mut dyn GradientEstimator) -> Result<Trajectory> {
    let cfg = outer.config;
    let root = make_rng(cfg.seed, 0);
    let start = Instant::now();
    let clock = || {
        if cfg.record_wall_time {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        }
    };

    let first = (outer.batch)(1)?;
    if first > cfg.budget {
        return Err(Error::param(format!(
            "budget {} is smaller than the first batch {first}",
            cfg.budget
        )));
    }

    let mut x = outer.x0.clone();
    let mut y = outer.x0;
    let mut lambda = outer.lambda1;
    let (mut samples, mut prox, mut inner) = (0u64, 0u64, 0u64);
    let mut failure = None;
    let snapshot = |k, s, p, i, lambda, y: &DenseVector, t| Record {
        k,
        cum_samples: s,
        cum_prox: p,
        cum_inner: i,
        lambda,
        y: y.clone(),
        elapsed_ms: t,
    };
    let mut records = vec![snapshot(0, 0, 0, 0, lambda, &y, clock())];
    let mut last = None;
    let mut k = 1u64;

    let status = loop {
        if k > cfg.max_iterations {
            break Status::MaxIterations;
        }
        let remaining = cfg.budget.saturating_sub(samples);
        if remaining == 0 {
            break Status::BudgetExhausted;
        }
        let mut n = (outer.batch)(k)?;
        if n > remaining {
            match cfg.final_batch {
                FinalBatchPolicy::Truncate => n = remaining,
                FinalBatchPolicy::Skip => break Status::BudgetExhausted,
                FinalBatchPolicy::Overshoot => {}
            }
        }
        let est = match estimator.estimate(k, &x, n, &root.substream(k)) {
            Ok(e) => e,
            Err(e @ Error::Convergence { .. }) => {
                failure = Some(e.to_string());
                break Status::InnerFailure;
            }
            Err(e) => return Err(e),
        };
        let gamma = (outer.step)(k)?;
        let y_next = outer.prox.prox(&DenseVector::lincomb(1.0, &x, -gamma, &est.gradient), gamma)?;
        if !y_next.is_finite() {
            return Err(Error::Convergence {
                what: format!("{} iterate", outer.name),
                iterations: k as usize,
                residual: f64::INFINITY,
            });
        }
        let beta = match outer.momentum {
            Momentum::None => 0.0,
            Momentum::StronglyConvex { kappa } => {
                let next = lambda_next_sc(lambda, kappa)?;
                let b = momentum_sc(lambda, next, kappa);
                lambda = next;
                b
            }
            Momentum::Fista => {
                let next = lambda_next_fista(lambda);
                let b = momentum_fista(lambda, next);
                lambda = next;
                b
            }
        };
        x = if beta == 0.0 {
            y_next.clone()
        } else {
            let mut v = y_next.scale(1.0 + beta);
            v.axpy(-beta, &y);
            v
        };
        y = y_next;
        samples = samples.saturating_add(est.samples);
        prox += 1 + est.prox_evals;
        inner += est.inner_steps;

        let rec = snapshot(k, samples, prox, inner, lambda, &y, clock());
        if k.is_multiple_of(cfg.record_every) {
            records.push(rec);
            last = None;
        } else {
            last = Some(rec);
        }
        if let (Some(stop), Some(target)) = (outer.stop, cfg.stop_gap) {
            if stop(&y) <= target {
                break Status::Converged;
            }
        }
        k += 1;
    };
    if let Some(rec) = last {
        records.push(rec);
    }
    let iterations = records.last().map_or(0, |r| r.k);
    Ok(Trajectory {
        solver: outer.name,
        records,
        status,
        iterations,
        cum_samples: samples,
        cum_prox: prox,
        cum_inner: inner,
        final_point: y,
        diagnostics: estimator.diagnostics().into_iter().collect(),
        failure,
    })
}
