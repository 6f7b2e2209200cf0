//! The ways an outer iteration obtains its gradient.

use std::sync::Arc;

use super::engine::{clamp_kappa, Estimate, GradientEstimator};
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::oracle::{
    batch_gradient_with, batch_mean_scenario, GradientKind, SamplingOptions, Scenario, StochasticProblem,
};
use crate::prox::{prox_sum_fixed_point, ProxOperator, DEFAULT_FIXED_POINT_MAX_ITER};
use crate::rng::RandomSource;
use crate::schedules::{geometric_rate, lambda_next_sc, momentum_sc, smoothing_param, ScheduleSpec};

/// Mean of `n` sampled (sub)gradients, optionally smoothed at `η_k`.
pub(crate) struct BatchGradient<'a> {
    pub problem: &'a dyn StochasticProblem,
    pub smoothing: Option<ScheduleSpec>,
    pub opts: SamplingOptions,
}

impl GradientEstimator for BatchGradient<'_> {
    fn estimate(&mut self, k: u64, x: &DenseVector, n: u64, rng: &RandomSource) -> Result<Estimate> {
        let kind = match &self.smoothing {
            Some(spec) => GradientKind::Smoothed(smoothing_param(spec, k)?),
            None => GradientKind::Subgradient,
        };
        Ok(Estimate {
            gradient: batch_gradient_with(self.problem, x, kind, n, rng, self.opts)?,
            samples: n,
            prox_evals: 0,
            inner_steps: 0,
        })
    }
}

/// Tolerance of the fixed-point composition used when `g` is nonzero.
const COMPOSITE_TOL: f64 = 1e-12;

/// The SAA function of one drawn batch, as a prox operator.
struct FrozenSaa<'a> {
    problem: &'a dyn StochasticProblem,
    mean: Scenario,
}

impl ProxOperator for FrozenSaa<'_> {
    fn name(&self) -> String {
        format!("saa({})", self.problem.meta().name)
    }
    fn prox(&self, y: &DenseVector, eta: f64) -> Result<DenseVector> {
        self.problem.saa_prox(y, eta, &self.mean)
    }
    fn value(&self, x: &DenseVector) -> f64 {
        self.problem.value(x, &self.mean)
    }
}

/// `(x − P_{η, f̄_N + g}(x))/η` with the SAA prox in closed form.
pub(crate) struct SaaProx<'a> {
    pub problem: &'a dyn StochasticProblem,
    pub eta: f64,
    pub g: Arc<dyn ProxOperator>,
    pub opts: SamplingOptions,
}

impl GradientEstimator for SaaProx<'_> {
    fn estimate(&mut self, _k: u64, x: &DenseVector, n: u64, rng: &RandomSource) -> Result<Estimate> {
        let mean = batch_mean_scenario(self.problem, n, rng, self.opts)?;
        let (u, evals) = if self.g.is_zero() {
            (self.problem.saa_prox(x, self.eta, &mean)?, 1)
        } else {
            let saa = FrozenSaa {
                problem: self.problem,
                mean,
            };
            let out = prox_sum_fixed_point(&saa, &*self.g, x, self.eta, COMPOSITE_TOL, DEFAULT_FIXED_POINT_MAX_ITER)?;
            (out.point, 2 * out.iterations as u64)
        };
        Ok(Estimate {
            gradient: DenseVector::lincomb(1.0 / self.eta, x, -1.0 / self.eta, &u),
            samples: n,
            prox_evals: evals,
            inner_steps: 0,
        })
    }
}

/// Inexact prox by `n` proximal stochastic subgradient steps on
/// `E f(u, ω) + g(u) + ||u − x||²/(2η)`.
pub(crate) struct InnerSgd<'a> {
    pub problem: &'a dyn StochasticProblem,
    pub eta: f64,
    pub mu: f64,
    pub g: Arc<dyn ProxOperator>,
    pub warm_start: bool,
    pub step_scale: f64,
    pub previous: Option<DenseVector>,
}

impl GradientEstimator for InnerSgd<'_> {
    fn estimate(&mut self, _k: u64, x: &DenseVector, n: u64, rng: &RandomSource) -> Result<Estimate> {
        let modulus = self.mu + 1.0 / self.eta;
        let mut u = match (&self.previous, self.warm_start) {
            (Some(p), true) => p.clone(),
            _ => x.clone(),
        };
        let g_zero = self.g.is_zero();
        for j in 0..n {
            let s = self.problem.sample(&mut rng.substream(j));
            let mut d = self.problem.subgradient(&u, &s);
            d.axpy(1.0 / self.eta, &(&u - x));
            let step = self.step_scale / (modulus * (j + 1) as f64);
            let moved = DenseVector::lincomb(1.0, &u, -step, &d);
            u = if g_zero { moved } else { self.g.prox(&moved, step)? };
        }
        let gradient = DenseVector::lincomb(1.0 / self.eta, x, -1.0 / self.eta, &u);
        self.previous = Some(u);
        Ok(Estimate {
            gradient,
            samples: n,
            prox_evals: if g_zero { 0 } else { n },
            inner_steps: n,
        })
    }
}

/// Inexact prox by deterministic accelerated steps on the SAA subproblem
/// `f(u, s̄_N) + g(u) + ||u − x||²/(2η)`, run for
/// `v_k = ⌈log(D̂ N_k / ν) / log(1/β)⌉` iterations.
pub(crate) struct NestedVsApm<'a> {
    pub problem: &'a dyn StochasticProblem,
    pub eta: f64,
    pub l: f64,
    pub mu: f64,
    pub a: f64,
    pub g: Arc<dyn ProxOperator>,
    pub warm_start: bool,
    pub max_steps: u64,
    pub d_hat: Option<f64>,
    pub nu: f64,
    pub opts: SamplingOptions,
    pub previous: Option<DenseVector>,
}

impl NestedVsApm<'_> {
    fn constants(&self) -> (f64, f64, f64) {
        let l_hat = self.l + 1.0 / self.eta;
        let mu_hat = self.mu + 1.0 / self.eta;
        (l_hat, mu_hat, clamp_kappa(l_hat / mu_hat))
    }

    /// Inner iteration count for a batch of `n`.
    pub fn inner_count(&self, d_hat: f64, n: u64) -> Result<u64> {
        let (_, _, kappa) = self.constants();
        let beta = geometric_rate(kappa, self.a)?;
        let ratio = d_hat * n as f64 / self.nu;
        let v = (ratio.ln() / (1.0 / beta).ln()).ceil();
        Ok(if v.is_finite() && v >= 1.0 {
            (v as u64).min(self.max_steps)
        } else if v.is_finite() {
            1
        } else {
            self.max_steps
        })
    }
}

impl GradientEstimator for NestedVsApm<'_> {
    fn estimate(&mut self, _k: u64, x: &DenseVector, n: u64, rng: &RandomSource) -> Result<Estimate> {
        let mean = batch_mean_scenario(self.problem, n, rng, self.opts)?;
        let (l_hat, mu_hat, kappa) = self.constants();
        let grad = |u: &DenseVector| {
            let mut d = self.problem.subgradient(u, &mean);
            d.axpy(1.0 / self.eta, &(u - x));
            d
        };
        let start = match (&self.previous, self.warm_start) {
            (Some(p), true) => p.clone(),
            _ => x.clone(),
        };
        let d_hat = match self.d_hat {
            Some(d) => d,
            None => {
                let d = (grad(&start).norm_sq() / (2.0 * mu_hat)).max(f64::MIN_POSITIVE);
                self.d_hat = Some(d);
                d
            }
        };
        let v = self.inner_count(d_hat, n)?;
        let gamma = 1.0 / (2.0 * l_hat);
        let g_zero = self.g.is_zero();
        let mut lambda = kappa.sqrt();
        let (mut u, mut w) = (start.clone(), start);
        for _ in 0..v {
            let moved = DenseVector::lincomb(1.0, &w, -gamma, &grad(&w));
            let u_next = if g_zero { moved } else { self.g.prox(&moved, gamma)? };
            let next = lambda_next_sc(lambda, kappa)?;
            let b = momentum_sc(lambda, next, kappa);
            lambda = next;
            let mut w_next = u_next.scale(1.0 + b);
            w_next.axpy(-b, &u);
            w = w_next;
            u = u_next;
        }
        if !u.is_finite() {
            return Err(Error::Convergence {
                what: "nested inner solve".into(),
                iterations: v as usize,
                residual: f64::INFINITY,
            });
        }
        let gradient = DenseVector::lincomb(1.0 / self.eta, x, -1.0 / self.eta, &u);
        self.previous = Some(u);
        Ok(Estimate {
            gradient,
            samples: n,
            prox_evals: v,
            inner_steps: v,
        })
    }

    fn diagnostics(&self) -> Vec<(String, f64)> {
        let (l_hat, mu_hat, kappa) = self.constants();
        let mut out = vec![
            ("inner_l".into(), l_hat),
            ("inner_mu".into(), mu_hat),
            ("inner_kappa".into(), kappa),
            ("inner_nu".into(), self.nu),
        ];
        if let Some(d) = self.d_hat {
            out.push(("inner_d_hat".into(), d));
        }
        out
    }
}
