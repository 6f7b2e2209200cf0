//! Stochastic first-order oracles and the built-in problem library.
//!
//! A batch of `N` scenarios drawn for one iteration lives on a single
//! [`RandomSource`]; scenario `j` is generated from `rng.substream(j)`. Batch
//! means are reduced in fixed chunks of [`CHUNK`] scenarios, each summed in
//! index order, and the chunk sums are combined in chunk order. The result is
//! therefore independent of the number of worker threads.

mod example1;
mod gaussian;
mod quadratic;
mod spec;
mod utility;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{matvec, DenseVector, Matrix};
use crate::prox::ProxOperator;
use crate::rng::RandomSource;

pub use example1::{make_example1, Example1, Example1Params};
pub use gaussian::{expected_max_of_affine, upper_envelope, EnvelopePiece, ExpectedMax};
pub use quadratic::{
    make_example2, make_illconditioned, make_least_squares, Example2Params, QuadraticParams, QuadraticProblem,
};
pub use spec::ProblemSpec;
pub use utility::{make_utility_problem, UtilityParams, UtilityProblem};

/// Scenarios per reduction chunk.
pub const CHUNK: u64 = 4096;
/// Batches at least this large are reduced on the rayon pool.
pub const PARALLEL_THRESHOLD: u64 = 4 * CHUNK;

/// One realization of the random data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scenario {
    Example1 {
        alpha: f64,
        beta: DenseVector,
        lambda: f64,
    },
    /// Perturbation of the mean quadratic data. `hessian_noise` is row-major.
    Quadratic {
        hessian_noise: Option<Vec<f64>>,
        beta_noise: DenseVector,
        lambda_noise: f64,
    },
    Utility { omega: DenseVector },
}

impl Scenario {
    fn add_assign(&mut self, other: &Scenario) {
        match (self, other) {
            (
                Scenario::Example1 { alpha, beta, lambda },
                Scenario::Example1 {
                    alpha: a2,
                    beta: b2,
                    lambda: l2,
                },
            ) => {
                *alpha += a2;
                beta.axpy(1.0, b2);
                *lambda += l2;
            }
            (
                Scenario::Quadratic {
                    hessian_noise,
                    beta_noise,
                    lambda_noise,
                },
                Scenario::Quadratic {
                    hessian_noise: h2,
                    beta_noise: b2,
                    lambda_noise: l2,
                },
            ) => {
                if let (Some(h), Some(h2)) = (hessian_noise.as_mut(), h2.as_ref()) {
                    for (a, b) in h.iter_mut().zip(h2) {
                        *a += b;
                    }
                }
                beta_noise.axpy(1.0, b2);
                *lambda_noise += l2;
            }
            (Scenario::Utility { omega }, Scenario::Utility { omega: o2 }) => omega.axpy(1.0, o2),
            _ => unreachable!("scenario kinds are fixed per problem"),
        }
    }

    fn scale(&mut self, f: f64) {
        match self {
            Scenario::Example1 { alpha, beta, lambda } => {
                *alpha *= f;
                *beta = beta.scale(f);
                *lambda *= f;
            }
            Scenario::Quadratic {
                hessian_noise,
                beta_noise,
                lambda_noise,
            } => {
                if let Some(h) = hessian_noise.as_mut() {
                    h.iter_mut().for_each(|v| *v *= f);
                }
                *beta_noise = beta_noise.scale(f);
                *lambda_noise *= f;
            }
            Scenario::Utility { omega } => *omega = omega.scale(f),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Scenario::Example1 { alpha, beta, lambda } => alpha.is_finite() && beta.is_finite() && lambda.is_finite(),
            Scenario::Quadratic {
                hessian_noise,
                beta_noise,
                lambda_noise,
            } => {
                hessian_noise.as_ref().is_none_or(|h| h.iter().all(|v| v.is_finite()))
                    && beta_noise.is_finite()
                    && lambda_noise.is_finite()
            }
            Scenario::Utility { omega } => omega.is_finite(),
        }
    }
}

/// Constants the solvers and rate bounds consume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemMeta {
    pub name: String,
    pub dim: usize,
    /// Strong convexity modulus of `E f` (0 if merely convex).
    pub mu: f64,
    /// Lipschitz constant of `∇E f`, when `f` is smooth.
    pub l: Option<f64>,
    /// Bound on the standard deviation of single-scenario gradients.
    pub nu: Option<f64>,
    /// Bound on subgradient norms over the domain.
    pub b: Option<f64>,
}

/// The expected objective `F = E f + g` in a form the reference solvers and
/// the error metrics can evaluate exactly.
#[derive(Clone, Debug)]
pub enum MeanModel {
    /// `α/2 ||x||² + βᵀx + λ||x||_1`
    SeparableL1 { alpha: f64, beta: DenseVector, lambda: f64 },
    /// `½ xᵀAx + bᵀx + λ||x||_1 + indicator of [lo, hi]^n`
    CompositeQuadratic {
        a: Matrix,
        b: DenseVector,
        lambda: f64,
        bounds: Option<(f64, f64)>,
    },
    /// `E max_j(v_j + s_j (c + ω)ᵀx) + μ/2 ||x||²` over `||x|| <= radius`,
    /// with `ω ~ N(0, σ² I)`.
    Utility {
        c: DenseVector,
        v: Vec<f64>,
        s: Vec<f64>,
        sigma: f64,
        mu: f64,
        radius: f64,
    },
}

const FEASIBILITY_TOL: f64 = 1e-9;

impl MeanModel {
    /// `F(x)`; `+inf` outside the domain.
    pub fn objective(&self, x: &DenseVector) -> f64 {
        match self {
            MeanModel::SeparableL1 { alpha, beta, lambda } => {
                0.5 * alpha * x.norm_sq() + beta.dot(x) + lambda * x.norm_l1()
            }
            MeanModel::CompositeQuadratic { a, b, lambda, bounds } => {
                if let Some((lo, hi)) = bounds {
                    if x.iter().any(|&v| v < lo - FEASIBILITY_TOL || v > hi + FEASIBILITY_TOL) {
                        return f64::INFINITY;
                    }
                }
                0.5 * x.dot(&matvec(a, x)) + b.dot(x) + lambda * x.norm_l1()
            }
            MeanModel::Utility {
                c,
                v,
                s,
                sigma,
                mu,
                radius,
            } => {
                let r = x.norm();
                if r > radius * (1.0 + FEASIBILITY_TOL) + FEASIBILITY_TOL {
                    return f64::INFINITY;
                }
                let pieces = upper_envelope(v, s);
                expected_max_of_affine(&pieces, c.dot(x), sigma * r).value + 0.5 * mu * r * r
            }
        }
    }
}

/// A stochastic program `min_x E[f(x, ω)] + g(x)`.
pub trait StochasticProblem: Send + Sync {
    fn meta(&self) -> &ProblemMeta;

    fn dim(&self) -> usize {
        self.meta().dim
    }

    /// Draws one scenario.
    fn sample(&self, rng: &mut RandomSource) -> Scenario;

    /// True when every draw is the same scenario.
    fn is_degenerate(&self) -> bool;

    /// `f(x, ω)`.
    fn value(&self, x: &DenseVector, s: &Scenario) -> f64;

    /// An element of `∂_x f(x, ω)`.
    fn subgradient(&self, x: &DenseVector, s: &Scenario) -> DenseVector;

    /// `f_η(x, ω)`.
    fn smoothed_value(&self, _x: &DenseVector, _s: &Scenario, _eta: f64) -> Result<f64> {
        Err(Error::Unsupported(format!("{} has no smoothed evaluator", self.meta().name)))
    }

    /// `∇f_η(x, ω)`.
    fn smoothed_gradient(&self, _x: &DenseVector, _s: &Scenario, _eta: f64) -> Result<DenseVector> {
        Err(Error::Unsupported(format!("{} has no smoothed gradient", self.meta().name)))
    }

    /// True when `f(x, ·)` is affine in the scenario parameters, so the mean of
    /// `f` over a batch equals `f` at the mean scenario.
    fn is_affine_in_scenario(&self) -> bool {
        false
    }

    /// Draws the mean of `n` scenarios directly from its exact distribution,
    /// when that distribution is available in closed form. For `n = 1` this
    /// must coincide with [`StochasticProblem::sample`] on the same source.
    fn sample_batch_mean(&self, _rng: &mut RandomSource, _n: u64) -> Option<Scenario> {
        None
    }

    /// Draws the mean of `n` per-scenario (smoothed) gradients at `x` directly
    /// from its exact distribution, when the problem can do so faster than
    /// sampling every scenario.
    fn sample_batch_gradient(
        &self,
        _x: &DenseVector,
        _kind: GradientKind,
        _rng: &mut RandomSource,
        _n: u64,
    ) -> Option<Result<DenseVector>> {
        None
    }

    /// `argmin_u f(u, s̄) + ||u − anchor||²/(2η)` for the mean scenario `s̄`
    /// of a batch. Excludes `g`.
    fn saa_prox(&self, _anchor: &DenseVector, _eta: f64, _mean: &Scenario) -> Result<DenseVector> {
        Err(Error::Unsupported(format!("{} has no closed-form SAA prox", self.meta().name)))
    }

    /// The nonsmooth term `g`.
    fn regularizer(&self) -> Arc<dyn ProxOperator>;

    /// Projection onto `dom g`.
    fn domain(&self) -> Arc<dyn ProxOperator>;

    fn mean_model(&self) -> &MeanModel;

    /// Everything that determines the problem, for fingerprinting.
    fn descriptor(&self) -> serde_json::Value;

    fn fingerprint(&self) -> String {
        let text = serde_json::to_string(&self.descriptor()).unwrap_or_default();
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

impl std::fmt::Debug for dyn StochasticProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "StochasticProblem({})", self.meta().name)
    }
}

/// How batch means are formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingOptions {
    /// Use [`StochasticProblem::sample_batch_mean`] when the problem offers it.
    pub aggregate: bool,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions { aggregate: true }
    }
}

/// Which per-scenario evaluator a batch reduction averages.
#[derive(Clone, Copy, Debug)]
pub enum GradientKind {
    Subgradient,
    Smoothed(f64),
}

fn scenario_gradient(
    problem: &dyn StochasticProblem,
    x: &DenseVector,
    s: &Scenario,
    kind: GradientKind,
) -> Result<DenseVector> {
    match kind {
        GradientKind::Subgradient => Ok(problem.subgradient(x, s)),
        GradientKind::Smoothed(eta) => problem.smoothed_gradient(x, s, eta),
    }
}

/// Sum of `eval(j)` over `j < n`, reduced in fixed chunks.
fn chunked_sum<T: Send>(
    n: u64,
    eval: impl Fn(u64) -> Result<T> + Sync,
    add: impl Fn(&mut T, &T) + Sync,
) -> Result<T> {
    let chunks = n.div_ceil(CHUNK);
    let chunk_sum = |c: u64| -> Result<T> {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        let mut acc = eval(lo)?;
        for j in lo + 1..hi {
            let term = eval(j)?;
            add(&mut acc, &term);
        }
        Ok(acc)
    };
    let partials: Vec<T> = if n >= PARALLEL_THRESHOLD {
        (0..chunks).into_par_iter().map(chunk_sum).collect::<Result<_>>()?
    } else {
        (0..chunks).map(chunk_sum).collect::<Result<_>>()?
    };
    let mut iter = partials.into_iter();
    let mut total = iter.next().expect("n >= 1");
    for p in iter {
        add(&mut total, &p);
    }
    Ok(total)
}

fn check_batch(n: u64) -> Result<()> {
    if n == 0 {
        Err(Error::param("batch size must be at least 1"))
    } else {
        Ok(())
    }
}

/// Mean of `n` per-scenario (smoothed) gradients at `x`, scenario `j` drawn
/// from `rng.substream(j)`.
pub fn batch_gradient_with(
    problem: &dyn StochasticProblem,
    x: &DenseVector,
    kind: GradientKind,
    n: u64,
    rng: &RandomSource,
    opts: SamplingOptions,
) -> Result<DenseVector> {
    check_batch(n)?;
    if problem.is_degenerate() {
        let s = problem.sample(&mut rng.substream(0));
        return scenario_gradient(problem, x, &s, kind);
    }
    if opts.aggregate && problem.is_affine_in_scenario() {
        if let Some(mean) = problem.sample_batch_mean(&mut rng.substream(0), n) {
            return scenario_gradient(problem, x, &mean, kind);
        }
    }
    if opts.aggregate {
        if let Some(g) = problem.sample_batch_gradient(x, kind, &mut rng.substream(0), n) {
            return g;
        }
    }
    let sum = chunked_sum(
        n,
        |j| {
            let s = problem.sample(&mut rng.substream(j));
            scenario_gradient(problem, x, &s, kind)
        },
        |a, b| a.axpy(1.0, b),
    )?;
    Ok(sum.scale(1.0 / n as f64))
}

/// Batch-mean gradient; smoothed at `eta` when given.
pub fn batch_gradient(
    problem: &dyn StochasticProblem,
    x: &DenseVector,
    eta: Option<f64>,
    n: u64,
    rng: &RandomSource,
) -> Result<DenseVector> {
    let kind = eta.map_or(GradientKind::Subgradient, GradientKind::Smoothed);
    batch_gradient_with(problem, x, kind, n, rng, SamplingOptions::default())
}

/// Mean of `n` scenarios. Requires a problem affine in its scenario.
pub fn batch_mean_scenario(
    problem: &dyn StochasticProblem,
    n: u64,
    rng: &RandomSource,
    opts: SamplingOptions,
) -> Result<Scenario> {
    check_batch(n)?;
    if !problem.is_affine_in_scenario() {
        return Err(Error::Unsupported(format!(
            "{} is not affine in its scenario; batch means are undefined",
            problem.meta().name
        )));
    }
    if problem.is_degenerate() {
        return Ok(problem.sample(&mut rng.substream(0)));
    }
    if opts.aggregate {
        if let Some(mean) = problem.sample_batch_mean(&mut rng.substream(0), n) {
            return Ok(mean);
        }
    }
    let mut sum = chunked_sum(n, |j| Ok(problem.sample(&mut rng.substream(j))), |a, b| a.add_assign(b))?;
    sum.scale(1.0 / n as f64);
    Ok(sum)
}

/// Exact minimizer of the SAA objective `(1/N) Σ f(u, ω_j) + ||u − anchor||²/(2η)`.
pub fn saa_prox(
    problem: &dyn StochasticProblem,
    anchor: &DenseVector,
    eta: f64,
    n: u64,
    rng: &RandomSource,
) -> Result<DenseVector> {
    let mean = batch_mean_scenario(problem, n, rng, SamplingOptions::default())?;
    problem.saa_prox(anchor, eta, &mean)
}

/// Sample standard deviation of single-scenario subgradients at `x`:
/// `sqrt(mean ||g_j − ḡ||²)` over `samples` draws.
pub fn estimate_nu(problem: &dyn StochasticProblem, x: &DenseVector, samples: u64, rng: &RandomSource) -> Result<f64> {
    if samples < 2 {
        return Err(Error::param("need at least two samples to estimate a deviation"));
    }
    let grads: Vec<DenseVector> = (0..samples)
        .map(|j| problem.subgradient(x, &problem.sample(&mut rng.substream(j))))
        .collect();
    let mut mean = DenseVector::zeros(x.dim());
    for g in &grads {
        mean.axpy(1.0, g);
    }
    let mean = mean.scale(1.0 / samples as f64);
    let ss: f64 = grads.iter().map(|g| g.dist_sq(&mean)).sum();
    Ok((ss / (samples - 1) as f64).sqrt())
}

/// `sign(v)` with `sign(0) = 0`, the minimum-norm subgradient of `|·|`.
#[inline]
pub(crate) fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
