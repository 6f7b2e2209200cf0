use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{estimate_nu, sign0, MeanModel, ProblemMeta, Scenario, StochasticProblem};
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::prox::{prox_l1, ProxOperator, ZeroFunction};
use crate::rng::{make_rng, RandomSource};

/// `E[α/2 ||x||² + βᵀx + λ||x||_1]` with
/// `α ~ U(ᾱ ± alpha_spread)`, `β ~ N(β̄, beta_std² I)`, `λ ~ U(λ̄ ± lambda_spread)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Example1Params {
    pub dim: usize,
    /// Seeds `β̄` when it is not given explicitly.
    pub seed: u64,
    pub alpha_mean: f64,
    pub alpha_spread: f64,
    /// Defaults to i.i.d. `U(-1, 1)` entries drawn from `seed`.
    pub beta_mean: Option<Vec<f64>>,
    pub beta_std: f64,
    pub lambda_mean: f64,
    pub lambda_spread: f64,
}

impl Default for Example1Params {
    fn default() -> Self {
        Example1Params {
            dim: 20,
            seed: 1,
            alpha_mean: 1.0,
            alpha_spread: 0.5,
            beta_mean: None,
            beta_std: 0.5,
            lambda_mean: 0.5,
            lambda_spread: 0.25,
        }
    }
}

#[derive(Debug)]
pub struct Example1 {
    params: Example1Params,
    beta_mean: DenseVector,
    meta: ProblemMeta,
    model: MeanModel,
}

pub fn make_example1(params: Example1Params) -> Result<Example1> {
    let p = &params;
    if p.dim == 0 {
        return Err(Error::param("dimension must be positive"));
    }
    if !(p.alpha_mean > 0.0) {
        return Err(Error::param(format!("mean of alpha must be positive, got {}", p.alpha_mean)));
    }
    if !(p.alpha_spread >= 0.0 && p.alpha_spread < p.alpha_mean) {
        return Err(Error::param("alpha spread must lie in [0, alpha_mean)"));
    }
    if !(p.lambda_mean >= 0.0 && p.lambda_spread >= 0.0 && p.lambda_spread <= p.lambda_mean) {
        return Err(Error::param("need 0 <= lambda_spread <= lambda_mean"));
    }
    if !(p.beta_std >= 0.0) {
        return Err(Error::param("beta standard deviation must be >= 0"));
    }
    let beta_mean = match &p.beta_mean {
        Some(b) if b.len() == p.dim => DenseVector::new(b.clone())?,
        Some(b) => {
            return Err(Error::param(format!("beta_mean has length {} but dim is {}", b.len(), p.dim)));
        }
        None => {
            let mut rng = make_rng(p.seed, 0);
            DenseVector::from((0..p.dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect::<Vec<_>>())
        }
    };
    let model = MeanModel::SeparableL1 {
        alpha: p.alpha_mean,
        beta: beta_mean.clone(),
        lambda: p.lambda_mean,
    };
    let mut problem = Example1 {
        meta: ProblemMeta {
            name: "example1".into(),
            dim: p.dim,
            mu: p.alpha_mean,
            l: None,
            nu: None,
            b: None,
        },
        params,
        beta_mean,
        model,
    };
    let nu = estimate_nu(&problem, &DenseVector::zeros(problem.meta.dim), 10_000, &make_rng(problem.params.seed, 1))?;
    problem.meta.nu = Some(nu);
    Ok(problem)
}

impl Example1 {
    pub fn params(&self) -> &Example1Params {
        &self.params
    }

    /// The scenario at the distribution means.
    pub fn mean_scenario(&self) -> Scenario {
        Scenario::Example1 {
            alpha: self.params.alpha_mean,
            beta: self.beta_mean.clone(),
            lambda: self.params.lambda_mean,
        }
    }

    /// One draw, with the Gaussian part scaled by `1/sqrt(n)`.
    fn draw(&self, rng: &mut RandomSource, n: u64) -> Scenario {
        let p = &self.params;
        let ua = rng.uniform();
        let sd = p.beta_std / (n as f64).sqrt();
        let beta: Vec<f64> = self.beta_mean.iter().map(|&b| b + sd * rng.standard_normal()).collect();
        let ul = rng.uniform();
        Scenario::Example1 {
            alpha: p.alpha_mean + p.alpha_spread * (2.0 * ua - 1.0),
            beta: DenseVector::from(beta),
            lambda: p.lambda_mean + p.lambda_spread * (2.0 * ul - 1.0),
        }
    }
}

fn unpack(s: &Scenario) -> (f64, &DenseVector, f64) {
    match s {
        Scenario::Example1 { alpha, beta, lambda } => (*alpha, beta, *lambda),
        other => panic!("example1 received a foreign scenario: {other:?}"),
    }
}

impl StochasticProblem for Example1 {
    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    fn sample(&self, rng: &mut RandomSource) -> Scenario {
        self.draw(rng, 1)
    }

    fn is_degenerate(&self) -> bool {
        self.params.alpha_spread == 0.0 && self.params.beta_std == 0.0 && self.params.lambda_spread == 0.0
    }

    fn value(&self, x: &DenseVector, s: &Scenario) -> f64 {
        let (alpha, beta, lambda) = unpack(s);
        0.5 * alpha * x.norm_sq() + beta.dot(x) + lambda * x.norm_l1()
    }

    fn subgradient(&self, x: &DenseVector, s: &Scenario) -> DenseVector {
        let (alpha, beta, lambda) = unpack(s);
        let coords: Vec<f64> = x
            .iter()
            .zip(beta.iter())
            .map(|(&xi, &bi)| alpha * xi + bi + lambda * sign0(xi))
            .collect();
        DenseVector::from(coords)
    }

    fn is_affine_in_scenario(&self) -> bool {
        true
    }

    fn sample_batch_mean(&self, rng: &mut RandomSource, n: u64) -> Option<Scenario> {
        // exact only when the uniform parts are point masses
        (self.params.alpha_spread == 0.0 && self.params.lambda_spread == 0.0).then(|| self.draw(rng, n))
    }

    fn saa_prox(&self, anchor: &DenseVector, eta: f64, mean: &Scenario) -> Result<DenseVector> {
        let (alpha, beta, lambda) = unpack(mean);
        if !(eta > 0.0) {
            return Err(Error::param(format!("prox weight must be positive, got {eta}")));
        }
        let denom = alpha * eta + 1.0;
        if !(denom > 0.0) {
            return Err(Error::param("SAA curvature is too negative for this prox weight"));
        }
        let shifted = DenseVector::lincomb(1.0 / denom, anchor, -eta / denom, beta);
        prox_l1(&shifted, (eta * lambda / denom).max(0.0))
    }

    fn regularizer(&self) -> Arc<dyn ProxOperator> {
        Arc::new(ZeroFunction)
    }

    fn domain(&self) -> Arc<dyn ProxOperator> {
        Arc::new(ZeroFunction)
    }

    fn mean_model(&self) -> &MeanModel {
        &self.model
    }

    fn descriptor(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "example1",
            "params": self.params,
            "beta_mean": self.beta_mean,
        })
    }
}
