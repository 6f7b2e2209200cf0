//! Stochastic quadratics `½ xᵀA(ω)x + β(ω)ᵀx + λ(ω)||x||_1`, optionally over a box.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{estimate_nu, sign0, MeanModel, ProblemMeta, Scenario, StochasticProblem};
use crate::error::{Error, Result};
use crate::linalg::{eigen_range, is_symmetric, logspace, matvec, random_conjugated_diagonal, solve_spd, DenseVector, Matrix};
use crate::prox::{BoxIndicator, BoxL1, L1Norm, ProxOperator, QuadraticFunction, ZeroFunction};
use crate::rng::{make_rng, RandomSource};

/// Box-constrained sparse quadratic with random matrix and vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Example2Params {
    pub dim: usize,
    /// Seeds the eigenbasis and the default `β̄`.
    pub seed: u64,
    /// Smallest eigenvalue of the generated mean matrix.
    pub mu: f64,
    /// Largest eigenvalue of the generated mean matrix.
    pub l: f64,
    /// Explicit row-major mean matrix; overrides `mu`/`l`.
    pub mean_matrix: Option<Vec<f64>>,
    /// Defaults to i.i.d. `U(-1, 1)`.
    pub beta_mean: Option<Vec<f64>>,
    /// Standard deviation of each entry of `W`.
    pub matrix_noise_std: f64,
    pub beta_noise_std: f64,
    pub lambda_mean: f64,
    /// `λ(ω) ~ U(λ̄ ± spread)`.
    pub lambda_spread: f64,
    /// Box half-width; `None` leaves the problem unconstrained.
    pub bound: Option<f64>,
    /// Use `(W + Wᵀ)/2` so each scenario has a true gradient.
    pub symmetrize: bool,
}

impl Default for Example2Params {
    fn default() -> Self {
        Example2Params {
            dim: 10,
            seed: 1,
            mu: 1.0,
            l: 1.0,
            mean_matrix: None,
            beta_mean: None,
            matrix_noise_std: 0.1,
            beta_noise_std: 0.1,
            lambda_mean: 0.5,
            lambda_spread: 0.0,
            bound: Some(1.0),
            symmetrize: true,
        }
    }
}

/// Smooth unconstrained quadratic with additive Gaussian gradient noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadraticParams {
    pub dim: usize,
    pub seed: u64,
    pub eig_min: f64,
    pub eig_max: f64,
    /// Standard deviation of each coordinate of `β(ω) − β̄`.
    pub noise_std: f64,
    /// Target minimizer; `β̄ = −A x*`. Defaults to i.i.d. `U(-1, 1)`.
    pub minimizer: Option<Vec<f64>>,
}

impl Default for QuadraticParams {
    fn default() -> Self {
        QuadraticParams {
            dim: 10,
            seed: 1,
            eig_min: 1e-6,
            eig_max: 1.0,
            noise_std: 1.0,
            minimizer: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
struct Noise {
    matrix_std: f64,
    beta_std: f64,
    lambda_spread: f64,
    symmetrize: bool,
}

pub struct QuadraticProblem {
    meta: ProblemMeta,
    a: Matrix,
    b: DenseVector,
    lambda: f64,
    bound: Option<f64>,
    noise: Noise,
    quad: QuadraticFunction,
    model: MeanModel,
    seed: u64,
}

impl std::fmt::Debug for QuadraticProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QuadraticProblem")
            .field("name", &self.meta.name)
            .field("dim", &self.meta.dim)
            .finish()
    }
}

fn spectrum_matrix(dim: usize, lo: f64, hi: f64, seed: u64) -> Result<Matrix> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::param(format!("need 0 < eig_min <= eig_max, got [{lo}, {hi}]")));
    }
    let diag = logspace(lo, hi, dim);
    Ok(random_conjugated_diagonal(&diag, &mut make_rng(seed, 0)))
}

fn uniform_vector(dim: usize, seed: u64, stream: u64) -> DenseVector {
    let mut rng = make_rng(seed, stream);
    DenseVector::from((0..dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect::<Vec<_>>())
}

fn given_vector(v: &Option<Vec<f64>>, dim: usize, what: &str) -> Result<Option<DenseVector>> {
    match v {
        Some(v) if v.len() != dim => Err(Error::param(format!("{what} has length {} but dim is {dim}", v.len()))),
        Some(v) => Ok(Some(DenseVector::new(v.clone())?)),
        None => Ok(None),
    }
}

pub fn make_example2(params: Example2Params) -> Result<QuadraticProblem> {
    let p = &params;
    if p.dim == 0 {
        return Err(Error::param("dimension must be positive"));
    }
    if !(p.matrix_noise_std >= 0.0 && p.beta_noise_std >= 0.0) {
        return Err(Error::param("noise levels must be >= 0"));
    }
    if !(p.lambda_mean >= 0.0 && p.lambda_spread >= 0.0 && p.lambda_spread <= p.lambda_mean) {
        return Err(Error::param("need 0 <= lambda_spread <= lambda_mean"));
    }
    if let Some(r) = p.bound {
        if !(r > 0.0) {
            return Err(Error::param("box half-width must be positive"));
        }
    }
    let a = match &p.mean_matrix {
        Some(m) => {
            if m.len() != p.dim * p.dim {
                return Err(Error::param(format!("mean_matrix needs {} entries", p.dim * p.dim)));
            }
            let a = Matrix::from_row_slice(p.dim, p.dim, m);
            if !is_symmetric(&a, 1e-12) {
                return Err(Error::param("mean matrix is not symmetric"));
            }
            a
        }
        None => spectrum_matrix(p.dim, p.mu, p.l, p.seed)?,
    };
    let b = given_vector(&p.beta_mean, p.dim, "beta_mean")?.unwrap_or_else(|| uniform_vector(p.dim, p.seed, 1));
    let noise = Noise {
        matrix_std: p.matrix_noise_std,
        beta_std: p.beta_noise_std,
        lambda_spread: p.lambda_spread,
        symmetrize: p.symmetrize,
    };
    build("example2", a, b, p.lambda_mean, p.bound, noise, p.seed)
}

/// Unconstrained quadratic, mean Hessian spectrum log-spaced on `[1, kappa]`,
/// `β̄ ~ N(0, I)`, additive gradient noise.
pub fn make_illconditioned(dim: usize, kappa: f64, noise_std: f64, seed: u64) -> Result<QuadraticProblem> {
    if !(kappa >= 1.0) {
        return Err(Error::param(format!("condition number must be >= 1, got {kappa}")));
    }
    if dim == 0 || !(noise_std >= 0.0) {
        return Err(Error::param("need dim >= 1 and noise_std >= 0"));
    }
    let a = spectrum_matrix(dim, 1.0, kappa, seed)?;
    let mut rng = make_rng(seed, 1);
    let b = DenseVector::from((0..dim).map(|_| rng.standard_normal()).collect::<Vec<_>>());
    let noise = Noise {
        matrix_std: 0.0,
        beta_std: noise_std,
        lambda_spread: 0.0,
        symmetrize: true,
    };
    build("ill-conditioned", a, b, 0.0, None, noise, seed)
}

/// Noisy least squares with a prescribed minimizer.
pub fn make_least_squares(params: QuadraticParams) -> Result<QuadraticProblem> {
    let p = &params;
    if p.dim == 0 || !(p.noise_std >= 0.0) {
        return Err(Error::param("need dim >= 1 and noise_std >= 0"));
    }
    let a = spectrum_matrix(p.dim, p.eig_min, p.eig_max, p.seed)?;
    let target = given_vector(&p.minimizer, p.dim, "minimizer")?.unwrap_or_else(|| uniform_vector(p.dim, p.seed, 1));
    let b = -&matvec(&a, &target);
    let noise = Noise {
        matrix_std: 0.0,
        beta_std: p.noise_std,
        lambda_spread: 0.0,
        symmetrize: true,
    };
    build("least-squares", a, b, 0.0, None, noise, p.seed)
}

fn build(
    name: &str,
    a: Matrix,
    b: DenseVector,
    lambda: f64,
    bound: Option<f64>,
    noise: Noise,
    seed: u64,
) -> Result<QuadraticProblem> {
    let (mu, l) = eigen_range(&a);
    if mu < -1e-12 {
        return Err(Error::param(format!("mean matrix is not positive semidefinite (min eigenvalue {mu})")));
    }
    let mu = mu.max(0.0);
    let dim = b.dim();
    let quad = QuadraticFunction::new(a.clone(), b.clone())?;
    let b_bound = bound.map(|r| l * r * (dim as f64).sqrt() + b.norm() + lambda * (dim as f64).sqrt());
    let model = MeanModel::CompositeQuadratic {
        a: a.clone(),
        b: b.clone(),
        lambda,
        bounds: bound.map(|r| (-r, r)),
    };
    let mut problem = QuadraticProblem {
        meta: ProblemMeta {
            name: name.into(),
            dim,
            mu,
            l: Some(l),
            nu: None,
            b: b_bound,
        },
        a,
        b,
        lambda,
        bound,
        noise,
        quad,
        model,
        seed,
    };
    let nu = if problem.additive_only() {
        problem.noise.beta_std * (dim as f64).sqrt()
    } else {
        estimate_nu(&problem, &DenseVector::zeros(dim), 10_000, &make_rng(seed, 2))?
    };
    problem.meta.nu = Some(nu);
    Ok(problem)
}

impl QuadraticProblem {
    pub fn mean_matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn mean_linear_term(&self) -> &DenseVector {
        &self.b
    }

    /// Weight of `||x||_1` in `g`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    fn additive_only(&self) -> bool {
        self.noise.matrix_std == 0.0 && self.noise.lambda_spread == 0.0
    }

    fn draw(&self, rng: &mut RandomSource, n: u64) -> Scenario {
        let dim = self.meta.dim;
        let hessian_noise = (self.noise.matrix_std > 0.0).then(|| {
            let sd = self.noise.matrix_std;
            let mut w: Vec<f64> = (0..dim * dim).map(|_| sd * rng.standard_normal()).collect();
            if self.noise.symmetrize {
                for i in 0..dim {
                    for j in (i + 1)..dim {
                        let avg = 0.5 * (w[i * dim + j] + w[j * dim + i]);
                        w[i * dim + j] = avg;
                        w[j * dim + i] = avg;
                    }
                }
            }
            w
        });
        let sd = self.noise.beta_std / (n as f64).sqrt();
        let beta_noise = DenseVector::from((0..dim).map(|_| sd * rng.standard_normal()).collect::<Vec<_>>());
        let lambda_noise = if self.noise.lambda_spread > 0.0 {
            self.noise.lambda_spread * (2.0 * rng.uniform() - 1.0)
        } else {
            0.0
        };
        Scenario::Quadratic {
            hessian_noise,
            beta_noise,
            lambda_noise,
        }
    }
}

fn unpack(s: &Scenario) -> (Option<&Vec<f64>>, &DenseVector, f64) {
    match s {
        Scenario::Quadratic {
            hessian_noise,
            beta_noise,
            lambda_noise,
        } => (hessian_noise.as_ref(), beta_noise, *lambda_noise),
        other => panic!("quadratic problem received a foreign scenario: {other:?}"),
    }
}

/// `W x` for row-major `W`.
fn noise_apply(w: &[f64], x: &DenseVector) -> DenseVector {
    let n = x.dim();
    DenseVector::from(
        (0..n)
            .map(|i| w[i * n..(i + 1) * n].iter().zip(x.iter()).map(|(a, b)| a * b).sum())
            .collect::<Vec<f64>>(),
    )
}

impl StochasticProblem for QuadraticProblem {
    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    fn sample(&self, rng: &mut RandomSource) -> Scenario {
        self.draw(rng, 1)
    }

    fn is_degenerate(&self) -> bool {
        self.noise.matrix_std == 0.0 && self.noise.beta_std == 0.0 && self.noise.lambda_spread == 0.0
    }

    fn value(&self, x: &DenseVector, s: &Scenario) -> f64 {
        let (w, bn, ln) = unpack(s);
        let mut v = self.quad.value(x) + bn.dot(x) + ln * x.norm_l1();
        if let Some(w) = w {
            v += 0.5 * x.dot(&noise_apply(w, x));
        }
        v
    }

    fn subgradient(&self, x: &DenseVector, s: &Scenario) -> DenseVector {
        let (w, bn, ln) = unpack(s);
        let mut g = self.quad.gradient(x);
        g.axpy(1.0, bn);
        if let Some(w) = w {
            g.axpy(1.0, &noise_apply(w, x));
        }
        if ln != 0.0 {
            g.axpy(ln, &x.map(sign0));
        }
        g
    }

    fn is_affine_in_scenario(&self) -> bool {
        true
    }

    fn sample_batch_mean(&self, rng: &mut RandomSource, n: u64) -> Option<Scenario> {
        self.additive_only().then(|| self.draw(rng, n))
    }

    fn saa_prox(&self, anchor: &DenseVector, eta: f64, mean: &Scenario) -> Result<DenseVector> {
        let (w, bn, ln) = unpack(mean);
        if ln != 0.0 {
            return Err(Error::Unsupported("SAA prox with a random l1 weight".into()));
        }
        match w {
            None => self.quad.prox(&DenseVector::lincomb(1.0, anchor, -eta, bn), eta),
            Some(w) => {
                if !(eta > 0.0) {
                    return Err(Error::param(format!("prox weight must be positive, got {eta}")));
                }
                let n = self.meta.dim;
                let mut m = Matrix::from_row_slice(n, n, w) + &self.a;
                for i in 0..n {
                    m[(i, i)] += 1.0 / eta;
                }
                let mut rhs = anchor.scale(1.0 / eta);
                rhs.axpy(-1.0, &self.b);
                rhs.axpy(-1.0, bn);
                solve_spd(&m, &rhs)
            }
        }
    }

    fn regularizer(&self) -> Arc<dyn ProxOperator> {
        match (self.bound, self.lambda > 0.0) {
            (Some(r), _) => Arc::new(BoxL1 {
                lo: -r,
                hi: r,
                weight: self.lambda,
            }),
            (None, true) => Arc::new(L1Norm { weight: self.lambda }),
            (None, false) => Arc::new(ZeroFunction),
        }
    }

    fn domain(&self) -> Arc<dyn ProxOperator> {
        match self.bound {
            Some(r) => Arc::new(BoxIndicator { lo: -r, hi: r }),
            None => Arc::new(ZeroFunction),
        }
    }

    fn mean_model(&self) -> &MeanModel {
        &self.model
    }

    fn descriptor(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.meta.name,
            "seed": self.seed,
            "mean_matrix": self.a.iter().cloned().collect::<Vec<f64>>(),
            "mean_linear": self.b,
            "lambda": self.lambda,
            "bound": self.bound,
            "noise": self.noise,
        })
    }
}
