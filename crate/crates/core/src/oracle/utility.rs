//! `E φ((c + ω)ᵀx) + μ/2 ||x||²` over a Euclidean ball, with
//! `φ(t) = max_j (v_j + s_j t)`, `c_i = i/n` and `ω ~ N(0, σ² I)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{estimate_nu, GradientKind, upper_envelope, MeanModel, ProblemMeta, Scenario, StochasticProblem};
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::prox::{BallIndicator, ProxOperator};
use crate::rng::{make_rng, RandomSource};
use crate::smoothing::logsumexp_max;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtilityParams {
    pub n: usize,
    pub m: usize,
    pub mu: f64,
    pub noise_std: f64,
    /// Seeds `v` and `s` when they are not given.
    pub seed: u64,
    pub v: Option<Vec<f64>>,
    pub s: Option<Vec<f64>>,
    pub radius: f64,
}

impl Default for UtilityParams {
    fn default() -> Self {
        UtilityParams {
            n: 20,
            m: 10,
            mu: 0.0,
            noise_std: 1.0,
            seed: 1,
            v: None,
            s: None,
            radius: 1.0,
        }
    }
}

#[derive(Debug)]
pub struct UtilityProblem {
    params: UtilityParams,
    c: DenseVector,
    v: Vec<f64>,
    s: Vec<f64>,
    meta: ProblemMeta,
    model: MeanModel,
}

fn coefficients(given: &Option<Vec<f64>>, m: usize, rng: &mut RandomSource, what: &str) -> Result<Vec<f64>> {
    let out = match given {
        Some(x) if x.len() != m => return Err(Error::param(format!("{what} has length {} but m is {m}", x.len()))),
        Some(x) => x.clone(),
        None => (0..m)
            .map(|_| loop {
                let u = rng.uniform();
                if u > 0.0 {
                    break u;
                }
            })
            .collect(),
    };
    if out.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
        return Err(Error::param(format!("entries of {what} must lie in (0, 1)")));
    }
    Ok(out)
}

pub fn make_utility_problem(params: UtilityParams) -> Result<UtilityProblem> {
    let p = &params;
    if p.n == 0 || p.m == 0 {
        return Err(Error::param("need n >= 1 and m >= 1"));
    }
    if !(p.mu >= 0.0 && p.noise_std >= 0.0 && p.radius > 0.0) {
        return Err(Error::param("need mu >= 0, noise_std >= 0 and radius > 0"));
    }
    let mut rng = make_rng(p.seed, 0);
    let v = coefficients(&p.v, p.m, &mut rng, "v")?;
    let s = coefficients(&p.s, p.m, &mut rng, "s")?;
    let c = DenseVector::from((1..=p.n).map(|i| i as f64 / p.n as f64).collect::<Vec<_>>());
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let b = smax * (c.norm() + p.noise_std * (p.n as f64).sqrt()) + p.mu * p.radius;
    let model = MeanModel::Utility {
        c: c.clone(),
        v: v.clone(),
        s: s.clone(),
        sigma: p.noise_std,
        mu: p.mu,
        radius: p.radius,
    };
    let mut problem = UtilityProblem {
        meta: ProblemMeta {
            name: "utility".into(),
            dim: p.n,
            mu: p.mu,
            l: None,
            nu: None,
            b: Some(b),
        },
        params,
        c,
        v,
        s,
        model,
    };
    let nu = estimate_nu(&problem, &DenseVector::zeros(problem.meta.dim), 10_000, &make_rng(problem.params.seed, 1))?;
    problem.meta.nu = Some(nu);
    Ok(problem)
}

impl UtilityProblem {
    pub fn params(&self) -> &UtilityParams {
        &self.params
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.v
    }

    pub fn slopes(&self) -> &[f64] {
        &self.s
    }

    pub fn drift(&self) -> &DenseVector {
        &self.c
    }

    fn coefficient(&self, s: &Scenario) -> DenseVector {
        match s {
            Scenario::Utility { omega } => &self.c + omega,
            other => panic!("utility problem received a foreign scenario: {other:?}"),
        }
    }

    /// Index of the active piece at `t`, lowest index on ties.
    fn active(&self, t: f64) -> usize {
        let mut best = 0;
        let mut top = f64::NEG_INFINITY;
        for (j, (v, s)) in self.v.iter().zip(&self.s).enumerate() {
            let val = v + s * t;
            if val > top {
                top = val;
                best = j;
            }
        }
        best
    }

    /// Number of pieces on the upper envelope.
    pub fn active_pieces(&self) -> usize {
        upper_envelope(&self.v, &self.s).len()
    }
}

impl StochasticProblem for UtilityProblem {
    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    fn sample(&self, rng: &mut RandomSource) -> Scenario {
        let sd = self.params.noise_std;
        let omega = (0..self.params.n).map(|_| sd * rng.standard_normal()).collect::<Vec<_>>();
        Scenario::Utility {
            omega: DenseVector::from(omega),
        }
    }

    fn is_degenerate(&self) -> bool {
        self.params.noise_std == 0.0
    }

    fn value(&self, x: &DenseVector, s: &Scenario) -> f64 {
        let t = self.coefficient(s).dot(x);
        let j = self.active(t);
        self.v[j] + self.s[j] * t + 0.5 * self.params.mu * x.norm_sq()
    }

    fn subgradient(&self, x: &DenseVector, s: &Scenario) -> DenseVector {
        let a = self.coefficient(s);
        let j = self.active(a.dot(x));
        DenseVector::lincomb(self.s[j], &a, self.params.mu, x)
    }

    fn smoothed_value(&self, x: &DenseVector, s: &Scenario, eta: f64) -> Result<f64> {
        let t = self.coefficient(s).dot(x);
        Ok(logsumexp_max(&self.v, &self.s, t, eta)?.0 + 0.5 * self.params.mu * x.norm_sq())
    }

    fn smoothed_gradient(&self, x: &DenseVector, s: &Scenario, eta: f64) -> Result<DenseVector> {
        let a = self.coefficient(s);
        let d = logsumexp_max(&self.v, &self.s, a.dot(x), eta)?.1;
        Ok(DenseVector::lincomb(d, &a, self.params.mu, x))
    }

    /// With `x̂ = x/||x||`, write `ω = a x̂ + ω⊥`. The active weight of a scenario
    /// depends on `a ~ N(0, σ²)` alone, and `ω⊥` is independent of `a`, so the
    /// batch mean needs one scalar draw per scenario plus a single vector draw.
    fn sample_batch_gradient(
        &self,
        x: &DenseVector,
        kind: GradientKind,
        rng: &mut RandomSource,
        n: u64,
    ) -> Option<Result<DenseVector>> {
        let mut run = || -> Result<DenseVector> {
            let sd = self.params.noise_std;
            let r = x.norm();
            let cx = self.c.dot(x);
            let (mut sw, mut swa, mut sww) = (0.0, 0.0, 0.0);
            for _ in 0..n {
                let a = sd * rng.standard_normal();
                let t = cx + r * a;
                let w = match kind {
                    GradientKind::Subgradient => self.s[self.active(t)],
                    GradientKind::Smoothed(eta) => logsumexp_max(&self.v, &self.s, t, eta)?.1,
                };
                sw += w;
                swa += w * a;
                sww += w * w;
            }
            let nf = n as f64;
            let mut z = DenseVector::from((0..self.params.n).map(|_| rng.standard_normal()).collect::<Vec<_>>());
            let mut g = DenseVector::lincomb(sw / nf, &self.c, self.params.mu, x);
            if r > 0.0 {
                let xh = x.scale(1.0 / r);
                z.axpy(-z.dot(&xh), &xh);
                g.axpy(swa / nf, &xh);
            }
            g.axpy(sd * sww.sqrt() / nf, &z);
            Ok(g)
        };
        Some(run())
    }

    fn regularizer(&self) -> Arc<dyn ProxOperator> {
        Arc::new(BallIndicator {
            radius: self.params.radius,
        })
    }

    fn domain(&self) -> Arc<dyn ProxOperator> {
        self.regularizer()
    }

    fn mean_model(&self) -> &MeanModel {
        &self.model
    }

    fn descriptor(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "utility",
            "params": self.params,
            "v": self.v,
            "s": self.s,
        })
    }
}
