//! (α, β)-smoothable functions and the smoothings used by the solvers:
//! Moreau envelopes, log-sum-exp of a max of affine pieces, and the smoothed
//! Euclidean norm.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::prox::{moreau_eval, ProxOperator};

/// Which side of `f` the smoothing sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SandwichSide {
    /// `f_η ≤ f ≤ f_η + ηβ`
    Lower,
    /// `f ≤ f_η ≤ f + ηβ`
    Upper,
}

/// A function with a family of smooth approximations `f_η` whose gradients
/// are `α/η`-Lipschitz and which sit within `ηβ` of `f`.
pub trait SmoothableFunction: Send + Sync {
    fn name(&self) -> String;
    fn alpha(&self) -> f64;
    fn beta(&self) -> f64;
    fn side(&self) -> SandwichSide {
        SandwichSide::Lower
    }
    /// Uniform bound on subgradient norms, when one is known.
    fn subgradient_bound(&self) -> Option<f64>;
    fn value(&self, x: &DenseVector) -> f64;
    fn smoothed_value(&self, x: &DenseVector, eta: f64) -> Result<f64>;
    fn smoothed_gradient(&self, x: &DenseVector, eta: f64) -> Result<DenseVector>;
}

/// `δ ln Σ exp((v_i + s_i t)/δ)` and its derivative in `t`.
pub fn logsumexp_max(v: &[f64], s: &[f64], t: f64, delta: f64) -> Result<(f64, f64)> {
    if v.is_empty() || v.len() != s.len() {
        return Err(Error::param("logsumexp_max needs matching non-empty v and s"));
    }
    if !(delta > 0.0) {
        return Err(Error::param(format!("smoothing parameter must be positive, got {delta}")));
    }
    let top = v
        .iter()
        .zip(s)
        .map(|(vi, si)| vi + si * t)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    let mut weighted = 0.0;
    for (vi, si) in v.iter().zip(s) {
        let w = ((vi + si * t - top) / delta).exp();
        total += w;
        weighted += w * si;
    }
    Ok((top + delta * total.ln(), weighted / total))
}

/// `sqrt(||x||² + η²) − η` and its gradient `x / sqrt(||x||² + η²)`.
/// At `x = 0, η = 0` the gradient is taken to be 0.
pub fn smooth_norm(x: &DenseVector, eta: f64) -> Result<(f64, DenseVector)> {
    if !(eta >= 0.0) {
        return Err(Error::param(format!("smoothing parameter must be >= 0, got {eta}")));
    }
    let r = (x.norm_sq() + eta * eta).sqrt();
    if r == 0.0 {
        return Ok((0.0, DenseVector::zeros(x.dim())));
    }
    Ok((r - eta, x.map(|v| v / r)))
}

/// `||x||`, smoothed as in [`smooth_norm`]; (1, 1)-smoothable.
#[derive(Clone, Copy, Debug, Default)]
pub struct SmoothNorm;

impl SmoothableFunction for SmoothNorm {
    fn name(&self) -> String {
        "smooth-norm".into()
    }
    fn alpha(&self) -> f64 {
        1.0
    }
    fn beta(&self) -> f64 {
        1.0
    }
    fn subgradient_bound(&self) -> Option<f64> {
        Some(1.0)
    }
    fn value(&self, x: &DenseVector) -> f64 {
        x.norm()
    }
    fn smoothed_value(&self, x: &DenseVector, eta: f64) -> Result<f64> {
        Ok(smooth_norm(x, eta)?.0)
    }
    fn smoothed_gradient(&self, x: &DenseVector, eta: f64) -> Result<DenseVector> {
        Ok(smooth_norm(x, eta)?.1)
    }
}

/// Moreau envelope of a prox-friendly function; (1, B²)-smoothable.
pub struct MoreauSmoothable {
    prox: Arc<dyn ProxOperator>,
    bound: f64,
}

pub fn moreau_smoothable(prox: Arc<dyn ProxOperator>, bound: f64) -> Result<MoreauSmoothable> {
    if !(bound >= 0.0) || !bound.is_finite() {
        return Err(Error::param(format!("subgradient bound must be >= 0, got {bound}")));
    }
    Ok(MoreauSmoothable { prox, bound })
}

impl SmoothableFunction for MoreauSmoothable {
    fn name(&self) -> String {
        format!("moreau({})", self.prox.name())
    }
    fn alpha(&self) -> f64 {
        1.0
    }
    fn beta(&self) -> f64 {
        self.bound * self.bound
    }
    fn subgradient_bound(&self) -> Option<f64> {
        Some(self.bound)
    }
    fn value(&self, x: &DenseVector) -> f64 {
        self.prox.value(x)
    }
    fn smoothed_value(&self, x: &DenseVector, eta: f64) -> Result<f64> {
        let f = |u: &DenseVector| self.prox.value(u);
        Ok(moreau_eval(&*self.prox, &f, x, eta)?.value)
    }
    fn smoothed_gradient(&self, x: &DenseVector, eta: f64) -> Result<DenseVector> {
        let f = |u: &DenseVector| self.prox.value(u);
        Ok(moreau_eval(&*self.prox, &f, x, eta)?.gradient)
    }
}

/// `max_j (v_j + s_j cᵀx)` smoothed by [`logsumexp_max`]. Sits above `f`.
#[derive(Clone, Debug)]
pub struct MaxOfAffine {
    pub v: Vec<f64>,
    pub s: Vec<f64>,
    pub c: DenseVector,
}

impl MaxOfAffine {
    pub fn new(v: Vec<f64>, s: Vec<f64>, c: DenseVector) -> Result<Self> {
        if v.is_empty() || v.len() != s.len() {
            return Err(Error::param("max of affine pieces needs matching non-empty v and s"));
        }
        Ok(MaxOfAffine { v, s, c })
    }

    fn spread(&self) -> f64 {
        let lo = self.s.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }
}

impl SmoothableFunction for MaxOfAffine {
    fn name(&self) -> String {
        format!("max-of-{}-affine", self.v.len())
    }
    fn alpha(&self) -> f64 {
        // second derivative of the log-sum-exp is a variance of s, at most spread²/4
        (self.spread().powi(2) / 4.0 * self.c.norm_sq()).max(1.0)
    }
    fn beta(&self) -> f64 {
        (self.v.len() as f64).ln().max(f64::MIN_POSITIVE)
    }
    fn side(&self) -> SandwichSide {
        SandwichSide::Upper
    }
    fn subgradient_bound(&self) -> Option<f64> {
        let smax = self.s.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Some(smax * self.c.norm())
    }
    fn value(&self, x: &DenseVector) -> f64 {
        let t = self.c.dot(x);
        self.v
            .iter()
            .zip(&self.s)
            .map(|(v, s)| v + s * t)
            .fold(f64::NEG_INFINITY, f64::max)
    }
    fn smoothed_value(&self, x: &DenseVector, eta: f64) -> Result<f64> {
        Ok(logsumexp_max(&self.v, &self.s, self.c.dot(x), eta)?.0)
    }
    fn smoothed_gradient(&self, x: &DenseVector, eta: f64) -> Result<DenseVector> {
        let d = logsumexp_max(&self.v, &self.s, self.c.dot(x), eta)?.1;
        Ok(self.c.scale(d))
    }
}

/// Checks the sandwich inequality of `f` at every `(x, η)` pair.
pub fn check_sandwich(f: &dyn SmoothableFunction, xs: &[DenseVector], etas: &[f64]) -> Result<(), String> {
    for x in xs {
        for &eta in etas {
            let raw = f.value(x);
            let sm = f.smoothed_value(x, eta).map_err(|e| e.to_string())?;
            let slack = eta * f.beta() + 1e-9;
            let ok = match f.side() {
                SandwichSide::Lower => sm <= raw + 1e-9 && raw <= sm + slack,
                SandwichSide::Upper => raw <= sm + 1e-9 && sm <= raw + slack,
            };
            if !ok {
                return Err(format!(
                    "{}: sandwich fails at eta={eta}: f={raw}, f_eta={sm}, beta={}",
                    f.name(),
                    f.beta()
                ));
            }
        }
    }
    Ok(())
}

/// Checks `||∇f_η(x1) − ∇f_η(x2)|| ≤ (α/η)||x1 − x2||` on the given pairs.
pub fn check_smoothness(
    f: &dyn SmoothableFunction,
    pairs: &[(DenseVector, DenseVector)],
    eta: f64,
) -> Result<(), String> {
    let lip = f.alpha() / eta;
    for (a, b) in pairs {
        let ga = f.smoothed_gradient(a, eta).map_err(|e| e.to_string())?;
        let gb = f.smoothed_gradient(b, eta).map_err(|e| e.to_string())?;
        let lhs = ga.dist(&gb);
        let rhs = lip * a.dist(b) + 1e-9;
        if lhs > rhs {
            return Err(format!("{}: gradient not {lip}-Lipschitz ({lhs} > {rhs})", f.name()));
        }
    }
    Ok(())
}
