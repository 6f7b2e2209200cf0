//! Proximal operators, the two-operator fixed-point scheme for the prox of a
//! sum, and Moreau envelope evaluation.
//!
//! Every operator computes `P(y) = argmin_u h(u) + ||u - y||^2 / (2 eta)`.

use std::fmt;
use std::sync::{Arc, Mutex};

use nalgebra::{Cholesky, Dyn};

use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, matvec, DenseVector, Matrix};

pub const DEFAULT_FIXED_POINT_TOL: f64 = 1e-10;
pub const DEFAULT_FIXED_POINT_MAX_ITER: usize = 100_000;

/// A closed convex function with an evaluable proximal map.
pub trait ProxOperator: Send + Sync {
    fn name(&self) -> String;

    /// `argmin_u h(u) + ||u - y||^2 / (2 eta)`.
    fn prox(&self, y: &DenseVector, eta: f64) -> Result<DenseVector>;

    /// `h(x)`, `+inf` outside the domain.
    fn value(&self, x: &DenseVector) -> f64;

    /// True when `h` is identically zero, so the prox is the identity.
    fn is_zero(&self) -> bool {
        false
    }
}

impl fmt::Debug for dyn ProxOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ProxOperator({})", self.name())
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("prox weight must be positive, got {eta}")))
    }
}

#[inline]
fn soft(v: f64, tau: f64) -> f64 {
    v.signum() * (v.abs() - tau).max(0.0)
}

/// Soft-thresholding: `sign(y_i) max(|y_i| - tau, 0)`.
pub fn prox_l1(y: &DenseVector, tau: f64) -> Result<DenseVector> {
    if !(tau >= 0.0) {
        return Err(Error::param(format!("threshold must be >= 0, got {tau}")));
    }
    Ok(y.map(|v| soft(v, tau)))
}

/// Euclidean projection onto the box `[lo, hi]^n`.
pub fn prox_box(y: &DenseVector, lo: f64, hi: f64) -> Result<DenseVector> {
    if !(lo <= hi) {
        return Err(Error::param(format!("empty box: lo {lo} > hi {hi}")));
    }
    Ok(y.map(|v| v.clamp(lo, hi)))
}

/// Euclidean projection onto the ball `||u|| <= radius`.
pub fn prox_ball(y: &DenseVector, radius: f64) -> Result<DenseVector> {
    if !(radius >= 0.0) {
        return Err(Error::param(format!("radius must be >= 0, got {radius}")));
    }
    let n = y.norm();
    if n <= radius {
        Ok(y.clone())
    } else {
        Ok(y.scale(radius / n))
    }
}

fn check_quadratic(a: &Matrix, b: &DenseVector) -> Result<()> {
    let n = b.dim();
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::param(format!(
            "quadratic prox: matrix is {}x{} but vector has dimension {n}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::param("quadratic prox: non-finite entries"));
    }
    if !is_symmetric(a, 1e-12) {
        return Err(Error::param("quadratic prox: matrix is not symmetric"));
    }
    Ok(())
}

fn shifted_factor(a: &Matrix, eta: f64) -> Result<Cholesky<f64, Dyn>> {
    let n = a.nrows();
    let m = Matrix::identity(n, n) + a * eta;
    m.cholesky()
        .ok_or_else(|| Error::param("quadratic prox: I + eta A is not positive definite"))
}

/// Prox of `u ↦ ½ uᵀAu + bᵀu`: the solution of `(I + ηA) u = y − ηb`.
pub fn prox_quadratic(y: &DenseVector, a: &Matrix, b: &DenseVector, eta: f64) -> Result<DenseVector> {
    check_eta(eta)?;
    check_quadratic(a, b)?;
    if y.dim() != b.dim() {
        return Err(Error::param("quadratic prox: anchor dimension mismatch"));
    }
    let chol = shifted_factor(a, eta)?;
    let rhs = DenseVector::lincomb(1.0, y, -eta, b);
    Ok(DenseVector::from_nalgebra(&chol.solve(&rhs.to_nalgebra())))
}

/// Exact prox of `λ||u||_1 + ½||u||^2` with weight `η`:
/// `sign(y_i) max(|y_i| − ηλ, 0) / (1 + η)`.
pub fn prox_l1_plus_halfsq(y: &DenseVector, lambda: f64, eta: f64) -> Result<DenseVector> {
    check_eta(eta)?;
    if !(lambda >= 0.0) {
        return Err(Error::param(format!("l1 weight must be >= 0, got {lambda}")));
    }
    let shrink = 1.0 / (1.0 + eta);
    Ok(y.map(|v| soft(v, eta * lambda) * shrink))
}

/// Result of [`prox_sum_fixed_point`].
#[derive(Clone, Debug)]
pub struct FixedPointOutcome {
    pub point: DenseVector,
    pub iterations: usize,
    pub residual: f64,
}

/// Prox of `g + h` from the proxes of `g` and `h`.
///
/// Iterates `y ← y − P_g(y) + P_h(anchor + P_g(y) − y)` from `y = anchor` and
/// returns `P_g(y)` once successive iterates are within `tol`. The anchor stays
/// fixed for the whole solve.
pub fn prox_sum_fixed_point(
    pg: &dyn ProxOperator,
    ph: &dyn ProxOperator,
    anchor: &DenseVector,
    eta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointOutcome> {
    check_eta(eta)?;
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::param("fixed point needs tol > 0 and max_iter > 0"));
    }
    let mut y = anchor.clone();
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        let pgy = pg.prox(&y, eta)?;
        // anchor + P_g(y) - y
        let arg = anchor.zip_map(&pgy, |a, p| a + p).zip_map(&y, |s, v| s - v);
        let phz = ph.prox(&arg, eta)?;
        let next = y.zip_map(&pgy, |v, p| v - p).zip_map(&phz, |s, q| s + q);
        residual = next.dist(&y);
        y = next;
        if residual <= tol {
            return Ok(FixedPointOutcome {
                point: pg.prox(&y, eta)?,
                iterations: iter,
                residual,
            });
        }
    }
    Err(Error::Convergence {
        what: "prox fixed-point iteration".into(),
        iterations: max_iter,
        residual,
    })
}

/// Value, gradient and prox point of the Moreau envelope at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct MoreauEvaluation {
    pub value: f64,
    pub gradient: DenseVector,
    pub prox_point: DenseVector,
}

/// Moreau envelope `f_η(x) = min_u f(u) + ||u − x||²/(2η)` and its gradient
/// `(x − prox)/η`.
pub fn moreau_eval(
    f_prox: &dyn ProxOperator,
    f_value: &dyn Fn(&DenseVector) -> f64,
    x: &DenseVector,
    eta: f64,
) -> Result<MoreauEvaluation> {
    check_eta(eta)?;
    let u = f_prox.prox(x, eta)?;
    let value = f_value(&u) + u.dist_sq(x) / (2.0 * eta);
    let gradient = x.zip_map(&u, |a, b| (a - b) / eta);
    Ok(MoreauEvaluation {
        value,
        gradient,
        prox_point: u,
    })
}

// ---------------------------------------------------------------------------
// Concrete operators
// ---------------------------------------------------------------------------

/// `h ≡ 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroFunction;

impl ProxOperator for ZeroFunction {
    fn name(&self) -> String {
        "zero".into()
    }
    fn prox(&self, y: &DenseVector, eta: f64) -> Result<DenseVector> {
        check_eta(eta)?;
        Ok(y.clone())
    }
    fn value(&self, _x: &DenseVector) -> f64 {
        0.0
    }
    fn is_zero(&self) -> bool {
        true
    }
}

/// `weight * ||u||_1`.
#[derive(Clone, Copy, Debug)]
pub struct L1Norm {
    pub weight: f64,
}

impl ProxOperator for L1Norm {
    fn name(&self) -> String {
        format!("{}*l1", self.weight)
    }
    fn prox(&self, y: &DenseVector, eta: f64) -> Result<DenseVector> {
        check_eta(eta)?;
        prox_l1(y, eta * self.weight)
    }
    fn value(&self, x: &DenseVector) -> f64 {
        self.weight * x.norm_l1()
    }
}

const DOMAIN_TOL: f64 = 1e-12;

/// Indicator of `[lo, hi]^n`.
#[derive(Clone, Copy, Debug)]
pub struct BoxIndicator {
    pub lo: f64,
    pub hi: f64,
}

impl ProxOperator for BoxIndicator {
    fn name(&self) -> String {
        format!("box[{},{}]", self.lo, self.hi)
    }
    fn prox(&self, y: &DenseVector, eta: f64) -> Result<DenseVector> {
        check_eta(eta)?;
        prox_box(y, self.lo, self.hi)
    }
    fn value(&self, x: &DenseVector) -> f64 {
        if x.iter().all(|&v| v >= self.lo - DOMAIN_TOL && v <= self.hi + DOMAIN_TOL) {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Indicator of the Euclidean ball of the given radius.
#[derive(Clone, Copy, Debug)]
pub struct BallIndicator {
    pub radius: f64,
}

impl ProxOperator for BallIndicator {
    fn name(&self) -> String {
        format!("ball({})", self.radius)
    }
    fn prox(&self, y: &DenseVector, eta: f64) -> Result<DenseVector> {
        check_eta(eta)?;
        prox_ball(y, self.radius)
    }
    fn value(&self, x: &DenseVector) -> f64 {
        if x.norm() <= self.radius * (1.0 + DOMAIN_TOL) + DOMAIN_TOL {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// `weight * ||u||_1 + indicator of [lo, hi]^n`. Separable, so the prox is a
/// clamp of the soft threshold.
#[derive(Clone, Copy, Debug)]
pub struct BoxL1 {
    pub lo: f64,
    pub hi: f64,
    pub weight: f64,
}

impl ProxOperator for BoxL1 {
    fn name(&self) -> String {
        format!("{}*l1+box[{},{}]", self.weight, self.lo, self.hi)
    }
    fn prox(&self, y: &DenseVector, eta: f64) -> Result<DenseVector> {
        check_eta(eta)?;
        prox_box(&prox_l1(y, eta * self.weight)?, self.lo, self.hi)
    }
    fn value(&self, x: &DenseVector) -> f64 {
        BoxIndicator { lo: self.lo, hi: self.hi }.value(x) + self.weight * x.norm_l1()
    }
}

/// `cᵀu`.
#[derive(Clone, Debug)]
pub struct LinearFunction {
    pub c: DenseVector,
}

impl ProxOperator for LinearFunction {
    fn name(&self) -> String {
        "linear".into()
    }
    fn prox(&self, y: &DenseVector, eta: f64) -> Result<DenseVector> {
        check_eta(eta)?;
        Ok(DenseVector::lincomb(1.0, y, -eta, &self.c))
    }
    fn value(&self, x: &DenseVector) -> f64 {
        self.c.dot(x)
    }
}

/// `λ||u||_1 + ½||u||²`.
#[derive(Clone, Copy, Debug)]
pub struct L1PlusHalfSq {
    pub lambda: f64,
}

impl ProxOperator for L1PlusHalfSq {
    fn name(&self) -> String {
        format!("{}*l1+half_sq", self.lambda)
    }
    fn prox(&self, y: &DenseVector, eta: f64) -> Result<DenseVector> {
        prox_l1_plus_halfsq(y, self.lambda, eta)
    }
    fn value(&self, x: &DenseVector) -> f64 {
        self.lambda * x.norm_l1() + 0.5 * x.norm_sq()
    }
}

/// `½ uᵀAu + bᵀu` with `A` symmetric positive semidefinite.
///
/// The factorization of `I + ηA` is cached for the most recent `η`, which is
/// what solvers with a constant prox weight need.
pub struct QuadraticFunction {
    a: Matrix,
    b: DenseVector,
    cache: Mutex<Option<(f64, Cholesky<f64, Dyn>)>>,
}

impl QuadraticFunction {
    pub fn new(a: Matrix, b: DenseVector) -> Result<Self> {
        check_quadratic(&a, &b)?;
        Ok(QuadraticFunction {
            a,
            b,
            cache: Mutex::new(None),
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn linear_term(&self) -> &DenseVector {
        &self.b
    }

    pub fn gradient(&self, x: &DenseVector) -> DenseVector {
        let mut g = matvec(&self.a, x);
        g.axpy(1.0, &self.b);
        g
    }
}

impl ProxOperator for QuadraticFunction {
    fn name(&self) -> String {
        format!("quadratic(dim {})", self.b.dim())
    }
    fn prox(&self, y: &DenseVector, eta: f64) -> Result<DenseVector> {
        check_eta(eta)?;
        if y.dim() != self.b.dim() {
            return Err(Error::param("quadratic prox: anchor dimension mismatch"));
        }
        let rhs = DenseVector::lincomb(1.0, y, -eta, &self.b).to_nalgebra();
        let mut cache = self.cache.lock().expect("prox cache poisoned");
        match cache.as_ref() {
            Some((cached_eta, chol)) if *cached_eta == eta => {
                Ok(DenseVector::from_nalgebra(&chol.solve(&rhs)))
            }
            _ => {
                let chol = shifted_factor(&self.a, eta)?;
                let out = DenseVector::from_nalgebra(&chol.solve(&rhs));
                *cache = Some((eta, chol));
                Ok(out)
            }
        }
    }
    fn value(&self, x: &DenseVector) -> f64 {
        0.5 * x.dot(&matvec(&self.a, x)) + self.b.dot(x)
    }
}

/// The prox of `g + h` computed by [`prox_sum_fixed_point`].
pub struct SumOfProxes {
    pub g: Arc<dyn ProxOperator>,
    pub h: Arc<dyn ProxOperator>,
    pub tol: f64,
    pub max_iter: usize,
}

impl SumOfProxes {
    pub fn new(g: Arc<dyn ProxOperator>, h: Arc<dyn ProxOperator>) -> Self {
        SumOfProxes {
            g,
            h,
            tol: DEFAULT_FIXED_POINT_TOL,
            max_iter: DEFAULT_FIXED_POINT_MAX_ITER,
        }
    }
}

impl ProxOperator for SumOfProxes {
    fn name(&self) -> String {
        format!("({})+({})", self.g.name(), self.h.name())
    }
    fn prox(&self, y: &DenseVector, eta: f64) -> Result<DenseVector> {
        Ok(prox_sum_fixed_point(&*self.g, &*self.h, y, eta, self.tol, self.max_iter)?.point)
    }
    fn value(&self, x: &DenseVector) -> f64 {
        self.g.value(x) + self.h.value(x)
    }
}

type ProxFn = dyn Fn(&DenseVector, f64) -> Result<DenseVector> + Send + Sync;
type ValueFn = dyn Fn(&DenseVector) -> f64 + Send + Sync;

/// An operator assembled from closures.
pub struct FnProx {
    name: String,
    prox: Box<ProxFn>,
    value: Box<ValueFn>,
}

impl FnProx {
    pub fn new(
        name: impl Into<String>,
        prox: impl Fn(&DenseVector, f64) -> Result<DenseVector> + Send + Sync + 'static,
        value: impl Fn(&DenseVector) -> f64 + Send + Sync + 'static,
    ) -> Self {
        FnProx {
            name: name.into(),
            prox: Box::new(prox),
            value: Box::new(value),
        }
    }
}

impl ProxOperator for FnProx {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn prox(&self, y: &DenseVector, eta: f64) -> Result<DenseVector> {
        check_eta(eta)?;
        (self.prox)(y, eta)
    }
    fn value(&self, x: &DenseVector) -> f64 {
        (self.value)(x)
    }
}

/// Checks `||P(y1) − P(y2)|| <= ||y1 − y2|| + slack` on random pairs drawn
/// uniformly from `[-spread, spread]^dim`. Returns the worst excess on failure.
pub fn check_nonexpansive(
    op: &dyn ProxOperator,
    dim: usize,
    eta: f64,
    pairs: usize,
    spread: f64,
    rng: &mut crate::rng::RandomSource,
) -> Result<(), String> {
    let draw = |rng: &mut crate::rng::RandomSource| {
        DenseVector::from((0..dim).map(|_| rng.uniform_range(-spread, spread)).collect::<Vec<_>>())
    };
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let (a, b) = (draw(rng), draw(rng));
        let pa = op.prox(&a, eta).map_err(|e| e.to_string())?;
        let pb = op.prox(&b, eta).map_err(|e| e.to_string())?;
        worst = worst.max(pa.dist(&pb) - a.dist(&b));
    }
    if worst <= 1e-12 {
        Ok(())
    } else {
        Err(format!("{} expands distances by {worst:e}", op.name()))
    }
}
