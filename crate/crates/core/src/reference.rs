//! Ground-truth minimizers of the built-in mean objectives.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigen_range, matvec, solve_spd, DenseVector, Matrix};
use crate::oracle::{expected_max_of_affine, upper_envelope, EnvelopePiece, MeanModel, StochasticProblem};
use crate::prox::{prox_l1, BoxL1, L1Norm, ProxOperator, ZeroFunction};
use crate::rng::RandomSource;

/// Tolerance for closed-form and direct solves.
pub const DEFAULT_TOL_EXACT: f64 = 1e-10;
/// Tolerance for iterative references.
pub const DEFAULT_TOL_ITERATIVE: f64 = 1e-8;

const MAX_ITERATIONS: usize = 20_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMethod {
    ClosedForm,
    DeterministicHighAccuracy,
    LargeSaa,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub x_star: DenseVector,
    pub f_star: f64,
    pub method: ReferenceMethod,
    /// Requested bound on the optimality residual.
    pub tolerance: f64,
    /// Achieved optimality residual.
    pub residual: f64,
    pub saa_samples: Option<u64>,
    pub fingerprint: String,
}

impl ReferenceSolution {
    /// `F(y) − F*`, clamped below at 0.
    pub fn gap(&self, problem: &dyn StochasticProblem, y: &DenseVector) -> f64 {
        (problem.mean_model().objective(y) - self.f_star).max(0.0)
    }

    /// `||y − x*||²`.
    pub fn dist_sq(&self, y: &DenseVector) -> f64 {
        y.dist_sq(&self.x_star)
    }
}

/// Norm of the minimum-norm element of `∂F(x)`; `+inf` outside the domain.
pub fn optimality_residual(model: &MeanModel, x: &DenseVector) -> f64 {
    match model {
        MeanModel::SeparableL1 { alpha, beta, lambda } => {
            let grad = DenseVector::lincomb(*alpha, x, 1.0, beta);
            l1_box_residual(&grad, x, *lambda, None)
        }
        MeanModel::CompositeQuadratic { a, b, lambda, bounds } => {
            let mut grad = matvec(a, x);
            grad.axpy(1.0, b);
            l1_box_residual(&grad, x, *lambda, *bounds)
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
            if r > radius * (1.0 + 1e-12) {
                return f64::INFINITY;
            }
            let pieces = upper_envelope(v, s);
            let e = expected_max_of_affine(&pieces, c.dot(x), sigma * r);
            let mut grad = DenseVector::lincomb(e.d_mean, c, *mu, x);
            if r > 0.0 {
                grad.axpy(sigma * e.d_sd / r, x);
            }
            if r >= radius * (1.0 - 1e-12) && r > 0.0 {
                // add the best element t·x, t ≥ 0, of the normal cone
                let t = (-grad.dot(x) / (r * r)).max(0.0);
                grad.axpy(t, x);
            }
            grad.norm()
        }
    }
}

fn l1_box_residual(grad: &DenseVector, x: &DenseVector, lambda: f64, bounds: Option<(f64, f64)>) -> f64 {
    let tol = 1e-12;
    let mut acc = 0.0;
    for (&g, &xi) in grad.iter().zip(x.iter()) {
        let r = match bounds {
            Some((lo, hi)) if xi < lo - tol || xi > hi + tol => return f64::INFINITY,
            Some((_, hi)) if xi >= hi - tol && hi > 0.0 => (g + lambda).max(0.0),
            Some((lo, _)) if xi <= lo + tol && lo < 0.0 => (lambda - g).max(0.0),
            _ if xi > 0.0 => (g + lambda).abs(),
            _ if xi < 0.0 => (g - lambda).abs(),
            _ => (g.abs() - lambda).max(0.0),
        };
        acc += r * r;
    }
    acc.sqrt()
}

/// Outcome of [`solve_composite_quadratic`].
#[derive(Clone, Debug)]
pub struct CompositeSolve {
    pub x: DenseVector,
    pub residual: f64,
    pub iterations: usize,
}

/// Minimizes `½ xᵀAx + bᵀx + λ||x||_1` over `[lo, hi]^n` (or `R^n`) by FISTA
/// with function-value restarts, until the optimality residual is at most `tol`.
pub fn solve_composite_quadratic(
    a: &Matrix,
    b: &DenseVector,
    lambda: f64,
    bounds: Option<(f64, f64)>,
    tol: f64,
) -> Result<CompositeSolve> {
    if !(tol > 0.0) {
        return Err(Error::param("tolerance must be positive"));
    }
    let (_, l) = eigen_range(a);
    if !(l > 0.0) {
        return Err(Error::param("quadratic term must have a positive eigenvalue"));
    }
    let g: Box<dyn ProxOperator> = match bounds {
        Some((lo, hi)) => Box::new(BoxL1 { lo, hi, weight: lambda }),
        None if lambda > 0.0 => Box::new(L1Norm { weight: lambda }),
        None => Box::new(ZeroFunction),
    };
    let model = MeanModel::CompositeQuadratic {
        a: a.clone(),
        b: b.clone(),
        lambda,
        bounds,
    };
    let step = 1.0 / l;
    let start = match bounds {
        Some((lo, hi)) => DenseVector::filled(b.dim(), 0.0f64.clamp(lo, hi)),
        None => DenseVector::zeros(b.dim()),
    };
    let mut x = start.clone();
    let mut y = start;
    let mut t = 1.0f64;
    let mut best = f64::INFINITY;
    for iter in 1..=MAX_ITERATIONS {
        let mut grad = matvec(a, &y);
        grad.axpy(1.0, b);
        let x_new = g.prox(&DenseVector::lincomb(1.0, &y, -step, &grad), step)?;
        // gradient-mapping restart test
        if (&y - &x_new).dot(&(&x_new - &x)) > 0.0 {
            t = 1.0;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mut y_new = x_new.scale(1.0 + (t - 1.0) / t_new);
        y_new.axpy(-(t - 1.0) / t_new, &x);
        y = y_new;
        x = x_new;
        t = t_new;
        if iter % 8 == 0 {
            let r = optimality_residual(&model, &x);
            best = best.min(r);
            if r <= tol {
                return Ok(CompositeSolve {
                    x,
                    residual: r,
                    iterations: iter,
                });
            }
            if r < 1e-3 && iter % 64 == 0 {
                if let Some((p, pr)) = polish(&model, a, b, lambda, bounds, &x, tol) {
                    return Ok(CompositeSolve {
                        x: p,
                        residual: pr,
                        iterations: iter,
                    });
                }
            }
        }
    }
    Err(Error::Convergence {
        what: "composite quadratic reference".into(),
        iterations: MAX_ITERATIONS,
        residual: best,
    })
}

/// Guesses the active set from `x` and solves the reduced linear system
/// exactly; returns the result when it satisfies the optimality test.
fn polish(
    model: &MeanModel,
    a: &Matrix,
    b: &DenseVector,
    lambda: f64,
    bounds: Option<(f64, f64)>,
    x: &DenseVector,
    tol: f64,
) -> Option<(DenseVector, f64)> {
    let n = x.dim();
    for thr in [1e-5, 1e-7, 1e-9, 1e-11] {
        let mut fixed = x.clone();
        let mut free = Vec::new();
        for i in 0..n {
            let xi = x[i];
            match bounds {
                Some((_, hi)) if (xi - hi).abs() <= thr => fixed.as_mut_slice()[i] = hi,
                Some((lo, _)) if (xi - lo).abs() <= thr => fixed.as_mut_slice()[i] = lo,
                _ if xi.abs() <= thr && lambda > 0.0 => fixed.as_mut_slice()[i] = 0.0,
                _ => free.push(i),
            }
        }
        let mut cand = fixed.clone();
        if !free.is_empty() {
            for &i in &free {
                cand.as_mut_slice()[i] = 0.0;
            }
            let coupling = matvec(a, &cand);
            let m = Matrix::from_fn(free.len(), free.len(), |r, c| a[(free[r], free[c])]);
            let rhs = DenseVector::from(
                free.iter()
                    .map(|&i| -(b[i] + coupling[i] + lambda * x[i].signum()))
                    .collect::<Vec<_>>(),
            );
            let z = solve_spd(&m, &rhs).ok()?;
            for (&i, &zi) in free.iter().zip(z.iter()) {
                cand.as_mut_slice()[i] = zi;
            }
        }
        let r = optimality_residual(model, &cand);
        if r <= tol {
            return Some((cand, r));
        }
    }
    None
}

/// `h(r) = G(−r||c||, σr) + μr²/2` and `h'(r)`.
fn utility_profile(pieces: &[EnvelopePiece], cn: f64, sigma: f64, mu: f64, r: f64) -> (f64, f64) {
    let e = expected_max_of_affine(pieces, -r * cn, sigma * r);
    (e.value + 0.5 * mu * r * r, -cn * e.d_mean + sigma * e.d_sd + mu * r)
}

/// Minimizer of the utility objective. It lies on the ray `−r c/||c||`:
/// for fixed `||x||` the objective increases with `cᵀx`, so the problem
/// reduces to the convex scalar `h` on `[0, radius]`.
fn utility_reference(
    c: &DenseVector,
    v: &[f64],
    s: &[f64],
    sigma: f64,
    mu: f64,
    radius: f64,
) -> (DenseVector, f64, f64) {
    let pieces = upper_envelope(v, s);
    let cn = c.norm();
    let h = |r: f64| utility_profile(&pieces, cn, sigma, mu, r);
    let (r_star, residual) = if h(radius).1 <= 0.0 {
        (radius, 0.0)
    } else if h(0.0).1 >= 0.0 {
        (0.0, 0.0)
    } else {
        let (mut lo, mut hi) = (0.0, radius);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid).1 > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let mid = 0.5 * (lo + hi);
        // a kink of the noiseless profile is certified by the sign change
        let res = if sigma > 0.0 { h(mid).1.abs() } else { 0.0 };
        (mid, res)
    };
    let x = c.scale(-r_star / cn);
    (x, h(r_star).0, residual)
}

/// Computes `x*` and `F*` for a built-in problem.
pub fn reference_solution(
    problem: &dyn StochasticProblem,
    tol: f64,
    _rng: &RandomSource,
) -> Result<ReferenceSolution> {
    if !(tol > 0.0) {
        return Err(Error::param("tolerance must be positive"));
    }
    let model = problem.mean_model();
    let (x, method) = match model {
        MeanModel::SeparableL1 { alpha, beta, lambda } => {
            let x = prox_l1(&beta.scale(-1.0 / alpha), lambda / alpha)?;
            (x, ReferenceMethod::ClosedForm)
        }
        MeanModel::CompositeQuadratic {
            a,
            b,
            lambda: 0.0,
            bounds: None,
        } => (solve_spd(a, &-b)?, ReferenceMethod::ClosedForm),
        MeanModel::CompositeQuadratic { a, b, lambda, bounds } => {
            let out = solve_composite_quadratic(a, b, *lambda, *bounds, tol)?;
            (out.x, ReferenceMethod::DeterministicHighAccuracy)
        }
        MeanModel::Utility {
            c,
            v,
            s,
            sigma,
            mu,
            radius,
        } => {
            let (x, _, _) = utility_reference(c, v, s, *sigma, *mu, *radius);
            (x, ReferenceMethod::DeterministicHighAccuracy)
        }
    };
    let residual = match model {
        MeanModel::Utility {
            c,
            v,
            s,
            sigma,
            mu,
            radius,
        } => utility_reference(c, v, s, *sigma, *mu, *radius).2,
        _ => optimality_residual(model, &x),
    };
    if residual > tol {
        return Err(Error::Convergence {
            what: format!("{} reference", problem.meta().name),
            iterations: 0,
            residual,
        });
    }
    Ok(ReferenceSolution {
        f_star: model.objective(&x),
        x_star: x,
        method,
        tolerance: tol,
        residual,
        saa_samples: None,
        fingerprint: problem.fingerprint(),
    })
}

type Cache = Mutex<HashMap<(String, u64), Arc<ReferenceSolution>>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// [`reference_solution`], memoized by problem fingerprint and tolerance.
pub fn cached_reference(problem: &dyn StochasticProblem, tol: f64) -> Result<Arc<ReferenceSolution>> {
    let key = (problem.fingerprint(), tol.to_bits());
    if let Some(hit) = cache().lock().expect("reference cache poisoned").get(&key) {
        return Ok(hit.clone());
    }
    let sol = Arc::new(reference_solution(problem, tol, &crate::rng::make_rng(0, 0))?);
    cache()
        .lock()
        .expect("reference cache poisoned")
        .insert(key, sol.clone());
    Ok(sol)
}
