//! Invariant suites runnable from the command line.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::linalg::{DenseVector, Matrix};
use crate::prox::{
    check_nonexpansive, moreau_eval, prox_l1_plus_halfsq, prox_sum_fixed_point, BallIndicator, BoxIndicator, BoxL1,
    L1Norm, L1PlusHalfSq, LinearFunction, ProxOperator, QuadraticFunction, SumOfProxes, ZeroFunction,
};
use crate::rng::{make_rng, RandomSource};
use crate::schedules::{floor_bound_holds, lambda_next_fista, lambda_next_sc};
use crate::smoothing::{check_sandwich, check_smoothness, moreau_smoothable, MaxOfAffine, SmoothNorm, SmoothableFunction};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub checks: usize,
    pub failure: Option<String>,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub suites: Vec<SuiteResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.suites {
            let tag = if s.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{tag} {:<22} {:>5} checks {:>9.1} ms", s.name, s.checks, s.elapsed_ms));
            if let Some(f) = &s.failure {
                out.push_str(&format!("  ({f})"));
            }
            out.push('\n');
        }
        out
    }
}

fn suite(name: &str, body: impl FnOnce() -> Result<usize, String>) -> SuiteResult {
    let start = Instant::now();
    let outcome = body();
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok(checks) => SuiteResult {
            name: name.into(),
            passed: true,
            checks,
            failure: None,
            elapsed_ms,
        },
        Err(msg) => SuiteResult {
            name: name.into(),
            passed: false,
            checks: 0,
            failure: Some(msg),
            elapsed_ms,
        },
    }
}

fn random_vector(rng: &mut RandomSource, dim: usize, spread: f64) -> DenseVector {
    DenseVector::from((0..dim).map(|_| rng.uniform_range(-spread, spread)).collect::<Vec<_>>())
}

fn test_quadratic(dim: usize) -> (Matrix, DenseVector) {
    let a = Matrix::from_fn(dim, dim, |i, j| {
        if i == j {
            2.0 + i as f64 / dim as f64
        } else {
            0.3 / (1.0 + (i as f64 - j as f64).abs())
        }
    });
    let b = DenseVector::from((0..dim).map(|i| (i as f64 * 0.7).sin()).collect::<Vec<_>>());
    (a, b)
}

/// Every built-in operator, in five dimensions.
pub fn builtin_operators() -> Vec<Arc<dyn ProxOperator>> {
    let (a, b) = test_quadratic(5);
    vec![
        Arc::new(ZeroFunction),
        Arc::new(L1Norm { weight: 0.7 }),
        Arc::new(BoxIndicator { lo: -1.0, hi: 0.5 }),
        Arc::new(BallIndicator { radius: 1.5 }),
        Arc::new(BoxL1 {
            lo: -1.0,
            hi: 1.0,
            weight: 0.3,
        }),
        Arc::new(LinearFunction {
            c: DenseVector::from(vec![1.0, -2.0, 0.5, 0.0, 3.0]),
        }),
        Arc::new(L1PlusHalfSq { lambda: 0.4 }),
        Arc::new(QuadraticFunction::new(a, b).expect("test quadratic is positive definite")),
        Arc::new(SumOfProxes::new(
            Arc::new(L1Norm { weight: 0.2 }),
            Arc::new(BoxIndicator { lo: -0.8, hi: 0.8 }),
        )),
    ]
}

/// Minimizes a convex scalar function on `[lo, hi]` by golden sections.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (hi - r * (hi - lo), lo + r * (hi - lo));
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Non-expansiveness of each operator, plus coordinatewise brute-force checks
/// of the separable ones and the fixed-point composition.
pub fn prox_conformance(ops: &[Arc<dyn ProxOperator>]) -> SuiteResult {
    suite("prox-conformance", || {
        let mut rng = make_rng(11, 0);
        let mut checks = 0;
        for op in ops {
            for eta in [0.1, 1.0, 10.0] {
                check_nonexpansive(&**op, 5, eta, 100, 3.0, &mut rng)?;
                checks += 1;
            }
        }
        // scalar operators against golden-section minimization of the prox objective
        // (operator, search interval containing its domain)
        let scalar: Vec<(Arc<dyn ProxOperator>, f64, f64)> = vec![
            (Arc::new(L1Norm { weight: 0.7 }), -10.0, 10.0),
            (Arc::new(BoxIndicator { lo: -1.0, hi: 0.5 }), -1.0, 0.5),
            (
                Arc::new(BoxL1 {
                    lo: -1.0,
                    hi: 1.0,
                    weight: 0.3,
                }),
                -1.0,
                1.0,
            ),
            (Arc::new(L1PlusHalfSq { lambda: 0.4 }), -10.0, 10.0),
        ];
        let picked = scalar.iter().filter(|(s, _, _)| ops.iter().any(|o| o.name() == s.name()));
        for (op, lo, hi) in picked {
            let live = ops.iter().find(|o| o.name() == op.name()).expect("filtered above");
            for _ in 0..50 {
                let y = rng.uniform_range(-3.0, 3.0);
                let eta = rng.uniform_range(0.05, 5.0);
                let obj = |u: f64| {
                    op.value(&DenseVector::from(vec![u.clamp(*lo, *hi)])) + (u - y).powi(2) / (2.0 * eta)
                };
                let brute = golden_min(obj, *lo, *hi);
                let got = live.prox(&DenseVector::from(vec![y]), eta).map_err(|e| e.to_string())?[0];
                if (got - brute).abs() > 1e-6 {
                    return Err(format!("{} at y={y}, eta={eta}: {got} vs brute force {brute}", live.name()));
                }
                checks += 1;
            }
        }
        // one-dimensional instances of the remaining closed forms
        let fixed: Vec<(Arc<dyn ProxOperator>, f64, f64)> = vec![
            (Arc::new(ZeroFunction), -10.0, 10.0),
            (Arc::new(BallIndicator { radius: 0.8 }), -0.8, 0.8),
            (
                Arc::new(LinearFunction {
                    c: DenseVector::from(vec![-0.7]),
                }),
                -10.0,
                10.0,
            ),
            (
                Arc::new(
                    QuadraticFunction::new(Matrix::from_row_slice(1, 1, &[1.7]), DenseVector::from(vec![0.4]))
                        .map_err(|e| e.to_string())?,
                ),
                -10.0,
                10.0,
            ),
        ];
        for (op, lo, hi) in &fixed {
            for _ in 0..50 {
                let y = rng.uniform_range(-3.0, 3.0);
                let eta = rng.uniform_range(0.05, 5.0);
                let obj =
                    |u: f64| op.value(&DenseVector::from(vec![u.clamp(*lo, *hi)])) + (u - y).powi(2) / (2.0 * eta);
                let brute = golden_min(obj, *lo, *hi);
                let got = op.prox(&DenseVector::from(vec![y]), eta).map_err(|e| e.to_string())?[0];
                if (got - brute).abs() > 1e-6 {
                    return Err(format!("{} at y={y}, eta={eta}: {got} vs brute force {brute}", op.name()));
                }
                checks += 1;
            }
        }
        let l1 = L1Norm { weight: 0.6 };
        let half = QuadraticFunction::new(Matrix::identity(6, 6), DenseVector::zeros(6)).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let y = random_vector(&mut rng, 6, 3.0);
            let eta = rng.uniform_range(0.1, 3.0);
            let fp = prox_sum_fixed_point(&half, &l1, &y, eta, 1e-12, 100_000).map_err(|e| e.to_string())?;
            let exact = prox_l1_plus_halfsq(&y, 0.6, eta).map_err(|e| e.to_string())?;
            if fp.point.dist(&exact) > 1e-6 {
                return Err(format!("fixed point off by {:e}", fp.point.dist(&exact)));
            }
            checks += 1;
        }
        Ok(checks)
    })
}

fn smoothing_suite() -> SuiteResult {
    suite("smoothing-sandwich", || {
        let mut rng = make_rng(12, 0);
        let c = DenseVector::from(vec![0.5, -1.0, 0.25, 2.0]);
        let funcs: Vec<Box<dyn SmoothableFunction>> = vec![
            Box::new(SmoothNorm),
            Box::new(MaxOfAffine::new(vec![0.1, 0.5, -0.2], vec![1.0, -0.5, 0.3], c).map_err(|e| e.to_string())?),
            Box::new(moreau_smoothable(Arc::new(L1Norm { weight: 1.0 }), 2.0).map_err(|e| e.to_string())?),
        ];
        let xs: Vec<DenseVector> = (0..20).map(|_| random_vector(&mut rng, 4, 3.0)).collect();
        let etas = [1e-3, 0.1, 1.0, 10.0];
        let mut checks = 0;
        for f in &funcs {
            check_sandwich(&**f, &xs, &etas)?;
            let pairs: Vec<_> = xs.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect();
            for eta in etas {
                check_smoothness(&**f, &pairs, eta)?;
            }
            checks += xs.len() * etas.len() + pairs.len() * etas.len();
        }
        Ok(checks)
    })
}

fn lambda_suite() -> SuiteResult {
    suite("lambda-sequence", || {
        let mut checks = 0;
        for kappa in [2.0f64, 10.0, 100.0, 1e6] {
            let root = kappa.sqrt();
            for start in [1.0 + 1e-6, root] {
                let mut lambda = start;
                for _ in 0..10_000 {
                    let next = lambda_next_sc(lambda, kappa).map_err(|e| e.to_string())?;
                    if next < lambda || next > root + 1e-12 {
                        return Err(format!("kappa={kappa}: lambda {lambda} -> {next}"));
                    }
                    lambda = next;
                    checks += 1;
                }
            }
        }
        let mut lambda = 1.0;
        for k in 1..=10_000u64 {
            let kf = k as f64;
            if lambda < 0.5 * (kf + 1.0) - 1e-12 || lambda > kf + 1e-12 {
                return Err(format!("FISTA lambda_{k} = {lambda} outside [(k+1)/2, k]"));
            }
            lambda = lambda_next_fista(lambda);
            checks += 1;
        }
        Ok(checks)
    })
}

fn floor_suite() -> SuiteResult {
    suite("floor-bound", || {
        let mut checks = 0;
        let mut y = 1.0f64;
        while y < 1e9 {
            for t in [y, y.next_up(), y * 1.37, y + 0.5] {
                if !floor_bound_holds(t) {
                    return Err(format!("floor bound fails at {t}"));
                }
                checks += 1;
            }
            y *= 1.01;
        }
        Ok(checks)
    })
}

fn moreau_suite() -> SuiteResult {
    suite("moreau-gradient", || {
        let mut rng = make_rng(13, 0);
        let abs = L1Norm { weight: 1.0 };
        let (a, b) = test_quadratic(10);
        let quad = QuadraticFunction::new(a, b).map_err(|e| e.to_string())?;
        let ops: [(&dyn ProxOperator, usize); 2] = [(&abs, 1), (&quad, 10)];
        let mut checks = 0;
        for (op, dim) in ops {
            let value = |u: &DenseVector| op.value(u);
            let env = |x: &DenseVector, eta: f64| moreau_eval(op, &value, x, eta).map_err(|e| e.to_string());
            for _ in 0..50 {
                let x = random_vector(&mut rng, dim, 3.0);
                let eta = rng.uniform_range(0.05, 5.0);
                let g = env(&x, eta)?.gradient;
                let h = 1e-5;
                for i in 0..dim {
                    let mut plus = x.clone();
                    plus.as_mut_slice()[i] += h;
                    let mut minus = x.clone();
                    minus.as_mut_slice()[i] -= h;
                    let fd = (env(&plus, eta)?.value - env(&minus, eta)?.value) / (2.0 * h);
                    if (fd - g[i]).abs() > 1e-6 * g[i].abs().max(1.0) {
                        return Err(format!("{}: gradient {} vs difference quotient {fd}", op.name(), g[i]));
                    }
                    checks += 1;
                }
            }
            for _ in 0..100 {
                let (x, y) = (random_vector(&mut rng, dim, 3.0), random_vector(&mut rng, dim, 3.0));
                let eta = rng.uniform_range(0.05, 5.0);
                let ratio = env(&x, eta)?.gradient.dist(&env(&y, eta)?.gradient) / x.dist(&y);
                if ratio > 1.0 / eta + 1e-9 {
                    return Err(format!("{}: Lipschitz ratio {ratio} above 1/eta", op.name()));
                }
                checks += 1;
            }
        }
        Ok(checks)
    })
}

/// Runs every suite.
pub fn selftest() -> SelftestReport {
    SelftestReport {
        suites: vec![
            prox_conformance(&builtin_operators()),
            smoothing_suite(),
            lambda_suite(),
            floor_suite(),
            moreau_suite(),
        ],
    }
}
