//! Batch-size, step-size and smoothing sequences, and the two λ recursions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default ceiling on any batch size.
pub const DEFAULT_BATCH_CAP: u64 = (1 << 31) - 1;

fn half() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

/// A parameter sequence indexed by the outer iteration `k ≥ 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleSpec {
    /// `⌊ρ^{-k}⌋`
    GeometricBatch {
        rho: f64,
        #[serde(default)]
        cap: Option<u64>,
    },
    /// `⌊ρ^{-2k}⌋`
    GeometricBatchSquared {
        rho: f64,
        #[serde(default)]
        cap: Option<u64>,
    },
    /// `⌊k^a⌋`
    PolynomialBatch {
        a: f64,
        #[serde(default)]
        cap: Option<u64>,
    },
    /// `⌊k² K⌋`
    HorizonScaledBatch {
        horizon: u64,
        #[serde(default)]
        cap: Option<u64>,
    },
    /// `γ`
    ConstantStep { gamma: f64 },
    /// `scale / k`
    HarmonicStep {
        #[serde(default = "half")]
        scale: f64,
    },
    /// `scale · k^{-b}` with `b ∈ (0, 1/2]`
    PowerStep {
        b: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `scale / k`
    HarmonicSmoothing {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `c · k^{-b}` with `c > 1`
    PowerSmoothing { c: f64, b: f64 },
    /// A fixed level, given directly or as `1/horizon`.
    ConstantSmoothing {
        #[serde(default)]
        eta: Option<f64>,
        #[serde(default)]
        horizon: Option<u64>,
    },
}

/// What a schedule is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleRole {
    Batch,
    Step,
    Smoothing,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_cap(cap: Option<u64>) -> Result<()> {
    match cap {
        Some(0) => Err(Error::param("batch cap must be at least 1")),
        _ => Ok(()),
    }
}

impl ScheduleSpec {
    pub fn role(&self) -> ScheduleRole {
        use ScheduleSpec::*;
        match self {
            GeometricBatch { .. } | GeometricBatchSquared { .. } | PolynomialBatch { .. } | HorizonScaledBatch { .. } => {
                ScheduleRole::Batch
            }
            ConstantStep { .. } | HarmonicStep { .. } | PowerStep { .. } => ScheduleRole::Step,
            HarmonicSmoothing { .. } | PowerSmoothing { .. } | ConstantSmoothing { .. } => ScheduleRole::Smoothing,
        }
    }

    pub fn validate(&self) -> Result<()> {
        use ScheduleSpec::*;
        match *self {
            GeometricBatch { rho, cap } | GeometricBatchSquared { rho, cap } => {
                if !(rho > 0.0 && rho < 1.0) {
                    return Err(Error::param(format!("geometric rate must lie in (0,1), got {rho}")));
                }
                check_cap(cap)
            }
            PolynomialBatch { a, cap } => {
                if !(a >= 0.0 && a.is_finite()) {
                    return Err(Error::param(format!("batch exponent must be >= 0, got {a}")));
                }
                check_cap(cap)
            }
            HorizonScaledBatch { horizon, cap } => {
                if horizon == 0 {
                    return Err(Error::param("batch horizon must be at least 1"));
                }
                check_cap(cap)
            }
            ConstantStep { gamma } => positive("step size", gamma),
            HarmonicStep { scale } => positive("step scale", scale),
            PowerStep { b, scale } => {
                if !(b > 0.0 && b <= 0.5) {
                    return Err(Error::param(format!("step exponent must lie in (0, 1/2], got {b}")));
                }
                positive("step scale", scale)
            }
            HarmonicSmoothing { scale } => positive("smoothing scale", scale),
            PowerSmoothing { c, b } => {
                if !(c > 1.0 && c.is_finite()) {
                    return Err(Error::param(format!("smoothing constant must exceed 1, got {c}")));
                }
                if !(b > 0.0 && b <= 0.5) {
                    return Err(Error::param(format!("smoothing exponent must lie in (0, 1/2], got {b}")));
                }
                Ok(())
            }
            ConstantSmoothing { eta, horizon } => match (eta, horizon) {
                (Some(e), None) => positive("smoothing level", e),
                (None, Some(h)) if h > 0 => Ok(()),
                _ => Err(Error::param("constant smoothing needs exactly one of eta or a positive horizon")),
            },
        }
    }

    fn expect(&self, role: ScheduleRole) -> Result<()> {
        if self.role() == role {
            self.validate()
        } else {
            Err(Error::param(format!("{self:?} is not a {role:?} schedule")))
        }
    }
}

fn saturating_floor(value: f64, cap: u64) -> u64 {
    if !(value < cap as f64) {
        return cap;
    }
    (value.floor() as u64).clamp(1, cap)
}

/// `N_k`: the floor of the scheduled value, clamped to `[1, cap]`.
pub fn batch_size(spec: &ScheduleSpec, k: u64) -> Result<u64> {
    spec.expect(ScheduleRole::Batch)?;
    if k == 0 {
        return Err(Error::param("iteration index starts at 1"));
    }
    let kf = k as f64;
    let (value, cap) = match *spec {
        ScheduleSpec::GeometricBatch { rho, cap } => (rho.powf(-kf), cap),
        ScheduleSpec::GeometricBatchSquared { rho, cap } => (rho.powf(-2.0 * kf), cap),
        ScheduleSpec::PolynomialBatch { a, cap } => (kf.powf(a), cap),
        ScheduleSpec::HorizonScaledBatch { horizon, cap } => (kf * kf * horizon as f64, cap),
        _ => unreachable!(),
    };
    Ok(saturating_floor(value, cap.unwrap_or(DEFAULT_BATCH_CAP)))
}

/// `γ_k`.
pub fn step_size(spec: &ScheduleSpec, k: u64) -> Result<f64> {
    spec.expect(ScheduleRole::Step)?;
    if k == 0 {
        return Err(Error::param("iteration index starts at 1"));
    }
    let kf = k as f64;
    Ok(match *spec {
        ScheduleSpec::ConstantStep { gamma } => gamma,
        ScheduleSpec::HarmonicStep { scale } => scale / kf,
        ScheduleSpec::PowerStep { b, scale } => scale * kf.powf(-b),
        _ => unreachable!(),
    })
}

/// `η_k`.
pub fn smoothing_param(spec: &ScheduleSpec, k: u64) -> Result<f64> {
    spec.expect(ScheduleRole::Smoothing)?;
    if k == 0 {
        return Err(Error::param("iteration index starts at 1"));
    }
    let kf = k as f64;
    Ok(match *spec {
        ScheduleSpec::HarmonicSmoothing { scale } => scale / kf,
        ScheduleSpec::PowerSmoothing { c, b } => c * kf.powf(-b),
        ScheduleSpec::ConstantSmoothing { eta: Some(e), .. } => e,
        ScheduleSpec::ConstantSmoothing { horizon: Some(h), .. } => 1.0 / h as f64,
        _ => unreachable!(),
    })
}

/// Largest `K` with `N_1 + … + N_K ≤ budget` (0 if even `N_1` exceeds it).
pub fn iterations_within_budget(spec: &ScheduleSpec, budget: u64) -> Result<u64> {
    let mut total = 0u64;
    let mut k = 0u64;
    loop {
        let n = batch_size(spec, k + 1)?;
        match total.checked_add(n) {
            Some(t) if t <= budget => {
                total = t;
                k += 1;
            }
            _ => return Ok(k),
        }
    }
}

/// Geometric rate `ρ = 1 − 1/(a√κ)`.
pub fn geometric_rate(kappa: f64, a: f64) -> Result<f64> {
    if !(kappa >= 1.0) || !(a > 1.0) {
        return Err(Error::param(format!("need kappa >= 1 and a > 1, got kappa={kappa}, a={a}")));
    }
    Ok(1.0 - 1.0 / (a * kappa.sqrt()))
}

/// Strongly convex λ recursion:
/// `λ_{k+1} = (1 − λ²/κ + sqrt((1 − λ²/κ)² + 4λ²)) / 2`.
pub fn lambda_next_sc(lambda: f64, kappa: f64) -> Result<f64> {
    if !(kappa > 1.0) || !kappa.is_finite() {
        return Err(Error::param(format!("condition number must exceed 1, got {kappa}")));
    }
    let root = kappa.sqrt();
    if !(lambda >= 1.0 - 1e-12) || lambda > root * (1.0 + 1e-12) {
        return Err(Error::param(format!("lambda {lambda} outside [1, sqrt(kappa) = {root}]")));
    }
    let lambda = lambda.min(root);
    let r = 1.0 - lambda * lambda / kappa;
    let next = 0.5 * (r + (r * r + 4.0 * lambda * lambda).sqrt());
    Ok(next.clamp(lambda, root))
}

/// Momentum `(λ_k − 1)(1 − λ_{k+1}/κ) / (1 + (1 − 2/κ) λ_{k+1})`.
pub fn momentum_sc(lambda: f64, lambda_next: f64, kappa: f64) -> f64 {
    (lambda - 1.0) * (1.0 - lambda_next / kappa) / (1.0 + (1.0 - 2.0 / kappa) * lambda_next)
}

/// FISTA recursion `(1 + sqrt(1 + 4λ²)) / 2`.
pub fn lambda_next_fista(lambda: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * lambda * lambda).sqrt())
}

/// FISTA momentum `(λ_k − 1)/λ_{k+1}`.
pub fn momentum_fista(lambda: f64, lambda_next: f64) -> f64 {
    (lambda - 1.0) / lambda_next
}

/// `⌊y⌋ ≥ ⌈y/2⌉` for `y ≥ 1`.
pub fn floor_bound_holds(y: f64) -> bool {
    y >= 1.0 && y.floor() >= (y / 2.0).ceil()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn batch_examples() {
        let g = ScheduleSpec::GeometricBatch { rho: 0.5, cap: None };
        assert_eq!(batch_size(&g, 3).unwrap(), 8);
        let g2 = ScheduleSpec::GeometricBatchSquared { rho: 0.5, cap: None };
        assert_eq!(batch_size(&g2, 3).unwrap(), 64);
        let p = ScheduleSpec::PolynomialBatch { a: 3.001, cap: None };
        assert_eq!(batch_size(&p, 10).unwrap(), 1002);
        let h = ScheduleSpec::HorizonScaledBatch { horizon: 7, cap: None };
        assert_eq!(batch_size(&h, 3).unwrap(), 63);
    }

    #[test]
    fn batch_cap_saturates() {
        let g = ScheduleSpec::GeometricBatch { rho: 0.5, cap: Some(1000) };
        assert_eq!(batch_size(&g, 9).unwrap(), 512);
        assert_eq!(batch_size(&g, 10).unwrap(), 1000);
        assert_eq!(batch_size(&g, 5000).unwrap(), 1000);
        let d = ScheduleSpec::GeometricBatch { rho: 0.5, cap: None };
        assert_eq!(batch_size(&d, 5000).unwrap(), DEFAULT_BATCH_CAP);
        let tiny = ScheduleSpec::GeometricBatch { rho: 0.999, cap: None };
        assert_eq!(batch_size(&tiny, 1).unwrap(), 1);
    }

    #[test]
    fn wrong_role_rejected() {
        let g = ScheduleSpec::GeometricBatch { rho: 0.5, cap: None };
        assert!(step_size(&g, 1).is_err());
        assert!(smoothing_param(&g, 1).is_err());
        assert!(batch_size(&ScheduleSpec::ConstantStep { gamma: 1.0 }, 1).is_err());
    }

    #[test]
    fn floor_bound_on_geometric_values() {
        for k in 1..=50 {
            assert!(floor_bound_holds(0.9f64.powi(-k)));
        }
    }

    #[test]
    fn lambda_sc_examples() {
        assert_eq!(lambda_next_sc(2.0, 4.0).unwrap(), 2.0);
        let l = lambda_next_sc(1.0, 4.0).unwrap();
        assert!((l - (0.75 + 4.5625f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!((l - 1.443000).abs() < 1e-6);
        assert!(lambda_next_sc(2.5, 4.0).is_err());
        assert!(lambda_next_sc(1.0, 1.0).is_err());
    }

    #[test]
    fn lambda_sc_converges_for_moderate_kappa() {
        let mut l = 1.0;
        let mut prev = l;
        for _ in 0..10_000 {
            l = lambda_next_sc(l, 100.0).unwrap();
            assert!(l >= prev);
            prev = l;
        }
        assert!((l - 10.0).abs() <= 1e-6);
    }

    #[test]
    fn momentum_examples() {
        assert_eq!(momentum_sc(1.0, 1.5, 4.0), 0.0);
        assert_eq!(momentum_sc(2.0, 2.0, 4.0), 0.25);
        let l1 = 1.443;
        let l2 = lambda_next_sc(l1, 4.0).unwrap();
        let again = (l1 - 1.0) * (1.0 - l2 / 4.0) / (1.0 + (1.0 - 2.0 / 4.0) * l2);
        assert!((momentum_sc(l1, l2, 4.0) - again).abs() < 1e-12);
    }

    #[test]
    fn fista_examples() {
        assert!((lambda_next_fista(1.0) - 1.618_033_988_749_895).abs() < 1e-15);
        assert_eq!(lambda_next_fista(0.0), 1.0);
        let mut l = 1.0;
        for k in 1..=1000u32 {
            let kf = k as f64;
            assert!(kf / 2.0 <= l && l <= kf, "k={k} lambda={l}");
            l = lambda_next_fista(l);
        }
    }

    #[test]
    fn step_and_smoothing_examples() {
        assert_eq!(step_size(&ScheduleSpec::ConstantStep { gamma: 0.125 }, 17).unwrap(), 0.125);
        assert_eq!(step_size(&ScheduleSpec::HarmonicStep { scale: 0.5 }, 10).unwrap(), 0.05);
        assert_eq!(step_size(&ScheduleSpec::PowerStep { b: 0.5, scale: 1.0 }, 4).unwrap(), 0.5);
        assert!(step_size(&ScheduleSpec::PowerStep { b: 0.6, scale: 1.0 }, 4).is_err());
        assert!(step_size(&ScheduleSpec::PowerStep { b: 0.0, scale: 1.0 }, 4).is_err());

        assert_eq!(smoothing_param(&ScheduleSpec::HarmonicSmoothing { scale: 1.0 }, 5).unwrap(), 0.2);
        let fixed = ScheduleSpec::ConstantSmoothing { eta: None, horizon: Some(100) };
        assert_eq!(smoothing_param(&fixed, 1).unwrap(), 0.01);
        assert_eq!(smoothing_param(&fixed, 77).unwrap(), 0.01);
        assert_eq!(smoothing_param(&ScheduleSpec::PowerSmoothing { c: 2.0, b: 0.5 }, 4).unwrap(), 1.0);
        assert!(smoothing_param(&ScheduleSpec::PowerSmoothing { c: 1.0, b: 0.5 }, 4).is_err());
    }

    #[test]
    fn decreasing_kinds_are_nonincreasing() {
        let specs = [
            ScheduleSpec::HarmonicStep { scale: 0.5 },
            ScheduleSpec::PowerStep { b: 0.3, scale: 1.0 },
            ScheduleSpec::HarmonicSmoothing { scale: 1.0 },
            ScheduleSpec::PowerSmoothing { c: 2.0, b: 0.5 },
        ];
        for spec in &specs {
            let val = |k| match spec.role() {
                ScheduleRole::Step => step_size(spec, k).unwrap(),
                _ => smoothing_param(spec, k).unwrap(),
            };
            let mut prev = val(1);
            for k in 2..=10_000 {
                let cur = val(k);
                assert!(cur > 0.0 && cur <= prev);
                prev = cur;
            }
        }
    }

    #[test]
    fn budget_horizon() {
        let p = ScheduleSpec::PolynomialBatch { a: 2.0, cap: None };
        // 1 + 4 + 9 + 16 = 30
        assert_eq!(iterations_within_budget(&p, 30).unwrap(), 4);
        assert_eq!(iterations_within_budget(&p, 29).unwrap(), 3);
        assert_eq!(iterations_within_budget(&p, 0).unwrap(), 0);
    }

    #[test]
    fn geometric_total_within_envelope() {
        for kappa in [4.0f64, 100.0, 1e4] {
            let a = 2.01;
            let rho = geometric_rate(kappa, a).unwrap();
            let spec = ScheduleSpec::GeometricBatch { rho, cap: None };
            for eps in [1e-2f64, 1e-4, 1e-6] {
                let c_tilde = 1.0f64;
                let big_k = ((c_tilde / eps).ln() / (1.0 / rho).ln()).ceil() as u64;
                let total: u64 = (1..=big_k).map(|k| batch_size(&spec, k).unwrap()).sum();
                let envelope = a * kappa.sqrt() * c_tilde / (eps * rho);
                assert!((total as f64) <= envelope, "kappa {kappa} eps {eps}");
            }
        }
    }

    #[test]
    fn serde_round_trip() {
        let spec = ScheduleSpec::PolynomialBatch { a: 3.001, cap: Some(10) };
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(text, r#"{"kind":"polynomial-batch","a":3.001,"cap":10}"#);
        let back: ScheduleSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let h: ScheduleSpec = serde_json::from_str(r#"{"kind":"harmonic-step"}"#).unwrap();
        assert_eq!(h, ScheduleSpec::HarmonicStep { scale: 0.5 });
    }

    proptest! {
        #[test]
        fn lambda_sc_monotone_bounded(kappa in 1.5f64..1e6, frac in 0.0f64..1.0) {
            let root = kappa.sqrt();
            let mut l = 1.0 + frac * (root - 1.0);
            for _ in 0..200 {
                let next = lambda_next_sc(l, kappa).unwrap();
                prop_assert!(next >= l && next <= root + 1e-12);
                // λ_k² = λ_{k+1}(λ_{k+1} − 1)/(1 − λ_{k+1}/κ)
                if next < root {
                    let back = next * (next - 1.0) / (1.0 - next / kappa);
                    prop_assert!((back - l * l).abs() <= 1e-10 * l * l);
                }
                prop_assert!(momentum_sc(l, next, kappa) >= 0.0);
                l = next;
            }
        }

        #[test]
        fn batch_sizes_in_range(a in 0.0f64..5.0, k in 1u64..100_000, cap in 1u64..1_000_000) {
            let spec = ScheduleSpec::PolynomialBatch { a, cap: Some(cap) };
            let n = batch_size(&spec, k).unwrap();
            prop_assert!(n >= 1 && n <= cap);
        }
    }
}
