//! SGD, VS-APM and its smoothed variants, all driven by one outer loop.
//!
//! Iteration `k` draws its batch from `root.substream(k)` where `root` is
//! `make_rng(config.seed, 0)`, so a run is a pure function of the problem and
//! the configuration. Record 0 holds the starting point; record `k` holds the
//! prox-gradient point produced by iteration `k`.
//!
//! Counters: `cum_samples` is the sum of issued batch sizes, `cum_prox` counts
//! every application of a proximal map (the outer step plus any inner ones),
//! and `cum_inner` counts iterations of inner solvers.

mod config;
mod engine;
mod estimators;

use serde::{Deserialize, Serialize};

pub use config::{FinalBatchPolicy, InnerConfig, SolverConfig};
pub use engine::{GapFn, Record, Status, Trajectory};

use engine::{clamp_kappa, run_outer, Momentum, Outer};
use estimators::{BatchGradient, InnerSgd, NestedVsApm, SaaProx};

use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::oracle::{SamplingOptions, StochasticProblem};
use crate::schedules::{
    batch_size, geometric_rate, iterations_within_budget, smoothing_param, step_size, ScheduleSpec,
};

/// Which method to run, with its method-specific constants. Constants left
/// out are taken from the problem metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SolverKind {
    Sgd,
    VsApm {
        #[serde(default)]
        l: Option<f64>,
        #[serde(default)]
        mu: Option<f64>,
    },
    VsApmConvex {
        #[serde(default)]
        l: Option<f64>,
    },
    EtaVsApmProx {
        eta: f64,
    },
    EtaVsApmSgd {
        eta: f64,
    },
    EtaVsApmNested {
        eta: f64,
        #[serde(default)]
        l: Option<f64>,
    },
    SvsApm {
        /// Use the constant level `c/K` (step `c/(2K)`) with `K` the number of
        /// iterations the batch schedule fits in the budget.
        #[serde(default)]
        fixed_smoothing: Option<f64>,
    },
}

impl SolverKind {
    /// Short label used in reports.
    pub fn label(&self) -> String {
        match self {
            SolverKind::Sgd => "sgd".into(),
            SolverKind::VsApm { .. } => "vs-apm".into(),
            SolverKind::VsApmConvex { .. } => "vs-apm-convex".into(),
            SolverKind::EtaVsApmProx { eta } => format!("eta-vs-apm-prox(eta={eta})"),
            SolverKind::EtaVsApmSgd { eta } => format!("eta-vs-apm-sgd(eta={eta})"),
            SolverKind::EtaVsApmNested { eta, .. } => format!("eta-vs-apm-nested(eta={eta})"),
            SolverKind::SvsApm { fixed_smoothing: None } => "svs-apm".into(),
            SolverKind::SvsApm { fixed_smoothing: Some(c) } => format!("svs-apm-fixed(c={c})"),
        }
    }
}

/// Runs `kind` on `problem`, stopping early when `stop` reports a gap at most
/// `config.stop_gap`.
pub fn run_solver(
    problem: &dyn StochasticProblem,
    kind: &SolverKind,
    config: &SolverConfig,
    stop: Option<GapFn<'_>>,
) -> Result<Trajectory> {
    config.validate()?;
    match kind {
        SolverKind::Sgd => sgd_impl(problem, config, stop),
        SolverKind::VsApm { l, mu } => {
            let l = lipschitz(problem, *l)?;
            let mu = mu.unwrap_or(problem.meta().mu);
            vs_apm_impl(problem, l, mu, config, stop)
        }
        SolverKind::VsApmConvex { l } => vs_apm_convex_impl(problem, lipschitz(problem, *l)?, config, stop),
        SolverKind::EtaVsApmProx { eta } => eta_impl(problem, *eta, Inner::Saa, config, stop),
        SolverKind::EtaVsApmSgd { eta } => eta_impl(problem, *eta, Inner::Sgd, config, stop),
        SolverKind::EtaVsApmNested { eta, l } => {
            let l = lipschitz(problem, *l)?;
            eta_impl(problem, *eta, Inner::Nested { l }, config, stop)
        }
        SolverKind::SvsApm { fixed_smoothing } => svs_apm_impl(problem, *fixed_smoothing, config, stop),
    }
}

fn lipschitz(problem: &dyn StochasticProblem, given: Option<f64>) -> Result<f64> {
    given
        .or(problem.meta().l)
        .ok_or_else(|| Error::param(format!("{} has no smoothness constant; supply `l`", problem.meta().name)))
}

fn start_point(problem: &dyn StochasticProblem, config: &SolverConfig) -> Result<DenseVector> {
    let x0 = match &config.x0 {
        Some(v) if v.len() != problem.dim() => {
            return Err(Error::param(format!(
                "x0 has length {} but the problem has dimension {}",
                v.len(),
                problem.dim()
            )))
        }
        Some(v) => DenseVector::new(v.clone())?,
        None => DenseVector::zeros(problem.dim()),
    };
    if !problem.domain().value(&x0).is_finite() {
        return Err(Error::param("x0 lies outside the domain of g"));
    }
    Ok(x0)
}

fn sampling(config: &SolverConfig) -> SamplingOptions {
    SamplingOptions {
        aggregate: config.aggregate_sampling,
    }
}

fn batch_fn<'a>(spec: ScheduleSpec) -> Box<dyn Fn(u64) -> Result<u64> + 'a> {
    Box::new(move |k| batch_size(&spec, k))
}

fn step_fn<'a>(spec: ScheduleSpec) -> Box<dyn Fn(u64) -> Result<f64> + 'a> {
    Box::new(move |k| step_size(&spec, k))
}

/// Projected stochastic subgradient method, one scenario per step.
pub fn sgd(problem: &dyn StochasticProblem, config: &SolverConfig) -> Result<Trajectory> {
    config.validate()?;
    sgd_impl(problem, config, None)
}

fn sgd_impl(problem: &dyn StochasticProblem, config: &SolverConfig, stop: Option<GapFn<'_>>) -> Result<Trajectory> {
    let mu = problem.meta().mu;
    let step = match &config.step {
        Some(s) => s.clone(),
        None if mu > 0.0 => ScheduleSpec::HarmonicStep { scale: 1.0 / mu },
        None => {
            if config.budget == u64::MAX {
                return Err(Error::param("a merely convex SGD run needs a finite horizon"));
            }
            ScheduleSpec::ConstantStep {
                gamma: config.sgd_scale / (config.budget as f64).sqrt(),
            }
        }
    };
    let outer = Outer {
        name: "sgd".into(),
        config,
        x0: start_point(problem, config)?,
        momentum: Momentum::None,
        lambda1: 0.0,
        step: step_fn(step),
        batch: Box::new(|_| Ok(1)),
        prox: problem.regularizer(),
        stop,
    };
    let mut est = BatchGradient {
        problem,
        smoothing: None,
        opts: sampling(config),
    };
    run_outer(outer, &mut est)
}

/// Algorithm 1 on an `L`-smooth, `μ`-strongly convex `f` plus `g`.
pub fn vs_apm(problem: &dyn StochasticProblem, l: f64, mu: f64, config: &SolverConfig) -> Result<Trajectory> {
    config.validate()?;
    vs_apm_impl(problem, l, mu, config, None)
}

fn sc_lambda1(config: &SolverConfig, kappa: f64) -> Result<f64> {
    let root = kappa.sqrt();
    match config.lambda1 {
        None => Ok(root),
        Some(l) if (1.0..=root).contains(&l) => Ok(l),
        Some(l) => Err(Error::param(format!("lambda1 = {l} outside [1, sqrt(kappa) = {root}]"))),
    }
}

fn vs_apm_impl(
    problem: &dyn StochasticProblem,
    l: f64,
    mu: f64,
    config: &SolverConfig,
    stop: Option<GapFn<'_>>,
) -> Result<Trajectory> {
    if !(mu > 0.0 && l >= mu && l.is_finite()) {
        return Err(Error::param(format!("VS-APM needs L >= mu > 0, got L={l}, mu={mu}")));
    }
    let kappa = clamp_kappa(l / mu);
    let batch = config.batch.clone().unwrap_or(ScheduleSpec::GeometricBatch {
        rho: geometric_rate(kappa, config.a)?,
        cap: None,
    });
    let step = config.step.clone().unwrap_or(ScheduleSpec::ConstantStep { gamma: 0.5 / l });
    let outer = Outer {
        name: "vs-apm".into(),
        config,
        x0: start_point(problem, config)?,
        momentum: Momentum::StronglyConvex { kappa },
        lambda1: sc_lambda1(config, kappa)?,
        step: step_fn(step),
        batch: batch_fn(batch),
        prox: problem.regularizer(),
        stop,
    };
    let mut est = BatchGradient {
        problem,
        smoothing: None,
        opts: sampling(config),
    };
    run_outer(outer, &mut est)
}

/// Accelerated method with FISTA momentum for an `L`-smooth convex `f`.
pub fn vs_apm_convex(problem: &dyn StochasticProblem, l: f64, config: &SolverConfig) -> Result<Trajectory> {
    config.validate()?;
    vs_apm_convex_impl(problem, l, config, None)
}

fn vs_apm_convex_impl(
    problem: &dyn StochasticProblem,
    l: f64,
    config: &SolverConfig,
    stop: Option<GapFn<'_>>,
) -> Result<Trajectory> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::param(format!("smoothness constant must be positive, got {l}")));
    }
    let limit = 0.5 / l;
    let step = config.step.clone().unwrap_or(ScheduleSpec::ConstantStep { gamma: limit });
    match step {
        ScheduleSpec::ConstantStep { gamma } if gamma <= limit * (1.0 + 1e-12) => {}
        ScheduleSpec::ConstantStep { gamma } => {
            return Err(Error::param(format!("step {gamma} exceeds 1/(2L) = {limit}")));
        }
        _ => return Err(Error::param("the smooth convex method takes a constant step")),
    }
    let batch = config
        .batch
        .clone()
        .unwrap_or(ScheduleSpec::PolynomialBatch { a: 3.001, cap: None });
    let outer = Outer {
        name: "vs-apm-convex".into(),
        config,
        x0: start_point(problem, config)?,
        momentum: Momentum::Fista,
        lambda1: 1.0,
        step: step_fn(step),
        batch: batch_fn(batch),
        prox: problem.regularizer(),
        stop,
    };
    let mut est = BatchGradient {
        problem,
        smoothing: None,
        opts: sampling(config),
    };
    run_outer(outer, &mut est)
}

enum Inner {
    Saa,
    Sgd,
    Nested { l: f64 },
}

/// `κ̃ = (μη + 1)/(μη)`, the condition number of the Moreau envelope.
pub fn smoothed_condition_number(mu: f64, eta: f64) -> Result<f64> {
    if !(mu > 0.0 && eta > 0.0) {
        return Err(Error::param(format!("need mu > 0 and eta > 0, got mu={mu}, eta={eta}")));
    }
    Ok((mu * eta + 1.0) / (mu * eta))
}

/// Algorithm 1 on the Moreau envelope, gradients from closed-form SAA proxes.
pub fn eta_vs_apm_prox(problem: &dyn StochasticProblem, eta: f64, config: &SolverConfig) -> Result<Trajectory> {
    config.validate()?;
    eta_impl(problem, eta, Inner::Saa, config, None)
}

/// Algorithm 1 on the Moreau envelope, proxes approximated by inner SGD.
pub fn eta_vs_apm_sgd(problem: &dyn StochasticProblem, eta: f64, config: &SolverConfig) -> Result<Trajectory> {
    config.validate()?;
    eta_impl(problem, eta, Inner::Sgd, config, None)
}

/// Algorithm 1 on the Moreau envelope, proxes approximated by deterministic
/// accelerated steps on each batch's SAA subproblem.
pub fn eta_vs_apm_nested(
    problem: &dyn StochasticProblem,
    eta: f64,
    l: f64,
    config: &SolverConfig,
) -> Result<Trajectory> {
    config.validate()?;
    eta_impl(problem, eta, Inner::Nested { l }, config, None)
}

fn eta_impl(
    problem: &dyn StochasticProblem,
    eta: f64,
    inner: Inner,
    config: &SolverConfig,
    stop: Option<GapFn<'_>>,
) -> Result<Trajectory> {
    let mu = problem.meta().mu;
    let kappa = clamp_kappa(smoothed_condition_number(mu, eta)?);
    let batch = config.batch.clone().unwrap_or(ScheduleSpec::GeometricBatch {
        rho: geometric_rate(kappa, config.a)?,
        cap: None,
    });
    let step = config.step.clone().unwrap_or(ScheduleSpec::ConstantStep { gamma: 0.5 * eta });
    let g = problem.regularizer();
    let opts = sampling(config);
    let (name, mut est): (&str, Box<dyn engine::GradientEstimator>) = match inner {
        Inner::Saa => (
            "eta-vs-apm-prox",
            Box::new(SaaProx {
                problem,
                eta,
                g: g.clone(),
                opts,
            }),
        ),
        Inner::Sgd => (
            "eta-vs-apm-sgd",
            Box::new(InnerSgd {
                problem,
                eta,
                mu,
                g: g.clone(),
                warm_start: config.inner.warm_start,
                step_scale: config.inner.step_scale,
                previous: None,
            }),
        ),
        Inner::Nested { l } => {
            if !(l >= mu && l.is_finite()) {
                return Err(Error::param(format!("nested variant needs L >= mu, got L={l}, mu={mu}")));
            }
            let nu = config
                .inner
                .nu
                .or(problem.meta().nu)
                .filter(|v| *v > 0.0)
                .unwrap_or(f64::EPSILON);
            (
                "eta-vs-apm-nested",
                Box::new(NestedVsApm {
                    problem,
                    eta,
                    l,
                    mu,
                    a: config.a,
                    g: g.clone(),
                    warm_start: config.inner.warm_start,
                    max_steps: config.inner.max_steps,
                    d_hat: config.inner.d_hat,
                    nu,
                    opts,
                    previous: None,
                }),
            )
        }
    };
    let outer = Outer {
        name: name.into(),
        config,
        x0: start_point(problem, config)?,
        momentum: Momentum::StronglyConvex { kappa },
        lambda1: sc_lambda1(config, kappa)?,
        step: step_fn(step),
        batch: batch_fn(batch),
        prox: problem.domain(),
        stop,
    };
    let mut traj = run_outer(outer, est.as_mut())?;
    traj.diagnostics.insert("kappa_tilde".into(), kappa);
    Ok(traj)
}

/// Algorithm 2: FISTA momentum on iteratively smoothed batch gradients.
pub fn svs_apm(problem: &dyn StochasticProblem, config: &SolverConfig) -> Result<Trajectory> {
    config.validate()?;
    svs_apm_impl(problem, None, config, None)
}

/// Checks `γ_k ≤ η_k/2` on `k = 1..10⁴` and a few far indices.
fn check_step_vs_smoothing(step: &ScheduleSpec, smoothing: &ScheduleSpec) -> Result<()> {
    let far = [100_000u64, 1_000_000, 100_000_000, 10_000_000_000];
    for k in (1..=10_000u64).chain(far) {
        let gamma = step_size(step, k)?;
        let eta = smoothing_param(smoothing, k)?;
        if gamma > 0.5 * eta * (1.0 + 1e-12) {
            return Err(Error::param(format!("step {gamma} exceeds half the smoothing level {eta} at k = {k}")));
        }
    }
    Ok(())
}

fn svs_apm_impl(
    problem: &dyn StochasticProblem,
    fixed: Option<f64>,
    config: &SolverConfig,
    stop: Option<GapFn<'_>>,
) -> Result<Trajectory> {
    let batch = config
        .batch
        .clone()
        .unwrap_or(ScheduleSpec::PolynomialBatch { a: 3.001, cap: None });
    let (step, smoothing) = match fixed {
        Some(c) => {
            if !(c > 0.0) {
                return Err(Error::param("fixed smoothing scale must be positive"));
            }
            let horizon = iterations_within_budget(&batch, config.budget)?.max(1);
            let eta = c / horizon as f64;
            (
                ScheduleSpec::ConstantStep { gamma: 0.5 * eta },
                ScheduleSpec::ConstantSmoothing {
                    eta: Some(eta),
                    horizon: None,
                },
            )
        }
        None => (
            config.step.clone().unwrap_or(ScheduleSpec::HarmonicStep { scale: 0.5 }),
            config
                .smoothing
                .clone()
                .unwrap_or(ScheduleSpec::HarmonicSmoothing { scale: 1.0 }),
        ),
    };
    check_step_vs_smoothing(&step, &smoothing)?;
    // the smoothed oracle must exist
    let x0 = start_point(problem, config)?;
    problem.smoothed_gradient(&x0, &problem.sample(&mut crate::rng::make_rng(0, 0)), smoothing_param(&smoothing, 1)?)?;
    let outer = Outer {
        name: if fixed.is_some() { "svs-apm-fixed" } else { "svs-apm" }.into(),
        config,
        x0,
        momentum: Momentum::Fista,
        lambda1: 1.0,
        step: step_fn(step),
        batch: batch_fn(batch),
        prox: problem.regularizer(),
        stop,
    };
    let mut est = BatchGradient {
        problem,
        smoothing: Some(smoothing),
        opts: sampling(config),
    };
    run_outer(outer, &mut est)
}
