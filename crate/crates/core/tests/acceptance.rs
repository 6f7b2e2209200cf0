//! Acceptance criteria 1–13, one test each. Every test prints a single
//! `PASS`/`FAIL` line straight to stderr so it shows even when output is captured.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use vsapm_core::harness::{
    assign_out_dirs, load_experiments, run_experiment,
    selftest::{builtin_operators, prox_conformance},
    ExperimentConfig, ExperimentReport,
};
use vsapm_core::oracle::{saa_prox, MeanModel, ProblemSpec};
use vsapm_core::prox::{moreau_eval, L1Norm, ProxOperator, QuadraticFunction};
use vsapm_core::schedules::{geometric_rate, lambda_next_sc};
use vsapm_core::{make_rng, DenseVector, Matrix};

fn verdict(id: u32, title: &str, pass: bool, detail: &str, secs: f64, limit: f64) -> bool {
    let ok = pass && secs <= limit;
    let line = format!(
        "criterion {id:>2} {} {title}: {detail} [{secs:.1} s, limit {limit} s]\n",
        if ok { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    ok
}

fn checked_in(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/experiments").join(name)
}

fn experiment(file: &str, name: &str) -> ExperimentConfig {
    load_experiments(&checked_in(file))
        .unwrap()
        .into_iter()
        .find(|c| c.name.as_deref() == Some(name))
        .unwrap_or_else(|| panic!("{file} has no experiment {name}"))
}

fn run(text: &str) -> ExperimentReport {
    run_experiment(&ExperimentConfig::from_json(text).unwrap()).unwrap()
}

/// Least-squares slope of `ys` against `xs`.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn mean_final_dist(report: &ExperimentReport, label: &str) -> f64 {
    let s = report.solver(label).unwrap_or_else(|| panic!("no solver {label}"));
    s.replications.iter().map(|r| r.final_dist_sq.unwrap().sqrt()).sum::<f64>() / s.replications.len() as f64
}

fn final_gaps(report: &ExperimentReport, label: &str) -> Vec<f64> {
    report
        .solver(label)
        .unwrap_or_else(|| panic!("no solver {label}"))
        .replications
        .iter()
        .map(|r| r.final_gap.unwrap())
        .collect()
}

/// `(k, mean gap)` over the iterations every replication recorded.
fn mean_gap_curve(report: &ExperimentReport, label: &str) -> Vec<(u64, f64)> {
    report
        .solver(label)
        .unwrap()
        .aggregate
        .iter()
        .map(|r| (r.iter, r.mean_gap.unwrap()))
        .collect()
}

#[test]
fn linear_rate_of_vs_apm() {
    let t = Instant::now();
    let report = run(r#"{
        "problem": {"kind": "ill-conditioned", "dim": 20, "kappa": 4, "noise_std": 1},
        "solvers": [{"solver": {"kind": "vs-apm"}, "config": {"a": 2.01}}],
        "replications": 20, "budget": 100000, "seed": 101, "metrics": "gap"
    }"#);
    let curve: Vec<(u64, f64)> = mean_gap_curve(&report, "vs-apm")
        .into_iter()
        .filter(|&(k, g)| (5..=40).contains(&k) && g > 0.0)
        .collect();
    let xs: Vec<f64> = curve.iter().map(|c| c.0 as f64).collect();
    let ys: Vec<f64> = curve.iter().map(|c| c.1.ln()).collect();
    let fitted = slope(&xs, &ys);
    let bound = geometric_rate(4.0, 2.01).unwrap().ln() + 0.05;
    let pass = curve.len() >= 20 && fitted <= bound;
    let detail = format!("slope {fitted:.4} over k in [5, {}], bound {bound:.4}", curve.last().unwrap().0);
    assert!(verdict(1, "VS-APM linear rate", pass, &detail, t.elapsed().as_secs_f64(), 30.0));
}

#[test]
fn lambda_sequence_invariants() {
    let t = Instant::now();
    let mut failures = Vec::new();
    let mut worst_gap: f64 = 0.0;
    for kappa in [2.0f64, 10.0, 100.0, 1e6] {
        let root = kappa.sqrt();
        for start in [1.0 + 1e-6, root] {
            let mut lambda = start;
            let mut monotone = true;
            let mut bounded = lambda <= root + 1e-12;
            for _ in 0..10_000 {
                let next = lambda_next_sc(lambda, kappa).unwrap();
                monotone &= next >= lambda;
                bounded &= next <= root + 1e-12;
                lambda = next;
            }
            let gap = (lambda - root).abs();
            worst_gap = worst_gap.max(gap);
            if !monotone || !bounded || gap > 1e-6 {
                failures.push(format!(
                    "kappa={kappa:e}, lambda1={start}: monotone={monotone}, bounded={bounded}, |lambda-sqrt(kappa)|={gap:.3e}"
                ));
            }
        }
    }
    let detail = if failures.is_empty() {
        format!("all 8 sequences monotone, bounded, within {worst_gap:.1e} of sqrt(kappa)")
    } else {
        failures.join("; ")
    };
    assert!(verdict(2, "lambda sequence", failures.is_empty(), &detail, t.elapsed().as_secs_f64(), 1.0));
}

#[test]
fn moreau_envelope_correctness() {
    let t = Instant::now();
    let mut rng = make_rng(303, 0);
    let abs = L1Norm { weight: 1.0 };
    let a = Matrix::from_fn(10, 10, |i, j| if i == j { 1.0 + i as f64 } else { 0.2 / (1 + i + j) as f64 });
    let b = DenseVector::from((0..10).map(|i| (i as f64).cos()).collect::<Vec<_>>());
    let quad = QuadraticFunction::new(a, b).unwrap();
    let ops: [(&dyn ProxOperator, usize); 2] = [(&abs, 1), (&quad, 10)];
    let (mut worst_rel, mut worst_lip): (f64, f64) = (0.0, 0.0);
    for (op, dim) in ops {
        let value = |u: &DenseVector| op.value(u);
        let env = |x: &DenseVector, eta: f64| moreau_eval(op, &value, x, eta).unwrap();
        let point = |rng: &mut vsapm_core::RandomSource| {
            DenseVector::from((0..dim).map(|_| rng.uniform_range(-3.0, 3.0)).collect::<Vec<_>>())
        };
        for _ in 0..50 {
            let x = point(&mut rng);
            let eta = rng.uniform_range(0.05, 5.0);
            let g = env(&x, eta).gradient;
            let h = 1e-5;
            let fd = DenseVector::from(
                (0..dim)
                    .map(|i| {
                        let (mut p, mut m) = (x.clone(), x.clone());
                        p.as_mut_slice()[i] += h;
                        m.as_mut_slice()[i] -= h;
                        (env(&p, eta).value - env(&m, eta).value) / (2.0 * h)
                    })
                    .collect::<Vec<_>>(),
            );
            worst_rel = worst_rel.max(fd.dist(&g) / g.norm());
        }
        for _ in 0..100 {
            let (x, y) = (point(&mut rng), point(&mut rng));
            let eta = rng.uniform_range(0.05, 5.0);
            let ratio = env(&x, eta).gradient.dist(&env(&y, eta).gradient) / x.dist(&y);
            worst_lip = worst_lip.max(ratio - 1.0 / eta);
        }
    }
    let pass = worst_rel <= 1e-6 && worst_lip <= 1e-9;
    let detail = format!("worst relative gradient error {worst_rel:.2e}, worst Lipschitz excess {worst_lip:.2e}");
    assert!(verdict(3, "Moreau envelope", pass, &detail, t.elapsed().as_secs_f64(), 5.0));
}

#[test]
fn prox_operator_conformance() {
    let t = Instant::now();
    let suite = prox_conformance(&builtin_operators());
    let detail = match &suite.failure {
        None => format!("{} checks over {} operators", suite.checks, builtin_operators().len()),
        Some(f) => f.clone(),
    };
    assert!(verdict(4, "prox conformance", suite.passed, &detail, t.elapsed().as_secs_f64(), 10.0));
}

#[test]
fn saa_prox_error_decay() {
    let t = Instant::now();
    let spec: ProblemSpec = serde_json::from_str(r#"{"kind": "example1"}"#).unwrap();
    let problem = spec.build().unwrap();
    let (alpha, beta, lambda) = match problem.mean_model() {
        MeanModel::SeparableL1 { alpha, beta, lambda } => (*alpha, beta.clone(), *lambda),
        other => panic!("unexpected model {other:?}"),
    };
    let eta = 1.0;
    let x = DenseVector::from((0..problem.dim()).map(|i| ((i as f64) * 0.37).sin()).collect::<Vec<_>>());
    // prox of the mean: soft-threshold of x/η − β̄ at λ̄, scaled by 1/(ᾱ + 1/η)
    let exact = DenseVector::from(
        (0..problem.dim())
            .map(|i| {
                let z = x[i] / eta - beta[i];
                z.signum() * (z.abs() - lambda).max(0.0) / (alpha + 1.0 / eta)
            })
            .collect::<Vec<_>>(),
    );
    let mut estimates = Vec::new();
    for (j, n) in [16u64, 64, 256, 1024].into_iter().enumerate() {
        let trials = 200;
        let total: f64 = (0..trials)
            .map(|trial| {
                let rng = make_rng(505 + j as u64, trial);
                saa_prox(&*problem, &x, eta, n, &rng).unwrap().dist_sq(&exact)
            })
            .sum();
        estimates.push(total / trials as f64);
    }
    let ratios: Vec<f64> = estimates.windows(2).map(|w| w[1] / w[0]).collect();
    let pass = ratios.iter().all(|&r| r <= 0.7);
    let detail = format!(
        "E|w|^2 = {:.3e}, ratios per quadrupling {}",
        estimates[0],
        ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")
    );
    assert!(verdict(5, "SAA prox error decay", pass, &detail, t.elapsed().as_secs_f64(), 30.0));
}

#[test]
fn eta_variants_against_sgd_on_example1() {
    let t = Instant::now();
    let report = run_experiment(&experiment("eta-sweep.json", "example1-mu-1.0")).unwrap();
    let sgd = mean_final_dist(&report, "sgd");
    let labels = ["eta-vs-apm(eta=0.1)", "eta-vs-apm(eta=1.0)", "eta-vs-apm(eta=10.0)"];
    let caps = [150u64, 60, 30];
    let errs: Vec<f64> = labels.iter().map(|l| mean_final_dist(&report, l)).collect();
    let iters: Vec<u64> = labels
        .iter()
        .map(|l| report.solver(l).unwrap().replications.iter().map(|r| r.iterations).max().unwrap())
        .collect();
    let pass = errs[1] <= sgd && errs[2] <= sgd && iters.iter().zip(caps).all(|(&i, c)| i <= c);
    let detail = format!(
        "mean |y-x*|: sgd {sgd:.3e}, eta=0.1 {:.3e}, eta=1 {:.3e}, eta=10 {:.3e}; iterations {:?} vs caps {caps:?}",
        errs[0], errs[1], errs[2], iters
    );
    assert!(verdict(6, "eta-VS-APM vs SGD ordering", pass, &detail, t.elapsed().as_secs_f64(), 120.0));
}

#[test]
fn mu_sweep_robustness() {
    let t = Instant::now();
    let mut eta = Vec::new();
    let mut sgd = Vec::new();
    for mu in ["1", "1e-2", "1e-4"] {
        let report = run_experiment(&experiment("mu-sweep.json", &format!("example2-mu-{mu}"))).unwrap();
        eta.push(mean_final_dist(&report, "eta-vs-apm(eta=1)"));
        sgd.push(mean_final_dist(&report, "sgd"));
    }
    let spread = eta.iter().cloned().fold(0.0, f64::max) / eta.iter().cloned().fold(f64::INFINITY, f64::min);
    let degradation = sgd[2] / sgd[0];
    let pass = spread < 10.0 && degradation > 100.0;
    let detail = format!(
        "eta-VS-APM errors {:.3e}/{:.3e}/{:.3e} (spread {spread:.1}x, need < 10x); SGD {:.3e}/{:.3e}/{:.3e} (degradation {degradation:.1}x, need > 100x)",
        eta[0], eta[1], eta[2], sgd[0], sgd[1], sgd[2]
    );
    assert!(verdict(7, "mu-sweep robustness", pass, &detail, t.elapsed().as_secs_f64(), 300.0));
}

#[test]
fn nested_variant_on_ill_conditioned_problem() {
    let t = Instant::now();
    let report = run_experiment(&experiment("ill-conditioned.json", "ill-conditioned")).unwrap();
    let plain = final_gaps(&report, "vs-apm");
    let nested = final_gaps(&report, "eta-vs-apm-nested(eta=10)");
    let wins = nested.iter().zip(&plain).filter(|(n, p)| n < p).count();
    let detail = format!("nested beats plain in {wins}/{} paired replications", plain.len());
    assert!(verdict(8, "ill-conditioned benefit", wins >= 16, &detail, t.elapsed().as_secs_f64(), 300.0));
}

#[test]
fn smoothed_method_rate() {
    let t = Instant::now();
    // A generic start: from the origin the iterates stay on the ray through −c,
    // where the problem is one-dimensional.
    let x0: Vec<f64> = (0..20).map(|i| 0.15 * ((i as f64) * 1.3 + 0.4).sin()).collect();
    let report = run(&format!(
        r#"{{
        "problem": {{"kind": "utility", "n": 20, "m": 10, "noise_std": 0}},
        "solvers": [{{"solver": {{"kind": "svs-apm"}}, "config": {{
            "smoothing": {{"kind": "harmonic-smoothing", "scale": 1}},
            "step": {{"kind": "harmonic-step", "scale": 0.5}},
            "batch": {{"kind": "polynomial-batch", "a": 3.001}},
            "max_iterations": 1000, "x0": {x0:?}}}}}],
        "budget": 1000000000000000, "metrics": "gap"
    }}"#
    ));
    let curve: Vec<(u64, f64)> = mean_gap_curve(&report, "svs-apm")
        .into_iter()
        .filter(|&(k, g)| (50..=1000).contains(&k) && g > 0.0)
        .collect();
    let xs: Vec<f64> = curve.iter().map(|c| (c.0 as f64).ln()).collect();
    let ys: Vec<f64> = curve.iter().map(|c| c.1.ln()).collect();
    let exponent = slope(&xs, &ys);
    let pass = curve.len() >= 900 && (-1.25..=-0.8).contains(&exponent);
    let detail = format!("fitted exponent {exponent:.3} over {} points", curve.len());
    assert!(verdict(9, "sVS-APM O(1/K) rate", pass, &detail, t.elapsed().as_secs_f64(), 60.0));
}

#[test]
fn iterative_versus_fixed_smoothing() {
    let t = Instant::now();
    let report = run_experiment(&experiment("iterative-vs-fixed-smoothing.json", "utility-n20-m10")).unwrap();
    let iterative = final_gaps(&report, "delta=1/k");
    let fixed = final_gaps(&report, "fixed-delta=1/K");
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mi, mf) = (mean(&iterative), mean(&fixed));
    let strict = iterative.iter().zip(&fixed).filter(|(i, f)| i < f).count();
    let pass = mi <= mf && strict >= 15;
    let detail = format!("mean gap iterative {mi:.3e} vs fixed {mf:.3e}; iterative strictly better in {strict}/20");
    assert!(verdict(10, "iterative vs fixed smoothing", pass, &detail, t.elapsed().as_secs_f64(), 180.0));
}

#[test]
fn smooth_convex_optimal_rate() {
    let t = Instant::now();
    let report = run(r#"{
        "problem": {"kind": "least-squares", "dim": 10},
        "solvers": [{"solver": {"kind": "vs-apm-convex"}, "config": {
            "batch": {"kind": "polynomial-batch", "a": 3.001}, "max_iterations": 300}}],
        "replications": 20, "budget": 1000000000000, "seed": 1111, "metrics": "gap"
    }"#);
    let curve: Vec<(u64, f64)> = mean_gap_curve(&report, "vs-apm-convex")
        .into_iter()
        .filter(|&(k, g)| (10..=300).contains(&k) && g > 0.0)
        .collect();
    let xs: Vec<f64> = curve.iter().map(|c| (c.0 as f64).ln()).collect();
    let ys: Vec<f64> = curve.iter().map(|c| c.1.ln()).collect();
    let exponent = slope(&xs, &ys);
    let pass = curve.len() >= 280 && (-2.3..=-1.7).contains(&exponent);
    let detail = format!("fitted exponent {exponent:.3} over {} points", curve.len());
    assert!(verdict(11, "smooth convex O(1/k^2) rate", pass, &detail, t.elapsed().as_secs_f64(), 60.0));
}

#[test]
fn almost_sure_mode_stability() {
    let t = Instant::now();
    let report = run(r#"{
        "problem": {"kind": "utility", "n": 20, "m": 10},
        "solvers": [
            {"label": "as", "solver": {"kind": "svs-apm"}, "config": {
                "step": {"kind": "power-step", "b": 0.5, "scale": 1},
                "smoothing": {"kind": "power-smoothing", "c": 2, "b": 0.5},
                "batch": {"kind": "polynomial-batch", "a": 1.6}}},
            {"label": "rate", "solver": {"kind": "svs-apm"}, "config": {
                "step": {"kind": "harmonic-step", "scale": 0.5},
                "smoothing": {"kind": "harmonic-smoothing", "scale": 1},
                "batch": {"kind": "polynomial-batch", "a": 1.6}}}],
        "replications": 20, "budget": 1000000, "seed": 1212, "metrics": "gap"
    }"#);
    let as_mode = report.solver("as").unwrap();
    let worst = as_mode
        .replications
        .iter()
        .map(|r| r.final_gap.unwrap() / r.initial_gap.unwrap())
        .fold(0.0, f64::max);
    let ci = |label: &str| report.solver(label).unwrap().aggregate.last().unwrap().ci_gap.unwrap();
    let (ci_as, ci_rate) = (ci("as"), ci("rate"));
    let pass = worst <= 0.01 && ci_as <= ci_rate;
    let detail = format!(
        "worst final/initial gap {worst:.2e}; final 95% CI half-width {ci_as:.3e} (k^-1/2) vs {ci_rate:.3e} (1/k)"
    );
    assert!(verdict(12, "a.s.-mode stability", pass, &detail, t.elapsed().as_secs_f64(), 180.0));
}

#[test]
fn checked_in_configs_are_deterministic() {
    let t = Instant::now();
    let files = ["eta-sweep.json", "mu-sweep.json", "iterative-vs-fixed-smoothing.json", "ill-conditioned.json", "smoothing-sequences-var5.json", "smoothing-sequences-var2.json"];
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for file in files {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for dir in &dirs {
            let mut configs = load_experiments(&checked_in(file)).unwrap();
            assign_out_dirs(&mut configs, dir.path());
            for c in &configs {
                run_experiment(c).unwrap();
            }
        }
        let listing = |root: &Path| {
            let mut out = Vec::new();
            let mut stack = vec![root.to_path_buf()];
            while let Some(d) = stack.pop() {
                for e in std::fs::read_dir(&d).unwrap() {
                    let p = e.unwrap().path();
                    if p.is_dir() {
                        stack.push(p);
                    } else {
                        out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
                    }
                }
            }
            out.sort();
            out
        };
        let (a, b) = (listing(dirs[0].path()), listing(dirs[1].path()));
        let csvs = a.iter().filter(|f| f.0.extension().is_some_and(|e| e == "csv")).count();
        compared += csvs;
        if a != b || csvs == 0 {
            mismatches.push(file);
        }
    }
    let detail = if mismatches.is_empty() {
        format!("{compared} CSV files identical across two runs of {} configs", files.len())
    } else {
        format!("differences in {mismatches:?}")
    };
    assert!(verdict(13, "determinism", mismatches.is_empty(), &detail, t.elapsed().as_secs_f64(), f64::INFINITY));
}
