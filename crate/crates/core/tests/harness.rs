use std::path::{Path, PathBuf};
use std::time::Instant;

use vsapm_core::harness::{
    assign_out_dirs, compare, load_experiments, parse_experiments, run_experiment, selftest, ExperimentConfig,
    ExperimentReport,
};
use vsapm_core::reference::cached_reference;
use vsapm_core::schedules::{batch_size, ScheduleSpec};
use vsapm_core::Error;

fn checked_in(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/experiments").join(name)
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(text).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn mean_final_dist(report: &ExperimentReport, label: &str) -> f64 {
    let s = report.solver(label).unwrap();
    s.replications.iter().map(|r| r.final_dist_sq.unwrap().sqrt()).sum::<f64>() / s.replications.len() as f64
}

const DEGENERATE_SGD: &str = r#"{
    "problem": {"kind": "example1", "dim": 5, "alpha_spread": 0.0, "beta_std": 0.0, "lambda_spread": 0.0},
    "solvers": [{"solver": {"kind": "sgd"}}],
    "budget": 2000
}"#;

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut reports = Vec::new();
    for dir in [a.path(), b.path()] {
        let mut cfg = config(DEGENERATE_SGD);
        cfg.out_dir = Some(dir.to_path_buf());
        reports.push(run_experiment(&cfg).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.len(), 3);
    assert_eq!(fa, fb);
}

#[test]
fn output_layout() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(
        r#"{
        "problem": {"kind": "example1", "dim": 4},
        "solvers": [{"solver": {"kind": "sgd"}}, {"solver": {"kind": "eta-vs-apm-prox", "eta": 1}}],
        "replications": 3, "budget": 500, "seed": 4
    }"#,
    );
    cfg.out_dir = Some(dir.path().to_path_buf());
    let report = run_experiment(&cfg).unwrap();
    let names: Vec<String> = files(dir.path()).into_iter().map(|f| f.0).collect();
    assert_eq!(
        names,
        [
            "aggregate_eta-vs-apm-prox_eta_1_.csv",
            "aggregate_sgd.csv",
            "summary.json",
            "trajectory_eta-vs-apm-prox_eta_1__r0.csv",
            "trajectory_eta-vs-apm-prox_eta_1__r1.csv",
            "trajectory_eta-vs-apm-prox_eta_1__r2.csv",
            "trajectory_sgd_r0.csv",
            "trajectory_sgd_r1.csv",
            "trajectory_sgd_r2.csv",
        ]
    );
    let traj = std::fs::read_to_string(dir.path().join("trajectory_sgd_r2.csv")).unwrap();
    let mut lines = traj.lines();
    assert_eq!(
        lines.next().unwrap(),
        "replication,iter,cum_samples,cum_prox,cum_inner,gap,dist_sq,elapsed_ms"
    );
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "2");
    let gap: f64 = first[5].parse().unwrap();
    assert_eq!(first[5], format!("{gap:.16e}"));
    let agg = std::fs::read_to_string(dir.path().join("aggregate_sgd.csv")).unwrap();
    assert_eq!(
        agg.lines().next().unwrap(),
        "iter,cum_samples,mean_gap,ci_gap,mean_dist_sq,ci_dist_sq"
    );

    let loaded = ExperimentReport::load(&dir.path().join("summary.json")).unwrap();
    assert_eq!(loaded.config_hash, cfg.hash());
    assert_eq!(loaded.solvers.len(), 2);
    assert_eq!(loaded.solvers[1].replications, report.solvers[1].replications);
    assert_eq!(loaded.version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn sample_axis_is_the_sum_of_batches() {
    let cfg = config(
        r#"{
        "problem": {"kind": "ill-conditioned", "dim": 5, "kappa": 4},
        "solvers": [{"solver": {"kind": "vs-apm"},
                     "config": {"batch": {"kind": "polynomial-batch", "a": 2}, "final_batch": "truncate"}}],
        "budget": 3000
    }"#,
    );
    let report = run_experiment(&cfg).unwrap();
    let spec = ScheduleSpec::PolynomialBatch { a: 2.0, cap: None };
    let rows = &report.solvers[0].trajectories[0];
    assert!(rows.len() > 10);
    for r in rows {
        let want: u64 = (1..=r.iter).map(|j| batch_size(&spec, j).unwrap()).sum::<u64>().min(3000);
        assert_eq!(r.cum_samples, want, "iter {}", r.iter);
    }
    let agg = &report.solvers[0].aggregate;
    assert_eq!(agg.len(), rows.len());
    assert!(agg.iter().zip(rows).all(|(a, r)| a.cum_samples == r.cum_samples));
}

#[test]
fn empty_solver_list_is_rejected() {
    let cfg = config(r#"{"problem": {"kind": "example1"}, "solvers": []}"#);
    match run_experiment(&cfg) {
        Err(Error::Config { path, .. }) => assert_eq!(path, "solvers"),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn validation_names_the_offending_field() {
    let cases = [
        (r#"{"problem": {"kind": "example1"}, "solvers": [{"solver": {"kind": "sgd"}}], "replications": 0}"#, "replications"),
        (r#"{"problem": {"kind": "example1"}, "solvers": [{"solver": {"kind": "sgd"}}], "budget": 0}"#, "budget"),
        (
            r#"{"problem": {"kind": "example1"}, "solvers": [{"solver": {"kind": "sgd"}}, {"solver": {"kind": "sgd"}}]}"#,
            "solvers[1].label",
        ),
        (
            r#"{"problem": {"kind": "example1"}, "solvers": [{"solver": {"kind": "sgd"}, "config": {"a": 0.5}}]}"#,
            "solvers[0].config",
        ),
        (r#"{"problem": {"kind": "example1"}, "solvers": [{"solver": {"kind": "svs-apm"}}]}"#, "solvers[0]"),
    ];
    for (text, want) in cases {
        match run_experiment(&config(text)) {
            Err(Error::Config { path, .. }) => assert_eq!(path, want, "{text}"),
            other => panic!("{text}: expected a config error, got {other:?}"),
        }
    }
    assert!(matches!(
        ExperimentConfig::from_json(r#"{"problem": {"kind": "example1"}, "solvers": [], "replicatons": 2}"#),
        Err(Error::Config { .. })
    ));
}

#[test]
fn identical_solvers_compare_equal() {
    let cfg = config(
        r#"{
        "problem": {"kind": "example1", "dim": 6},
        "solvers": [{"label": "a", "solver": {"kind": "eta-vs-apm-prox", "eta": 1}},
                    {"label": "b", "solver": {"kind": "eta-vs-apm-prox", "eta": 1}}],
        "replications": 5, "budget": 2000, "seed": 9
    }"#,
    );
    let report = run_experiment(&cfg).unwrap();
    let cmp = compare(&[&report]).unwrap();
    assert_eq!(cmp.metric, "dist_sq");
    assert_eq!(cmp.paired_replications, 5);
    assert_eq!(cmp.rows[1].diff_error, 0.0);
    assert_eq!(cmp.rows[0].mean_error, cmp.rows[1].mean_error);
    assert_eq!(cmp.wins, vec![vec![0, 0], vec![0, 0]]);
    let csv = cmp.to_csv();
    assert!(csv.starts_with("label,mean_dist_sq,ci_dist_sq,diff_dist_sq,"));
    assert_eq!(csv.lines().count(), 3);
    assert!(cmp.to_text().contains("wins over 5 paired replications"));
}

#[test]
fn comparing_different_problems_fails() {
    let run = |seed: u64| {
        run_experiment(&config(&format!(
            r#"{{"problem": {{"kind": "example1", "dim": 4, "seed": {seed}}},
                "solvers": [{{"solver": {{"kind": "sgd"}}}}], "budget": 200}}"#
        )))
        .unwrap()
    };
    let (a, b) = (run(1), run(2));
    assert!(matches!(compare(&[&a, &b]), Err(Error::Parameter(_))));
    assert!(compare(&[&a, &a]).is_ok());
}

#[test]
fn reference_policies() {
    let dir = tempfile::tempdir().unwrap();
    let base = r#""problem": {"kind": "example1", "dim": 5}, "solvers": [{"solver": {"kind": "sgd"}}], "budget": 500"#;
    let computed = run_experiment(&config(&format!("{{{base}}}"))).unwrap();

    let problem = computed_problem(&config(&format!("{{{base}}}")));
    let reference = cached_reference(&*problem, 1e-8).unwrap();
    let path = dir.path().join("ref.json");
    std::fs::write(&path, serde_json::to_string(&*reference).unwrap()).unwrap();
    let loaded = run_experiment(&config(&format!(
        r#"{{{base}, "reference": {{"load": {}}}}}"#,
        serde_json::to_string(&path).unwrap()
    )))
    .unwrap();
    assert_eq!(loaded.solvers, computed.solvers);

    let other = run_experiment(&config(
        &format!(r#"{{{base}, "reference": {{"load": {}}}}}"#, serde_json::to_string(&path).unwrap())
            .replace(r#""dim": 5"#, r#""dim": 5, "seed": 3"#),
    ));
    assert!(matches!(other, Err(Error::Config { .. })));

    let none = run_experiment(&config(&format!(r#"{{{base}, "reference": "none"}}"#))).unwrap();
    assert!(none.solvers[0].final_gap.is_none() && none.reference.is_none());
    assert!(compare(&[&none]).is_err());
}

fn computed_problem(cfg: &ExperimentConfig) -> std::sync::Arc<dyn vsapm_core::StochasticProblem> {
    cfg.problem.build().unwrap()
}

#[test]
fn suites_and_output_directories() {
    let text = r#"{"name": "s", "experiments": [
        {"name": "one", "problem": {"kind": "example1"}, "solvers": [{"solver": {"kind": "sgd"}}]},
        {"name": "two", "problem": {"kind": "example1"}, "solvers": [{"solver": {"kind": "sgd"}}]}]}"#;
    let mut cfgs = parse_experiments(text, "inline").unwrap();
    assert_eq!(cfgs.len(), 2);
    assign_out_dirs(&mut cfgs, Path::new("/tmp/out"));
    assert_eq!(cfgs[1].out_dir.as_deref(), Some(Path::new("/tmp/out/two")));
    let mut single = parse_experiments(DEGENERATE_SGD, "inline").unwrap();
    assign_out_dirs(&mut single, Path::new("/tmp/out"));
    assert_eq!(single[0].out_dir.as_deref(), Some(Path::new("/tmp/out")));

    let dup = text.replace(r#""name": "two""#, r#""name": "one""#);
    assert!(matches!(parse_experiments(&dup, "inline"), Err(Error::Config { path, .. }) if path == "experiments[1].name"));
}

#[test]
fn checked_in_configs_are_valid() {
    let expected = [
        ("eta-sweep.json", 2, 10),
        ("mu-sweep.json", 10, 10),
        ("iterative-vs-fixed-smoothing.json", 3, 20),
        ("ill-conditioned.json", 1, 20),
        ("smoothing-sequences-var5.json", 1, 20),
        ("smoothing-sequences-var2.json", 1, 20),
    ];
    for (file, count, reps) in expected {
        let cfgs = load_experiments(&checked_in(file)).unwrap();
        assert_eq!(cfgs.len(), count, "{file}");
        for c in &cfgs {
            c.validate().unwrap();
            c.problem.build().unwrap();
            assert_eq!(c.replications, reps, "{file}");
        }
    }
}

#[test]
fn eta_variants_beat_sgd_on_example1() {
    let cfg = load_experiments(&checked_in("eta-sweep.json")).unwrap().remove(0);
    let report = run_experiment(&cfg).unwrap();
    let sgd = mean_final_dist(&report, "sgd");
    let e01 = mean_final_dist(&report, "eta-vs-apm(eta=0.1)");
    let e1 = mean_final_dist(&report, "eta-vs-apm(eta=1.0)");
    let e10 = mean_final_dist(&report, "eta-vs-apm(eta=10.0)");
    assert!(e1 <= sgd, "eta=1 {e1} vs sgd {sgd}");
    assert!(e10 <= sgd, "eta=10 {e10} vs sgd {sgd}");
    assert!(e01 < 10.0 * sgd && sgd < 10.0 * e01, "eta=0.1 {e01} vs sgd {sgd}");
}

#[test]
fn selftest_is_green_and_fast() {
    let start = Instant::now();
    let report = selftest();
    assert!(report.passed(), "{}", report.to_text());
    assert_eq!(report.suites.len(), 5);
    assert!(start.elapsed().as_secs_f64() <= 60.0);
}
