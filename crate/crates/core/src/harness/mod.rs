//! Experiment runner: configuration, replication orchestration, statistics and
//! CSV/JSON report emission.
//!
//! A run writes, under its output directory,
//! `trajectory_<solver>_r<rep>.csv` per (solver, replication),
//! `aggregate_<solver>.csv` per solver, and `summary.json`.

mod compare;
mod output;
pub mod selftest;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use compare::{compare, Comparison, ComparisonRow};
pub use output::{format_float, write_atomic};
pub use selftest::{selftest, SelftestReport, SuiteResult};

use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::oracle::{ProblemSpec, StochasticProblem};
use crate::reference::{cached_reference, ReferenceSolution, DEFAULT_TOL_ITERATIVE};
use crate::rng::child_stream;
use crate::solvers::{run_solver, SolverConfig, SolverKind, Status, Trajectory};
use crate::stats::mean_and_ci;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "VSAPM_OUT_DIR";

/// Which error metrics a report carries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricSet {
    Gap,
    DistSq,
    #[default]
    Both,
}

impl MetricSet {
    fn gap(self) -> bool {
        matches!(self, MetricSet::Gap | MetricSet::Both)
    }
    fn dist(self) -> bool {
        matches!(self, MetricSet::DistSq | MetricSet::Both)
    }
}

/// Where `x*` and `F*` come from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferencePolicy {
    #[default]
    Compute,
    /// A serialized [`ReferenceSolution`].
    Load(PathBuf),
    /// No error metrics; trajectories carry counters only.
    None,
}

/// One solver of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverEntry {
    /// Report label; defaults to [`SolverKind::label`].
    #[serde(default)]
    pub label: Option<String>,
    pub solver: SolverKind,
    #[serde(default)]
    pub config: SolverConfig,
}

impl SolverEntry {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.solver.label())
    }

    /// Seed component shared by identical solver entries, so that repeating a
    /// solver reproduces its runs exactly.
    fn identity(&self) -> u64 {
        let text = serde_json::to_string(&(&self.solver, &self.config)).unwrap_or_default();
        let digest = Sha256::digest(text.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

fn one() -> u64 {
    1
}
fn default_confidence() -> f64 {
    0.95
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub problem: ProblemSpec,
    pub solvers: Vec<SolverEntry>,
    #[serde(default = "one")]
    pub replications: u64,
    /// Overrides every solver's budget when set.
    #[serde(default)]
    pub budget: Option<u64>,
    /// Base seed; each run uses a seed derived from (base, solver, replication).
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub metrics: MetricSet,
    #[serde(default)]
    pub reference: ReferencePolicy,
    /// Tolerance for computed references; defaults to 1e-8.
    #[serde(default)]
    pub reference_tol: Option<f64>,
    /// Level of the reported confidence intervals.
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("<config>", e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
    }

    /// Structural checks that need no problem instance.
    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() {
            return Err(Error::config("solvers", "at least one solver is required"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        if self.budget == Some(0) {
            return Err(Error::config("budget", "must be positive"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::config("confidence", "must lie in (0, 1)"));
        }
        if let Some(t) = self.reference_tol {
            if !(t > 0.0) {
                return Err(Error::config("reference_tol", "must be positive"));
            }
        }
        let mut seen = BTreeSet::new();
        for (i, s) in self.solvers.iter().enumerate() {
            if !seen.insert(output::slug(&s.label())) {
                return Err(Error::config(
                    format!("solvers[{i}].label"),
                    format!("label `{}` collides with an earlier solver", s.label()),
                ));
            }
            self.solver_config(i)
                .validate()
                .map_err(|e| Error::config(format!("solvers[{i}].config"), e.to_string()))?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, output directory excluded.
    pub fn hash(&self) -> String {
        let inputs = ExperimentConfig {
            out_dir: None,
            ..self.clone()
        };
        let text = serde_json::to_string(&inputs).unwrap_or_default();
        hex(&Sha256::digest(text.as_bytes()))
    }

    fn solver_config(&self, i: usize) -> SolverConfig {
        let mut cfg = self.solvers[i].config.clone();
        if let Some(b) = self.budget {
            cfg.budget = b;
        }
        cfg
    }

    /// Seed of replication `rep` of solver `i`.
    pub fn run_seed(&self, i: usize, rep: u64) -> u64 {
        child_stream(child_stream(self.seed, self.solvers[i].identity()), rep)
    }
}

/// A config file holding several experiments, such as a parameter sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSuite {
    #[serde(default)]
    pub name: Option<String>,
    pub experiments: Vec<ExperimentConfig>,
}

/// Parses a config document: either one experiment or an [`ExperimentSuite`].
/// Suite members must carry distinct names.
pub fn parse_experiments(text: &str, origin: &str) -> Result<Vec<ExperimentConfig>> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::config(origin, e.to_string()))?;
    if value.get("experiments").is_none() {
        let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| Error::config(origin, e.to_string()))?;
        return Ok(vec![cfg]);
    }
    let suite: ExperimentSuite = serde_json::from_value(value).map_err(|e| Error::config(origin, e.to_string()))?;
    if suite.experiments.is_empty() {
        return Err(Error::config("experiments", "at least one experiment is required"));
    }
    let mut seen = BTreeSet::new();
    for (i, e) in suite.experiments.iter().enumerate() {
        let name = e
            .name
            .as_deref()
            .ok_or_else(|| Error::config(format!("experiments[{i}].name"), "suite members need a name"))?;
        if !seen.insert(output::slug(name)) {
            return Err(Error::config(format!("experiments[{i}].name"), format!("`{name}` is used twice")));
        }
    }
    Ok(suite.experiments)
}

pub fn load_experiments(path: &Path) -> Result<Vec<ExperimentConfig>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_experiments(&text, &path.display().to_string())
}

/// Points every experiment at `base`, one subdirectory per experiment when there are several.
pub fn assign_out_dirs(configs: &mut [ExperimentConfig], base: &Path) {
    let many = configs.len() > 1;
    for c in configs {
        c.out_dir = Some(if many {
            base.join(output::slug(c.name.as_deref().unwrap_or("experiment")))
        } else {
            base.to_path_buf()
        });
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Mean, confidence half-width and range of a per-replication quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub ci: f64,
    pub min: f64,
    pub max: f64,
}

fn error_stats(values: &[f64], level: f64) -> Result<ErrorStats> {
    let cols: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
    let s = mean_and_ci(&cols, level)?;
    Ok(ErrorStats {
        mean: s.means[0],
        ci: s.half_widths[0],
        min: values.iter().cloned().fold(f64::INFINITY, f64::min),
        max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// One line of a trajectory CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub iter: u64,
    pub cum_samples: u64,
    pub cum_prox: u64,
    pub cum_inner: u64,
    pub gap: Option<f64>,
    pub dist_sq: Option<f64>,
    pub elapsed_ms: f64,
}

/// One line of an aggregate CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub iter: u64,
    pub cum_samples: u64,
    pub mean_gap: Option<f64>,
    pub ci_gap: Option<f64>,
    pub mean_dist_sq: Option<f64>,
    pub ci_dist_sq: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub replication: u64,
    pub seed: u64,
    pub status: Status,
    pub iterations: u64,
    pub cum_samples: u64,
    pub cum_prox: u64,
    pub cum_inner: u64,
    pub final_gap: Option<f64>,
    pub final_dist_sq: Option<f64>,
    pub initial_gap: Option<f64>,
    pub elapsed_ms: f64,
    pub failure: Option<String>,
}

/// Replication means of the work counters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub iterations: f64,
    pub cum_samples: f64,
    pub cum_prox: f64,
    pub cum_inner: f64,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub label: String,
    pub solver: SolverKind,
    pub final_gap: Option<ErrorStats>,
    pub final_dist_sq: Option<ErrorStats>,
    pub counters: Counters,
    /// Replication means of solver diagnostics (estimated inner constants and the like).
    pub diagnostics: BTreeMap<String, f64>,
    pub replications: Vec<ReplicationSummary>,
    #[serde(skip)]
    pub trajectories: Vec<Vec<TrajectoryRow>>,
    #[serde(skip)]
    pub aggregate: Vec<AggregateRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub problem: String,
    pub problem_fingerprint: String,
    pub replications: u64,
    pub confidence: f64,
    pub reference: Option<ReferenceSolution>,
    /// `F(x₀) − F*` of the first solver's start, an estimate of the initial-gap constant.
    pub initial_gap: Option<f64>,
    /// `||x₀ − x*||²` of the first solver's start, an estimate of the initial-distance constant.
    pub initial_dist_sq: Option<f64>,
    pub solvers: Vec<SolverReport>,
}

impl ExperimentReport {
    pub fn solver(&self, label: &str) -> Option<&SolverReport> {
        self.solvers.iter().find(|s| s.label == label)
    }

    /// Writes every CSV and the summary into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for s in &self.solvers {
            let slug = output::slug(&s.label);
            for (rep, rows) in s.trajectories.iter().enumerate() {
                let path = dir.join(format!("trajectory_{slug}_r{rep}.csv"));
                write_atomic(&path, output::trajectory_csv(rep as u64, rows).as_bytes())?;
            }
            let path = dir.join(format!("aggregate_{slug}.csv"));
            write_atomic(&path, output::aggregate_csv(&s.aggregate).as_bytes())?;
        }
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&dir.join("summary.json"), text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
    }
}

fn resolve_reference(config: &ExperimentConfig, problem: &dyn StochasticProblem) -> Result<Option<ReferenceSolution>> {
    match &config.reference {
        ReferencePolicy::None => Ok(None),
        ReferencePolicy::Compute => {
            let tol = config.reference_tol.unwrap_or(DEFAULT_TOL_ITERATIVE);
            Ok(Some((*cached_reference(problem, tol)?).clone()))
        }
        ReferencePolicy::Load(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let r: ReferenceSolution = serde_json::from_str(&text)
                .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
            if r.fingerprint != problem.fingerprint() {
                return Err(Error::config(
                    "reference",
                    format!("{} was computed for a different problem", path.display()),
                ));
            }
            if r.x_star.dim() != problem.dim() {
                return Err(Error::config("reference", "reference dimension does not match the problem"));
            }
            Ok(Some(r))
        }
    }
}

fn rows_of(
    traj: &Trajectory,
    problem: &dyn StochasticProblem,
    reference: Option<&ReferenceSolution>,
    metrics: MetricSet,
) -> Vec<TrajectoryRow> {
    traj.records
        .iter()
        .map(|r| TrajectoryRow {
            iter: r.k,
            cum_samples: r.cum_samples,
            cum_prox: r.cum_prox,
            cum_inner: r.cum_inner,
            gap: reference.filter(|_| metrics.gap()).map(|x| x.gap(problem, &r.y)),
            dist_sq: reference.filter(|_| metrics.dist()).map(|x| x.dist_sq(&r.y)),
            elapsed_ms: r.elapsed_ms,
        })
        .collect()
}

/// Pointwise statistics over the iterations recorded by every replication.
fn aggregate(trajectories: &[Vec<TrajectoryRow>], level: f64) -> Result<Vec<AggregateRow>> {
    let mut common: Option<BTreeSet<u64>> = None;
    for t in trajectories {
        let ks: BTreeSet<u64> = t.iter().map(|r| r.iter).collect();
        common = Some(match common {
            None => ks,
            Some(c) => c.intersection(&ks).copied().collect(),
        });
    }
    let common = common.unwrap_or_default();
    let pick: Vec<Vec<&TrajectoryRow>> = trajectories
        .iter()
        .map(|t| t.iter().filter(|r| common.contains(&r.iter)).collect())
        .collect();
    let column = |f: &dyn Fn(&TrajectoryRow) -> Option<f64>| -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        let mut table = Vec::with_capacity(pick.len());
        for rows in &pick {
            let col: Option<Vec<f64>> = rows.iter().map(|r| f(r)).collect();
            match col {
                Some(c) => table.push(c),
                None => return Ok(None),
            }
        }
        if common.is_empty() {
            return Ok(None);
        }
        let s = mean_and_ci(&table, level)?;
        Ok(Some((s.means, s.half_widths)))
    };
    let gap = column(&|r| r.gap)?;
    let dist = column(&|r| r.dist_sq)?;
    Ok(common
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let samples: Vec<u64> = pick.iter().map(|rows| rows[i].cum_samples).collect();
            let mean_samples = samples.iter().map(|&s| s as f64).sum::<f64>() / samples.len() as f64;
            AggregateRow {
                iter: k,
                cum_samples: mean_samples.round() as u64,
                mean_gap: gap.as_ref().map(|g| g.0[i]),
                ci_gap: gap.as_ref().map(|g| g.1[i]),
                mean_dist_sq: dist.as_ref().map(|d| d.0[i]),
                ci_dist_sq: dist.as_ref().map(|d| d.1[i]),
            }
        })
        .collect())
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn solver_error(i: usize, e: Error) -> Error {
    match e {
        Error::Parameter(m) | Error::Unsupported(m) => Error::config(format!("solvers[{i}]"), m),
        other => other,
    }
}

/// Runs every (solver, replication) pair and assembles the report. When
/// `config.out_dir` is set the report is also written there.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let problem: Arc<dyn StochasticProblem> = config
        .problem
        .build()
        .map_err(|e| Error::config("problem", e.to_string()))?;
    let reference = resolve_reference(config, &*problem)?;

    let jobs: Vec<(usize, u64)> = (0..config.solvers.len())
        .flat_map(|i| (0..config.replications).map(move |r| (i, r)))
        .collect();
    let results: Vec<Result<Trajectory>> = jobs
        .par_iter()
        .map(|&(i, rep)| {
            let mut cfg = config.solver_config(i);
            cfg.seed = config.run_seed(i, rep);
            let stop = reference.as_ref().map(|r| {
                let p = problem.clone();
                move |y: &DenseVector| r.gap(&*p, y)
            });
            let stop_ref = stop.as_ref().map(|f| f as &(dyn Fn(&DenseVector) -> f64 + Sync));
            run_solver(&*problem, &config.solvers[i].solver, &cfg, stop_ref).map_err(|e| solver_error(i, e))
        })
        .collect();

    let mut per_solver: Vec<Vec<Trajectory>> = vec![Vec::new(); config.solvers.len()];
    for ((i, _), res) in jobs.iter().zip(results) {
        per_solver[*i].push(res?);
    }

    let metrics = config.metrics;
    let mut solvers = Vec::with_capacity(per_solver.len());
    for (i, trajs) in per_solver.into_iter().enumerate() {
        let entry = &config.solvers[i];
        let rows: Vec<Vec<TrajectoryRow>> = trajs
            .iter()
            .map(|t| rows_of(t, &*problem, reference.as_ref(), metrics))
            .collect();
        let summaries: Vec<ReplicationSummary> = trajs
            .iter()
            .zip(&rows)
            .enumerate()
            .map(|(rep, (t, r))| ReplicationSummary {
                replication: rep as u64,
                seed: config.run_seed(i, rep as u64),
                status: t.status,
                iterations: t.iterations,
                cum_samples: t.cum_samples,
                cum_prox: t.cum_prox,
                cum_inner: t.cum_inner,
                final_gap: r.last().and_then(|x| x.gap),
                final_dist_sq: r.last().and_then(|x| x.dist_sq),
                initial_gap: r.first().and_then(|x| x.gap),
                elapsed_ms: r.last().map_or(0.0, |x| x.elapsed_ms),
                failure: t.failure.clone(),
            })
            .collect();
        let finals = |f: fn(&ReplicationSummary) -> Option<f64>| -> Result<Option<ErrorStats>> {
            let v: Option<Vec<f64>> = summaries.iter().map(f).collect();
            v.map(|v| error_stats(&v, config.confidence)).transpose()
        };
        let mut keys = BTreeSet::new();
        for t in &trajs {
            keys.extend(t.diagnostics.keys().cloned());
        }
        let diagnostics = keys
            .into_iter()
            .map(|k| {
                let m = mean_of(trajs.iter().filter_map(|t| t.diagnostics.get(&k).copied()));
                (k, m)
            })
            .collect();
        solvers.push(SolverReport {
            label: entry.label(),
            solver: entry.solver.clone(),
            final_gap: finals(|s| s.final_gap)?,
            final_dist_sq: finals(|s| s.final_dist_sq)?,
            counters: Counters {
                iterations: mean_of(trajs.iter().map(|t| t.iterations as f64)),
                cum_samples: mean_of(trajs.iter().map(|t| t.cum_samples as f64)),
                cum_prox: mean_of(trajs.iter().map(|t| t.cum_prox as f64)),
                cum_inner: mean_of(trajs.iter().map(|t| t.cum_inner as f64)),
                elapsed_ms: mean_of(summaries.iter().map(|s| s.elapsed_ms)),
            },
            diagnostics,
            replications: summaries,
            aggregate: aggregate(&rows, config.confidence)?,
            trajectories: rows,
        });
    }

    let first = solvers[0].trajectories.first().and_then(|t| t.first());
    let x0 = trajs_start(config, &*problem)?;
    let report = ExperimentReport {
        name: config.name.clone().unwrap_or_else(|| problem.meta().name.clone()),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config_hash: config.hash(),
        problem: problem.meta().name.clone(),
        problem_fingerprint: problem.fingerprint(),
        replications: config.replications,
        confidence: config.confidence,
        initial_gap: first.and_then(|r| r.gap),
        initial_dist_sq: reference.as_ref().map(|r| r.dist_sq(&x0)),
        reference,
        solvers,
    };
    check_finite(&report)?;
    if let Some(dir) = &config.out_dir {
        report.write(dir)?;
    }
    Ok(report)
}

fn trajs_start(config: &ExperimentConfig, problem: &dyn StochasticProblem) -> Result<DenseVector> {
    match &config.solvers[0].config.x0 {
        Some(v) => DenseVector::new(v.clone()),
        None => Ok(DenseVector::zeros(problem.dim())),
    }
}

/// Rejects reports containing non-finite metrics, which would point at a bug
/// rather than at a property of the method.
fn check_finite(report: &ExperimentReport) -> Result<()> {
    for s in &report.solvers {
        let bad = s.trajectories.iter().flatten().any(|r| {
            r.gap.is_some_and(|v| !v.is_finite()) || r.dist_sq.is_some_and(|v| !v.is_finite())
        });
        if bad {
            return Err(Error::Convergence {
                what: format!("{} (non-finite error metric)", s.label),
                iterations: 0,
                residual: f64::INFINITY,
            });
        }
    }
    Ok(())
}
