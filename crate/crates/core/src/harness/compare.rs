use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{output::format_float, ExperimentReport, SolverReport};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub mean_error: f64,
    pub ci_error: f64,
    /// `mean_error` minus the first row's.
    pub diff_error: f64,
    pub mean_iterations: f64,
    pub mean_samples: f64,
    pub mean_prox: f64,
    pub mean_inner: f64,
    pub mean_elapsed_ms: f64,
}

/// Aligned final-error table with pairwise win counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub problem_fingerprint: String,
    /// `dist_sq` when every solver has it, otherwise `gap`.
    pub metric: String,
    pub rows: Vec<ComparisonRow>,
    /// `wins[i][j]`: paired replications where row `i` ends strictly below row `j`.
    pub wins: Vec<Vec<usize>>,
    pub paired_replications: usize,
}

fn finals(s: &SolverReport, dist: bool) -> Option<Vec<f64>> {
    s.replications
        .iter()
        .map(|r| if dist { r.final_dist_sq } else { r.final_gap })
        .collect()
}

/// Compares every solver of every report. All reports must share the problem fingerprint.
pub fn compare(reports: &[&ExperimentReport]) -> Result<Comparison> {
    let first = reports.first().ok_or_else(|| Error::param("nothing to compare"))?;
    if let Some(other) = reports.iter().find(|r| r.problem_fingerprint != first.problem_fingerprint) {
        return Err(Error::param(format!(
            "reports describe different problems ({} vs {})",
            first.problem, other.problem
        )));
    }
    let solvers: Vec<&SolverReport> = reports.iter().flat_map(|r| r.solvers.iter()).collect();
    let dist = solvers.iter().all(|s| finals(s, true).is_some());
    let gap = solvers.iter().all(|s| finals(s, false).is_some());
    if !dist && !gap {
        return Err(Error::param("reports carry no common error metric"));
    }
    let values: Vec<Vec<f64>> = solvers.iter().map(|s| finals(s, dist).unwrap_or_default()).collect();
    let paired = values.iter().map(Vec::len).min().unwrap_or(0);

    let mut rows = Vec::with_capacity(solvers.len());
    for s in &solvers {
        let stats = if dist { &s.final_dist_sq } else { &s.final_gap };
        let stats = stats.as_ref().expect("metric presence checked above");
        rows.push(ComparisonRow {
            label: s.label.clone(),
            mean_error: stats.mean,
            ci_error: stats.ci,
            diff_error: 0.0,
            mean_iterations: s.counters.iterations,
            mean_samples: s.counters.cum_samples,
            mean_prox: s.counters.cum_prox,
            mean_inner: s.counters.cum_inner,
            mean_elapsed_ms: s.counters.elapsed_ms,
        });
    }
    let base = rows[0].mean_error;
    for r in &mut rows {
        r.diff_error = r.mean_error - base;
    }
    let wins = values
        .iter()
        .map(|a| {
            values
                .iter()
                .map(|b| (0..paired).filter(|&k| a[k] < b[k]).count())
                .collect()
        })
        .collect();
    Ok(Comparison {
        problem_fingerprint: first.problem_fingerprint.clone(),
        metric: if dist { "dist_sq" } else { "gap" }.into(),
        rows,
        wins,
        paired_replications: paired,
    })
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "label,mean_{m},ci_{m},diff_{m},mean_iterations,mean_samples,mean_prox,mean_inner,mean_elapsed_ms",
            m = self.metric
        );
        for r in &self.rows {
            out.push_str(&format!(",wins_vs_{}", super::output::slug(&r.label)));
        }
        out.push('\n');
        for (i, r) in self.rows.iter().enumerate() {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.label,
                format_float(r.mean_error),
                format_float(r.ci_error),
                format_float(r.diff_error),
                format_float(r.mean_iterations),
                format_float(r.mean_samples),
                format_float(r.mean_prox),
                format_float(r.mean_inner),
                format_float(r.mean_elapsed_ms)
            );
            for w in &self.wins[i] {
                let _ = write!(out, ",{w}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(5).max(6);
        let mut out = format!(
            "{:<width$}  {:>12}  {:>10}  {:>12}  {:>10}  {:>12}  {:>10}  {:>10}\n",
            "solver",
            format!("mean {}", self.metric),
            "ci",
            "diff",
            "iters",
            "samples",
            "prox",
            "inner",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>12.4e}  {:>10.2e}  {:>12.4e}  {:>10.1}  {:>12.0}  {:>10.0}  {:>10.0}",
                r.label,
                r.mean_error,
                r.ci_error,
                r.diff_error,
                r.mean_iterations,
                r.mean_samples,
                r.mean_prox,
                r.mean_inner
            );
        }
        let _ = writeln!(out, "\nwins over {} paired replications (row beats column):", self.paired_replications);
        for (i, r) in self.rows.iter().enumerate() {
            let cells: Vec<String> = self.wins[i].iter().map(|w| format!("{w:>4}")).collect();
            let _ = writeln!(out, "{:<width$} {}", r.label, cells.join(""));
        }
        out
    }
}
