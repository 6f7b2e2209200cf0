//! `vsapm`: runs experiment configs, compares solvers, computes references and
//! runs the self-test.
//!
//! Exit codes: 0 success, 1 invalid input, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vsapm_core::harness::{
    assign_out_dirs, compare, load_experiments, run_experiment, selftest, write_atomic, Comparison, ExperimentConfig,
    ExperimentReport, OUT_DIR_ENV,
};
use vsapm_core::reference::cached_reference;
use vsapm_core::Error;

const FALLBACK_OUT_DIR: &str = "vsapm-out";

#[derive(Parser)]
#[command(name = "vsapm", version, about = "Variable sample-size accelerated proximal methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in a config and write trajectory, aggregate and summary files.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; one subdirectory per experiment for multi-experiment configs.
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
    },
    /// Print a solver comparison, either by running a config or from saved summaries.
    Compare {
        #[arg(long, required_unless_present = "report", conflicts_with = "report")]
        config: Option<PathBuf>,
        /// A `summary.json` written by `solve`; repeat to compare several.
        #[arg(long, num_args = 1..)]
        report: Vec<PathBuf>,
        /// Print CSV instead of the text table.
        #[arg(long)]
        csv: bool,
        /// Also write the reports and `comparison.csv` here.
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
    },
    /// Compute the reference solution of each experiment's problem and print it as JSON.
    Reference {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Write `reference.json` here (per experiment subdirectory for multi-experiment configs).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suites.
    Selftest,
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::Parameter(_) | Error::Json(_) | Error::Unsupported(_) => {
                Failure::Invalid(e.to_string())
            }
            Error::Io { .. } | Error::Convergence { .. } => Failure::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Solve { config, out } => solve(&config, out),
        Command::Compare {
            config,
            report,
            csv,
            out,
        } => match config {
            Some(path) => compare_config(&path, csv, out),
            None => compare_reports(&report, csv),
        },
        Command::Reference { config, tol, out } => reference(&config, tol, out),
        Command::Selftest => {
            let report = selftest();
            print!("{}", report.to_text());
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::Runtime("self-test failed".into()))
            }
        }
    }
}

fn load(path: &Path) -> Result<Vec<ExperimentConfig>, Failure> {
    let configs = load_experiments(path)?;
    for c in &configs {
        c.validate()?;
    }
    Ok(configs)
}

fn print_comparison(cmp: &Comparison, csv: bool) {
    if csv {
        print!("{}", cmp.to_csv());
    } else {
        print!("{}", cmp.to_text());
    }
}

fn solve(path: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let mut configs = load(path)?;
    match out {
        Some(dir) => assign_out_dirs(&mut configs, &dir),
        None if configs.iter().any(|c| c.out_dir.is_none()) => {
            assign_out_dirs(&mut configs, Path::new(FALLBACK_OUT_DIR))
        }
        None => {}
    }
    for cfg in &configs {
        let report = run_experiment(cfg)?;
        let dir = cfg.out_dir.as_deref().expect("output directory assigned above");
        println!("== {} -> {}", report.name, dir.display());
        if report.reference.is_some() {
            print_comparison(&compare(&[&report])?, false);
        }
    }
    Ok(())
}

fn compare_config(path: &Path, csv: bool, out: Option<PathBuf>) -> Result<(), Failure> {
    let mut configs = load(path)?;
    match &out {
        Some(dir) => assign_out_dirs(&mut configs, dir),
        None => configs.iter_mut().for_each(|c| c.out_dir = None),
    }
    for cfg in &configs {
        let report = run_experiment(cfg)?;
        let cmp = compare(&[&report])?;
        if configs.len() > 1 && !csv {
            println!("== {}", report.name);
        }
        print_comparison(&cmp, csv);
        if let Some(dir) = &cfg.out_dir {
            write_atomic(&dir.join("comparison.csv"), cmp.to_csv().as_bytes())?;
        }
    }
    Ok(())
}

fn compare_reports(paths: &[PathBuf], csv: bool) -> Result<(), Failure> {
    let reports = paths
        .iter()
        .map(|p| ExperimentReport::load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&ExperimentReport> = reports.iter().collect();
    print_comparison(&compare(&refs)?, csv);
    Ok(())
}

fn reference(path: &Path, tol: f64, out: Option<PathBuf>) -> Result<(), Failure> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Failure::Invalid(format!("--tol must be positive, got {tol}")));
    }
    let mut configs = load(path)?;
    if let Some(dir) = &out {
        assign_out_dirs(&mut configs, dir);
    }
    for cfg in &configs {
        let problem = cfg
            .problem
            .build()
            .map_err(|e| Error::Config {
                path: "problem".into(),
                message: e.to_string(),
            })?;
        let solution = cached_reference(&*problem, tol)?;
        let mut text = serde_json::to_string_pretty(&*solution).map_err(Error::from)?;
        text.push('\n');
        print!("{text}");
        if out.is_some() {
            let dir = cfg.out_dir.as_deref().expect("assigned above");
            std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
            write_atomic(&dir.join("reference.json"), text.as_bytes())?;
        }
    }
    Ok(())
}
