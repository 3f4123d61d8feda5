//! The `dlm-opt` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dlm_core::batch::am_dlm_solve;
use dlm_core::certify::{global_certificate_with, hessian_min_eigenvalue, HESSIAN_SIZE_LIMIT};
use dlm_core::{Factorization, Observations};

use crate::config::{DataSource, ExperimentConfig, ExperimentKind, SpecTemplate};
use crate::csv_io::{read_matrix_csv, write_matrix_csv};
use crate::data::{derive_seed, gen_gaussian};
use crate::error::{config, HarnessError, Result};
use crate::experiments::{incremental_compare, k_sweep_experiment, multi_init_experiment, ExperimentReport};
use crate::manifest::RunManifest;
use crate::pool::worker_count;
use crate::prox_check::prox_check;

#[derive(Debug, Parser)]
#[command(name = "dlm-opt", version, about = "Dictionary learning solvers, experiments and optimality checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem and write the factors.
    Solve(SolveArgs),
    /// Multi-initialization study over an (alpha, d, k) grid.
    MultiInit(ExperimentArgs),
    /// Objective spread and gap to k = T across a k grid.
    KSweep(ExperimentArgs),
    /// Incremental solvers against the batch optimum.
    Incremental(ExperimentArgs),
    /// Check the global optimality certificate of a factorization.
    Certify(CertifyArgs),
    /// Randomized check of the squared-l1 proximal operator.
    ProxCheck(ProxCheckArgs),
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// JSON config or run manifest.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; required unless given by --config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Data matrix CSV instead of generated Gaussian data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Include the large grid cells.
    #[arg(long)]
    pub large: bool,
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// Named spec: subspace, sparse, elastic_net, non_norm_elastic_net, coupled_l1, coupled_l2.
    #[arg(long)]
    pub spec: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Divide the loss and code regularizer by the number of samples.
    #[arg(long)]
    pub averaged: Option<bool>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: ExperimentArgs,
    #[command(flatten)]
    pub problem: ProblemArgs,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub common: ExperimentArgs,
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Dictionary CSV; solves the problem first when absent.
    #[arg(long, requires = "h_factor")]
    pub d_factor: Option<PathBuf>,
    /// Code matrix CSV.
    #[arg(long, requires = "d_factor")]
    pub h_factor: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    pub stationarity_tol: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub dual_tol: f64,
    /// Also compute the smallest Hessian eigenvalue (small problems only).
    #[arg(long)]
    pub hessian: bool,
}

#[derive(Debug, Args)]
pub struct ProxCheckArgs {
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub max_dim: usize,
    /// Optional directory for a JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind::*;
            return match e.kind() {
                DisplayHelp | DisplayVersion | DisplayHelpOnMissingArgumentOrSubcommand if e.exit_code() == 0 => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{}", e.render());
                    1
                }
            };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Solve(a) => solve(a),
        Command::MultiInit(a) => experiment(ExperimentKind::MultiInit, "multi-init", &a),
        Command::KSweep(a) => experiment(ExperimentKind::KSweep, "k-sweep", &a),
        Command::Incremental(a) => experiment(ExperimentKind::IncrementalCompare, "incremental", &a),
        Command::Certify(a) => certify(a),
        Command::ProxCheck(a) => run_prox_check(a),
    }
}

/// Loads or defaults the config for `kind` and applies command-line overrides.
pub fn resolve_config(
    kind: ExperimentKind,
    args: &ExperimentArgs,
    problem: Option<&ProblemArgs>,
) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            if cfg.kind != kind {
                return Err(config(format!("{} holds a {:?} config, expected {kind:?}", path.display(), cfg.kind)));
            }
            cfg
        }
        None => {
            if args.seed.is_none() {
                return Err(config("--seed is required without --config"));
            }
            ExperimentConfig::defaults(kind)
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(path) = &args.data {
        cfg.data = DataSource::Csv { path: path.clone() };
    }
    if args.large {
        cfg.include_large = true;
    }
    if let Some(p) = problem {
        if let Some(name) = &p.spec {
            cfg.specs = vec![SpecTemplate::preset(name)?];
        }
        if let Some(alpha) = p.alpha {
            cfg.alphas = vec![alpha];
        }
        if let Some(k) = p.k {
            cfg.ks = vec![k];
        }
        if let Some(averaged) = p.averaged {
            cfg.specs.iter_mut().for_each(|s| s.averaged = averaged);
        }
        if let Some(m) = p.max_iters {
            cfg.solver.max_iters = m;
        }
        if let Some(tol) = p.tol {
            cfg.solver.tol = tol;
        }
    }
    cfg.output = Some(args.out.clone());
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn experiment(kind: ExperimentKind, command: &str, args: &ExperimentArgs) -> Result<i32> {
    let cfg = resolve_config(kind, args, None)?;
    let threads = worker_count()?;
    create_dir(&args.out)?;
    let report: ExperimentReport = match kind {
        ExperimentKind::MultiInit => multi_init_experiment(&cfg, threads)?,
        ExperimentKind::KSweep => k_sweep_experiment(&cfg, threads)?,
        _ => incremental_compare(&cfg)?,
    };
    let mut manifest = RunManifest::new(command, &cfg, threads);
    manifest.outputs = report.write_csv(&args.out)?;
    write_json(&report, &args.out.join("report.json"))?;
    manifest.outputs.push("report.json".into());
    manifest.time("total", report.seconds);
    if let Some(inc) = &report.incremental {
        manifest.time("batch", inc.batch_seconds);
        for arm in &inc.arms {
            manifest.time(arm.name.clone(), arm.seconds);
        }
    }
    manifest.failures = report.failures();
    manifest.write(args.out.join("manifest.json"))?;
    for f in &manifest.failures {
        eprintln!("warning: {f}");
    }
    println!("wrote {} files to {}", manifest.outputs.len() + 1, args.out.display());
    Ok(0)
}

/// Data for single-problem commands: the CSV, or a Gaussian draw of the first grid size.
fn problem_data(cfg: &ExperimentConfig) -> Result<Observations> {
    match &cfg.data {
        DataSource::Csv { path } => read_matrix_csv(path),
        DataSource::Gaussian { mean, sd } => {
            let d = cfg.dims[0];
            Ok(gen_gaussian(d, cfg.samples, *mean, *sd, derive_seed(cfg.seed, &[1, d as u64, 0]))?.into())
        }
    }
}

fn solve_problem(cfg: &ExperimentConfig, x: &Observations) -> Result<(Factorization, dlm_core::TrialReport, f64)> {
    let spec = cfg.specs[0].problem(cfg.alphas[0], cfg.ks[0]);
    let clock = std::time::Instant::now();
    let (fact, report) = am_dlm_solve(x, &spec, &cfg.solver.clone().with_seed(cfg.seed), None)?;
    Ok((fact, report, clock.elapsed().as_secs_f64()))
}

fn solve(args: SolveArgs) -> Result<i32> {
    let cfg = resolve_config(ExperimentKind::Solve, &args.common, Some(&args.problem))?;
    let out = &args.common.out;
    let x = problem_data(&cfg)?;
    let (fact, report, seconds) = solve_problem(&cfg, &x)?;
    create_dir(out)?;
    write_matrix_csv(fact.d(), out.join("D.csv"))?;
    write_matrix_csv(fact.h(), out.join("H.csv"))?;
    write_json(&report, &out.join("report.json"))?;
    let mut manifest = RunManifest::new("solve", &cfg, 1);
    manifest.outputs = vec!["D.csv".into(), "H.csv".into(), "report.json".into()];
    manifest.time("solve", seconds);
    manifest.write(out.join("manifest.json"))?;
    println!(
        "objective {:.10e} after {} iterations (converged: {})",
        report.final_objective, report.iterations, report.converged
    );
    Ok(0)
}

fn certify(args: CertifyArgs) -> Result<i32> {
    let cfg = resolve_config(ExperimentKind::Certify, &args.common, Some(&args.problem))?;
    let out = &args.common.out;
    let x = problem_data(&cfg)?;
    let spec = cfg.specs[0].problem(cfg.alphas[0], cfg.ks[0]);
    let mut manifest = RunManifest::new("certify", &cfg, 1);
    let fact = match (&args.d_factor, &args.h_factor) {
        (Some(dp), Some(hp)) => {
            let d = dense(read_matrix_csv(dp)?, dp)?;
            let h = dense(read_matrix_csv(hp)?, hp)?;
            Factorization::new(d, h)?
        }
        _ => {
            let (fact, _, seconds) = solve_problem(&cfg, &x)?;
            manifest.time("solve", seconds);
            fact
        }
    };
    if fact.k() != spec.k {
        return Err(config(format!("factors have inner size {}, --k is {}", fact.k(), spec.k)));
    }
    let clock = std::time::Instant::now();
    let mut cert = global_certificate_with(&fact, &x, &spec, args.stationarity_tol, args.dual_tol)?;
    if args.hessian {
        let size = fact.d().rows() * fact.k() + fact.k() * fact.h().cols();
        if size > HESSIAN_SIZE_LIMIT {
            eprintln!("warning: skipping Hessian for {size} variables");
        } else {
            cert.hessian_min_eig = Some(hessian_min_eigenvalue(&fact, &x, &spec, None)?);
        }
    }
    manifest.time("certify", clock.elapsed().as_secs_f64());
    create_dir(out)?;
    write_json(&cert, &out.join("certificate.json"))?;
    manifest.outputs = vec!["certificate.json".into()];
    manifest.write(out.join("manifest.json"))?;
    println!(
        "globally optimal: {} (dual sigma_max {:.6e}, alpha {:.6e}, residuals {:.3e} / {:.3e})",
        cert.globally_optimal, cert.dual_sigma_max, cert.alpha, cert.grad_d_norm, cert.grad_h_norm
    );
    Ok(0)
}

fn dense(obs: Observations, path: &Path) -> Result<dlm_core::DenseMatrix> {
    match obs {
        Observations::Full(m) => Ok(m),
        Observations::Masked(_) => Err(config(format!("{} has empty cells", path.display()))),
    }
}

fn run_prox_check(args: ProxCheckArgs) -> Result<i32> {
    let report = prox_check(args.trials, args.seed, args.max_dim)?;
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_json(&report, &out.join("prox_check.json"))?;
    }
    println!(
        "{} trials: max |diff| {:.3e}, max subgradient violation {:.3e}, {} failed",
        report.trials,
        report.max_abs_diff,
        report.max_subgradient_violation,
        report.failed_trials.len()
    );
    Ok(if report.passed() { 0 } else { 2 })
}
