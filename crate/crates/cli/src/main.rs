//! `pclt`: simulate Poisson-driven Gilbert graphs and check their
//! multivariate normal approximation.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use poisson_clt::{Error, Result};

use config::ExperimentConfig;
use output::{resolve_out_dir, Sink};

#[derive(Parser)]
#[command(name = "pclt", version, about = "Gilbert graph edge-length CLT experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `master_seed` from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (else $PCLT_OUT_DIR, else `output_dir`, else ./pclt-out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample configurations and record raw and normalized functionals.
    Simulate(Common),
    /// Covariance brackets, target matrix and empirical covariance.
    Covariance(Common),
    /// Closed-form (optionally Monte Carlo) ζ terms and distance bounds.
    Bounds(Common),
    /// End-to-end run: covariance error, test-function panel and bounds.
    Clt(Common),
    /// Positive-definiteness certificate for the window Gram matrix.
    Pdcheck(Common),
    /// Empirical check of the p-Poincaré inequality per component.
    Poincare(Common),
}

type Runner = fn(&config::Validated, &Sink) -> Result<serde_json::Value>;

fn run(name: &'static str, common: &Common, f: Runner) -> Result<PathBuf> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| Error::validation("config", format!("cannot read {}: {e}", common.config.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(s) = common.seed {
        cfg.master_seed = s;
    }
    let validated = cfg.validate()?;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Error::validation("threads", "must be at least 1"));
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let dir = resolve_out_dir(common.out.as_deref(), &cfg);
    let sink = Sink::new(dir, name, &cfg)?;
    let result = f(&validated, &sink)?;
    sink.write_report(&result)
}

fn diagnostic(e: &Error) -> serde_json::Value {
    let kind = if e.is_validation() { "validation" } else { "runtime" };
    let field = match e {
        Error::Validation { field, .. } => Some(field.clone()),
        _ => None,
    };
    serde_json::json!({ "error": kind, "field": field, "message": e.to_string() })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common, f): (&'static str, &Common, Runner) = match &cli.command {
        Command::Simulate(c) => ("simulate", c, commands::simulate),
        Command::Covariance(c) => ("covariance", c, commands::covariance),
        Command::Bounds(c) => ("bounds", c, commands::bounds),
        Command::Clt(c) => ("clt", c, commands::clt),
        Command::Pdcheck(c) => ("pdcheck", c, commands::pdcheck),
        Command::Poincare(c) => ("poincare", c, commands::poincare),
    };
    match run(name, common, f) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", diagnostic(&e));
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
