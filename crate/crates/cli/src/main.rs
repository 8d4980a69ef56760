//! `kernel-rct`: fit, embed, test, power and simulation commands.
//!
//! Exit codes: 0 on success, 1 on usage, input or IO errors, 2 when a model
//! fit fails to converge.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crate::commands::NotConverged;
use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "kernel-rct",
    version,
    about = "Kernel-method design and analysis of two-arm longitudinal trials"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "F")]
    alpha: Option<f64>,
    #[arg(long, global = true, value_name = "F")]
    rho: Option<f64>,
    /// Test method: mmd, kernel-hotelling, hotelling-f or lmm.
    #[arg(long, global = true, value_name = "NAME")]
    method: Option<String>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    input: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Fit the GP model to the CN cohort of a raw cohort CSV.
    Fit,
    /// Build the Fisher embedding from fitted parameters and the CN cohort.
    Embed,
    /// Two-sample test on long-format two-arm data.
    Test,
    /// Power curve for the CN-vs-MCI local alternative.
    Power,
    /// Simulated FvH-vs-LMM power over the (n, t) grid.
    Simulate,
    /// fit, embed and power in one run, plus the fold analysis.
    Pipeline,
    /// Write a synthetic raw cohort CSV.
    Synth,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(a) = cli.alpha {
        cfg.alpha = a;
    }
    if let Some(r) = cli.rho {
        cfg.rho = r;
    }
    if let Some(m) = &cli.method {
        cfg.method = m.clone();
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(i) = &cli.input {
        cfg.input = Some(i.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("KERNEL_RCT_THREADS") else {
        return Ok(());
    };
    let n: usize =
        v.trim().parse().ok().filter(|&n| n > 0).with_context(|| {
            format!("KERNEL_RCT_THREADS must be a positive integer (got `{v}`)")
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    let cfg = resolve(cli)?;
    match cli.command {
        Command::Fit => commands::fit(&cfg),
        Command::Embed => commands::embed(&cfg),
        Command::Test => commands::test(&cfg),
        Command::Power => commands::power(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Pipeline => commands::pipeline(&cfg),
        Command::Synth => commands::synth(&cfg),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let non_convergence = err.chain().any(|e| {
        e.is::<NotConverged>()
            || matches!(
                e.downcast_ref::<kernel_rct::Error>(),
                Some(kernel_rct::Error::NonConvergence { .. })
            )
    });
    if non_convergence {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
