//! `spectra` — Monte Carlo laboratory for the 1D bond-disordered ring
//! operator. Experiments are described by JSON configs; runs are
//! reproducible from `(config, master_seed)` for any worker count and
//! can be checkpointed and resumed.

mod config;
mod output;
mod runner;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use config::ExperimentConfig;
use runner::RunArgs;

#[derive(Parser)]
#[command(name = "spectra", version, about = "spectral statistics of the bond-disordered ring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (beats SPECTRA_WORKERS and the config).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (beats the config).
    #[arg(long)]
    out: Option<String>,
    /// Override a config field by dotted path, e.g. --set n_samples=100.
    #[arg(long = "set")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in the config.
    Run(Common),
    /// Dump spectra and weight fields for regression fixtures.
    SampleSpectrum(Common),
    /// Estimate the integrated density of states and its derivative.
    Dos(Common),
    /// Rescaled-eigenvalue window counts against the Poisson reference.
    Levelstats(Common),
    /// Probability of an eigenvalue near a fixed energy vs the linear bound.
    Wegner(Common),
    /// Probability of two eigenvalues in a small interval vs the quadratic bound.
    Minami(Common),
    /// Joint spectral hits near two energies across volume scales.
    Decorrelate(Common),
    /// Joint count-vector statistics at several energies.
    Independence(Common),
    /// Heavy-near-zero disorder: bad-event frequency and eigenvector windows.
    Heavytail(Common),
    /// Gradient separation of eigenvalue pairs near two energies.
    Separation(Common),
    /// Gradient/Hessian/sum-rule validation against finite differences.
    CheckPerturbation(Common),
    /// Closed-form determinants against pivoted elimination.
    CheckDeterminants(Common),
    /// Laplace-functional expansion identities on random joint laws.
    LaplaceCheck(Common),
    /// Continue an interrupted run from its manifest.
    Resume {
        /// Path to manifest.json of the interrupted run.
        manifest: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn main() {
    if let Err(e) = real_main() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    let (common, pinned): (Common, Option<&'static str>) = match cli.command {
        Command::Run(c) => (c, None),
        Command::SampleSpectrum(c) => (c, Some("sample-spectrum")),
        Command::Dos(c) => (c, Some("dos")),
        Command::Levelstats(c) => (c, Some("levelstats")),
        Command::Wegner(c) => (c, Some("wegner")),
        Command::Minami(c) => (c, Some("minami")),
        Command::Decorrelate(c) => (c, Some("decorrelate")),
        Command::Independence(c) => (c, Some("independence")),
        Command::Heavytail(c) => (c, Some("heavytail")),
        Command::Separation(c) => (c, Some("separation")),
        Command::CheckPerturbation(c) => (c, Some("check-perturbation")),
        Command::CheckDeterminants(c) => (c, Some("check-determinants")),
        Command::LaplaceCheck(c) => (c, Some("laplace-check")),
        Command::Resume { manifest, workers } => {
            return runner::resume(&manifest, workers);
        }
    };

    let config = ExperimentConfig::load(
        &common.config,
        &common.sets,
        common.seed,
        common.workers,
        common.out.as_deref(),
    )?;
    if let Some(name) = pinned {
        if config.experiment != name {
            bail!(
                "config names experiment '{}' but the subcommand is '{name}'",
                config.experiment
            );
        }
    }

    let args = RunArgs {
        config_path: common.config.clone(),
        sets: common.sets.clone(),
        seed: common.seed,
        workers: common.workers,
    };
    match config.experiment.as_str() {
        "sample-spectrum" | "dos" | "check-perturbation" | "check-determinants"
        | "laplace-check" => runner::run_direct(&args, &config),
        _ => runner::run_sampled(&args, &config),
    }
}
