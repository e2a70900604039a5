use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use mallsim_core::calibration::{calibrate, CalibrationTargets, Search};
use mallsim_core::experiment::{run_experiment, RunConfig, Variant, WorkloadSource};
use mallsim_core::{CostParams, ProfileSet, Workload};

/// Discrete-event simulator for static and malleable HPC workloads.
#[derive(Debug, Parser)]
#[command(name = "mallsim", version, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment manifest (JSON). Built-in defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single repetition with this seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Variant for `run`: Static, Baseline, Merge, BaselineAsync or MergeAsync.
    #[arg(long, global = true)]
    variant: Option<Variant>,
    /// Output directory.
    #[arg(long, global = true, env = "MALLSIM_OUT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the workload of one seed as JSON.
    Generate,
    /// Run one variant over the configured seeds.
    Run,
    /// Run all five variants on shared workloads and aggregate them.
    Experiment,
    /// Fit the resize cost parameters to the reference resize statistics.
    Calibrate,
}

/// Failure class; decides the exit status.
enum Failure {
    Usage(anyhow::Error),
    Simulation(anyhow::Error),
}

impl Failure {
    fn usage(e: impl Into<anyhow::Error>) -> Self {
        Failure::Usage(e.into())
    }

    fn simulation(e: impl Into<anyhow::Error>) -> Self {
        Failure::Simulation(e.into())
    }
}

struct Prepared {
    config: RunConfig,
    cost: CostParams,
    profiles: ProfileSet,
}

fn prepare(cli: &Cli) -> Result<Prepared, Failure> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(Failure::usage)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    if let Some(variant) = cli.variant {
        config.variant = variant;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let WorkloadSource::Path(path) = &config.workload {
        Workload::load(path)
            .with_context(|| format!("reading workload {}", path.display()))
            .map_err(Failure::usage)?;
    }
    let cost = config
        .cost()
        .context("reading cost parameters")
        .map_err(Failure::usage)?;
    Ok(Prepared {
        config,
        cost,
        profiles: ProfileSet::default(),
    })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let Prepared {
        config,
        cost,
        profiles,
    } = prepare(cli)?;
    let out = &config.output_dir;
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(Failure::simulation)?;

    match cli.command {
        Command::Generate => {
            let seed = config.seeds[0];
            let workload = config
                .workload_for_seed(seed, &profiles)
                .map_err(Failure::simulation)?;
            let path = out.join(format!("workload-seed-{seed}.json"));
            workload.save(&path).map_err(Failure::simulation)?;
            println!("{}", path.display());
        }
        Command::Run | Command::Experiment => {
            let variants: Vec<Variant> = match cli.command {
                Command::Run => vec![config.variant],
                _ => Variant::ALL.to_vec(),
            };
            let result = run_experiment(&config, &variants, &cost, &profiles)
                .map_err(Failure::simulation)?;
            result.write(out).map_err(Failure::simulation)?;
            print!("{}", result.aggregate_csv());
        }
        Command::Calibrate => {
            let targets = CalibrationTargets::default();
            let fit = calibrate(&config, &cost, &targets, Search::default(), &profiles)
                .map_err(Failure::simulation)?;
            fit.params
                .save(&out.join("cost_params.json"))
                .map_err(Failure::simulation)?;
            write_json(&out.join("calibration.json"), &fit).map_err(Failure::simulation)?;
            println!(
                "baseline_accumulated={} merge_accumulated={} resize_ratio={} loss={}",
                fit.observed.baseline_accumulated,
                fit.observed.merge_accumulated,
                fit.observed.resize_ratio,
                fit.loss
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Simulation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
