//! `ptlab` — experiment driver for the time-parallel integration
//! laboratory.
//!
//! Three experiments are available: a complex-plane stability/accuracy
//! sweep of the coarse, fine, and iteration-truncated parallel-in-time
//! schemes; a lid-driven-cavity convergence study over mesh size,
//! viscosity, and coarse step size; and a tabulation of the parallel
//! speedup ceiling. Results are CSV or JSON files plus a `manifest.json`
//! from which the run can be reconstructed exactly.
//!
//! Exit codes: 0 on success, 1 when a computation fails, 2 for
//! configuration errors.

mod commands;
mod config;
mod error;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{ExperimentConfig, ExperimentKind, OutputFormat, Overrides};
use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "ptlab",
    version,
    about = "Time-parallel integration laboratory: stability sweeps, cavity convergence \
             studies, and speedup tables"
)]
struct Cli {
    /// Experiment to run (overrides the config file).
    #[arg(long, value_enum)]
    experiment: Option<ExperimentKind>,

    /// TOML configuration file; defaults reproduce the reference study.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory (falls back to the config file, then $PTLAB_OUT,
    /// then ./results).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Output format for result files.
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,

    /// Comma-separated viscosity list for the cavity study.
    #[arg(
        long,
        value_delimiter = ',',
        value_name = "LIST",
        allow_negative_numbers = true
    )]
    nu: Option<Vec<f64>>,

    /// Comma-separated mesh-size list for the cavity study.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    nx: Option<Vec<usize>>,

    /// Comma-separated coarse step sizes for the cavity study.
    #[arg(
        long = "dt-coarse",
        value_delimiter = ',',
        value_name = "LIST",
        allow_negative_numbers = true
    )]
    dt_coarse: Option<Vec<f64>>,

    /// Fine step size for the cavity study.
    #[arg(long = "dt-fine", value_name = "DT", allow_negative_numbers = true)]
    dt_fine: Option<f64>,

    /// Number of time slices in the decomposition.
    #[arg(long, value_name = "N")]
    slices: Option<usize>,

    /// Number of corrective iterations in the cavity study.
    #[arg(long = "max-iter", value_name = "K")]
    max_iter: Option<usize>,

    /// Worker threads for the parallel fine sweeps (default: all cores).
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(workers) = cli.workers {
        if workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot configure worker pool: {e}")))?;
    }
    let overrides = Overrides {
        experiment: cli.experiment,
        out: cli.out,
        format: cli.format,
        nu: cli.nu,
        nx: cli.nx,
        dt_coarse: cli.dt_coarse,
        dt_fine: cli.dt_fine,
        slices: cli.slices,
        max_iter: cli.max_iter,
    };
    let config = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;
    let experiment = config.experiment.ok_or_else(|| {
        CliError::Config(
            "no experiment selected: pass --experiment or set `experiment` in the config file"
                .into(),
        )
    })?;
    let out_dir = config.resolve_out_dir();
    fs::create_dir_all(&out_dir).map_err(|e| {
        CliError::Config(format!(
            "cannot create output directory {}: {e}",
            out_dir.display()
        ))
    })?;
    match experiment {
        ExperimentKind::Stability => commands::cmd_stability(&config, &out_dir),
        ExperimentKind::Cavity => commands::cmd_cavity(&config, &out_dir),
        ExperimentKind::Speedup => commands::cmd_speedup(&config, &out_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ptlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
