//! Command-line front end for the memfpk pipeline.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 missing input artifact, 1 other I/O failure.

use clap::{Args, Parser, Subcommand};
use memfpk::config::{RunConfig, Scale};
use memfpk::fgn::{sample_path, FgnSpec};
use memfpk::io;
use memfpk::runner::{compare_files, configure_threads, reproduce, Runner};
use memfpk::{Error, Result};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "memfpk",
    version,
    about = "Transient response PDFs of 2D systems driven by fractional Gaussian noise",
    long_about = "Pipeline stages: simulate (ensemble with Malliavin tracking), estimate \
                  (data-driven diffusion coefficient fields), solve (memory-dependent \
                  Fokker-Planck-Kolmogorov equation), analytic (exact linear Gaussian \
                  reference), compare (stored PDF grids), reproduce (builtin examples \
                  end to end)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the config-driven stages.
#[derive(Args)]
struct StageArgs {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the simulation master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Cap the number of worker threads
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the ensemble (with Malliavin-derivative tracking) and write
    /// snapshot tables
    Simulate(StageArgs),
    /// Estimate diffusion coefficient fields from a simulated ensemble
    Estimate(StageArgs),
    /// Solve the memory-dependent Fokker-Planck-Kolmogorov equation
    Solve(StageArgs),
    /// Exact transient Gaussian of the linear reference model
    Analytic(StageArgs),
    /// Compare two stored PDF grids (CSV or binary, chosen by extension)
    Compare {
        /// First PDF grid file
        a: PathBuf,
        /// Second PDF grid file (same geometry)
        b: PathBuf,
        /// Write the metrics JSON here as well as to stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a builtin example end to end
    Reproduce {
        /// Example id: ex1 | ex2 | ex3 | ex4
        example: String,
        /// Problem size: `desk` finishes on a laptop, `paper` is the full run
        #[arg(long, default_value = "desk")]
        scale: String,
        /// Override the example's output directory
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the master seed
        #[arg(long)]
        seed: Option<u64>,
        /// Cap the number of worker threads
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Dump one fractional Gaussian noise increment sequence, one value per
    /// line at 17 significant digits (debugging aid)
    Fgn {
        /// Hurst exponent in (1/2, 1)
        #[arg(long)]
        hurst: f64,
        /// Increment spacing
        #[arg(long)]
        dt: f64,
        /// Number of increments
        #[arg(long)]
        n: usize,
        /// Stream seed
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output file
        #[arg(long)]
        out: PathBuf,
    },
}

enum Stage {
    Simulate,
    Estimate,
    Solve,
    Analytic,
}

fn load_runner(args: &StageArgs) -> Result<Runner> {
    configure_threads(args.threads);
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(format!("config file {}", args.config.display()))
        } else {
            Error::from(e)
        }
    })?;
    let cfg = RunConfig::from_toml(&text)?;
    Ok(Runner::new(cfg, &text, args.out.clone(), args.seed))
}

fn run_stage(args: &StageArgs, stage: Stage) -> Result<()> {
    let runner = load_runner(args)?;
    match stage {
        Stage::Simulate => {
            let ens = runner.simulate()?;
            println!(
                "simulated {} paths ({} divergent), {} snapshots each -> {}",
                ens.paths.len(),
                ens.n_divergent,
                ens.record_steps.len(),
                runner.out.join("ensemble").display()
            );
        }
        Stage::Estimate => {
            let field = runner.estimate(None)?;
            println!(
                "estimated coefficient fields at {} times on a {}x{} bin grid -> {}",
                field.snapshots.len(),
                field.grid.n1,
                field.grid.n2,
                runner.out.join("coefficients").display()
            );
        }
        Stage::Solve => {
            let report = runner.solve(None)?;
            for e in &report.entries {
                println!(
                    "t = {:>8.4}  mass = {:.6}  min = {:+.3e}  max drift = {:.3e}",
                    e.time, e.mass, e.min_value, e.max_mass_drift
                );
            }
            println!(
                "min CFL margin {:.3} -> {}",
                report.min_cfl_margin,
                runner.out.join("solve").display()
            );
        }
        Stage::Analytic => {
            runner.analytic()?;
            println!("wrote {}", runner.out.join("analytic").display());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => run_stage(&a, Stage::Simulate),
        Command::Estimate(a) => run_stage(&a, Stage::Estimate),
        Command::Solve(a) => run_stage(&a, Stage::Solve),
        Command::Analytic(a) => run_stage(&a, Stage::Analytic),
        Command::Compare { a, b, out } => {
            let metrics = compare_files(&a, &b)?;
            let text = serde_json::to_string_pretty(&metrics)
                .map_err(|e| Error::Io(std::io::Error::other(e)))?;
            println!("{text}");
            if let Some(path) = out {
                io::write_json(&path, &metrics)?;
            }
            Ok(())
        }
        Command::Reproduce { example, scale, out, seed, threads } => {
            configure_threads(threads);
            let scale = Scale::from_str(&scale)?;
            let runner = reproduce(&example, scale, out, seed)?;
            println!("reproduced {example} -> {}", runner.out.display());
            Ok(())
        }
        Command::Fgn { hurst, dt, n, seed, out } => {
            let spec = FgnSpec::new(hurst, dt, n, seed)?;
            let increments = sample_path(&spec)?;
            io::write_increments_csv(&out, &increments.values)?;
            println!("wrote {n} increments -> {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
