//! Command-line driver for the tomography experiment pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use atmotomo::config::{preset, ExperimentConfig};
use atmotomo::pipeline::{
    cmd_evaluate, cmd_forward, cmd_reconstruct, cmd_simulate, diagnose, export_plotdata,
    run_pipeline, sweep, SweepParameter,
};
use atmotomo::Error;

#[derive(Parser)]
#[command(
    name = "atmotomo",
    version,
    about = "Atmospheric tomography experiments: turbulence simulation, \
             forward propagation, SVTD and frame-based reconstruction, and \
             quality evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config file (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Canned configuration: `ngs6` or `mixed`.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the config output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate turbulence screens.
    Simulate,
    /// Propagate stored screens to guide-star wavefronts.
    Forward,
    /// Reconstruct layers from stored wavefronts.
    Reconstruct,
    /// Score a stored reconstruction against the stored screens.
    Evaluate,
    /// Run simulate, forward, reconstruct and evaluate in one go.
    Pipeline,
    /// Rerun the reconstruction over a parameter range, reusing screens and
    /// the SVD cache.
    Sweep {
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Picard condition and well-posedness scan.
    Diagnose,
    /// Emit plot-ready CSV tables from a completed artifact directory.
    ExportPlotdata,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    Alpha,
    Iterations,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut config = match (&cli.config, &cli.preset) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "--config and --preset are mutually exclusive".into(),
            ))
        }
        (Some(path), None) => ExperimentConfig::from_file(path)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => {
            return Err(Error::Config(
                "either --config <path> or --preset <name> is required".into(),
            ))
        }
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::ExportPlotdata => {
            // Works from --out alone; falls back to the config's directory.
            let dir = match &cli.out {
                Some(dir) => dir.clone(),
                None => load_config(cli)?.output_dir,
            };
            export_plotdata(&dir)
        }
        command => {
            let config = load_config(cli)?;
            match command {
                Command::Simulate => cmd_simulate(&config),
                Command::Forward => cmd_forward(&config),
                Command::Reconstruct => cmd_reconstruct(&config),
                Command::Evaluate => {
                    let report = cmd_evaluate(&config)?;
                    println!(
                        "mean residual rms {:.6}, mean strehl proxy {:.6}",
                        report.mean_residual_rms, report.mean_strehl
                    );
                    Ok(())
                }
                Command::Pipeline => {
                    let summary = run_pipeline(&config)?;
                    println!("artifacts written to {}", summary.out_dir.display());
                    for (l, err) in summary.report.layer_errors.iter().enumerate() {
                        println!("layer {l} relative error {err:.6}");
                    }
                    println!(
                        "mean residual rms {:.6}, mean strehl proxy {:.6}",
                        summary.report.mean_residual_rms, summary.report.mean_strehl
                    );
                    Ok(())
                }
                Command::Sweep { param, values } => {
                    let parameter = match param {
                        SweepParam::Alpha => SweepParameter::Alpha,
                        SweepParam::Iterations => SweepParameter::Iterations,
                    };
                    let rows = sweep(&config, parameter, values)?;
                    for row in &rows {
                        println!(
                            "value {:.3e}: mean residual rms {:.6}",
                            row.value, row.mean_residual_rms
                        );
                    }
                    Ok(())
                }
                Command::Diagnose => {
                    let summary = diagnose(&config)?;
                    println!(
                        "picard: {:?} (last-decade growth {:.3}); min sigma {:.6e} at ({}, {})",
                        summary.picard_verdict,
                        summary.picard_growth,
                        summary.min_sigma,
                        summary.argmin.0,
                        summary.argmin.1
                    );
                    Ok(())
                }
                Command::ExportPlotdata => unreachable!("handled above"),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Config(_)
                | Error::Extent(_)
                | Error::Json(_)
                | Error::MixedStarKinds
                | Error::CacheMismatch { .. } => ExitCode::from(2),
                Error::Numerical(_) | Error::Diverged { .. } => ExitCode::from(3),
                Error::Io(_) | Error::Format(_) | Error::ShapeMismatch(_) => ExitCode::from(1),
            }
        }
    }
}
