use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use specnorm_core::PowerConfig;
use specnorm_harness::bench::{layers_from_bundle, run_bench, synthetic_layers};
use specnorm_harness::bundle::read_bundle;
use specnorm_harness::normalize::{normalize_files, DEFAULT_EPSILON};
use specnorm_harness::output::{emit, render, OutputFormat};
use specnorm_harness::report::{
    mean_overestimation, report_bundle, synthetic_depthwise_bundle, ReportConfig,
    MOBILENET_V2_STRIDED, MOBILENET_V2_UNIT,
};
use specnorm_harness::study::{run_study, StudyConfig, DEFAULT_ORACLE_ITERS, DEFAULT_TRIALS};
use specnorm_harness::{HarnessError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "specnorm",
    version,
    about = "Spectral norms of depthwise separable convolutions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct Output {
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: OutputFormat,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Synthetic {
    /// 13 unit-stride MobileNetV2 depthwise layers.
    Unit,
    /// 4 stride-2 MobileNetV2 depthwise layers.
    Strided,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Overestimation of the DFT bound on random filters, per resolution.
    Study {
        #[arg(long, value_delimiter = ',', default_values_t = [7, 8, 16, 32, 64, 128])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Kernel extents, e.g. 3x3.
        #[arg(long, default_value = "3x3", value_parser = parse_extents)]
        kernel: Extents,
        #[arg(long, default_value_t = DEFAULT_ORACLE_ITERS)]
        oracle_iters: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Wall-clock timing of the estimators, per layer.
    Bench {
        /// Bundle manifest; synthetic layers when omitted.
        bundle: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Normalize every layer of a bundle and write a new bundle.
    Normalize {
        input: PathBuf,
        output_bundle: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Per-layer norm table for a bundle.
    Report {
        /// Bundle manifest; required unless --synthetic is given.
        bundle: Option<PathBuf>,
        #[arg(long, value_enum, conflicts_with = "bundle")]
        synthetic: Option<Synthetic>,
        #[arg(long)]
        heuristic_stride: bool,
        /// Power iterations for the reference norm; 0 skips it.
        #[arg(long, default_value_t = 0)]
        oracle_iters: usize,
        #[arg(long, default_value_t = 1e-10)]
        epsilon: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
}

fn parse_format(s: &str) -> std::result::Result<OutputFormat, String> {
    s.parse()
}

#[derive(Debug, Clone)]
struct Extents(Vec<usize>);

fn parse_extents(s: &str) -> std::result::Result<Extents, String> {
    s.split('x')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad extent '{p}': {e}"))
        })
        .collect::<std::result::Result<_, _>>()
        .map(Extents)
}

fn power_config(epsilon: f64, seed: u64) -> Result<PowerConfig> {
    Ok(PowerConfig::new(
        epsilon,
        PowerConfig::DEFAULT_MAX_ITERATIONS,
        seed,
    )?)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Study {
            sizes,
            trials,
            seed,
            kernel,
            oracle_iters,
            output,
        } => {
            let cfg = StudyConfig {
                sizes,
                trials,
                seed,
                kernel: kernel.0,
                oracle_iters,
            };
            let rows = run_study(&cfg)?;
            emit(&render(&rows, output.format)?, output.out.as_deref())
        }
        Command::Bench {
            bundle,
            repetitions,
            epsilon,
            seed,
            output,
        } => {
            let layers = match bundle {
                Some(path) => layers_from_bundle(&read_bundle(&path)?)?,
                None => synthetic_layers(seed)?,
            };
            let rows = run_bench(&layers, &power_config(epsilon, seed)?, repetitions)?;
            emit(&render(&rows, output.format)?, output.out.as_deref())
        }
        Command::Normalize {
            input,
            output_bundle,
            epsilon,
            seed,
            output,
        } => {
            let rows = normalize_files(&input, &output_bundle, &power_config(epsilon, seed)?)?;
            emit(&render(&rows, output.format)?, output.out.as_deref())
        }
        Command::Report {
            bundle,
            synthetic,
            heuristic_stride,
            oracle_iters,
            epsilon,
            seed,
            output,
        } => {
            let bundle = match (bundle, synthetic) {
                (Some(path), _) => read_bundle(&path)?,
                (None, Some(Synthetic::Unit)) => {
                    synthetic_depthwise_bundle(&MOBILENET_V2_UNIT, 1, seed)?
                }
                (None, Some(Synthetic::Strided)) => {
                    synthetic_depthwise_bundle(&MOBILENET_V2_STRIDED, 2, seed)?
                }
                (None, None) => {
                    return Err(HarnessError::Usage(
                        "report needs a bundle path or --synthetic".into(),
                    ))
                }
            };
            let cfg = ReportConfig {
                heuristic_stride,
                oracle_iters,
                power: power_config(epsilon, seed)?,
            };
            let rows = report_bundle(&bundle, &cfg)?;
            emit(&render(&rows, output.format)?, output.out.as_deref())?;
            if let Some(mean) = mean_overestimation(&rows) {
                eprintln!("mean overestimation: {:.4}%", 100.0 * mean);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
