//! Command-line front end: validate a configuration, calibrate the shift,
//! run the full pipeline, or re-emit reports from an existing bundle.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fplab::error::{Error, Result};
use fplab::experiment::{
    emit_reports, parse_config, run_experiment, validate_config, ExperimentConfig, LambdaPolicy,
};

#[derive(Parser)]
#[command(name = "fplab", version, about = "Spectral stochastic-PDE laboratory")]
struct Cli {
    /// Worker threads for data-parallel stages (0 = automatic). Results are
    /// bit-identical across thread counts.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a configuration and exit.
    Validate(ConfigArgs),
    /// Run the calibration sweep alone and print the outcome.
    Calibrate(ConfigArgs),
    /// Run the full pipeline and emit reports.
    Run(ConfigArgs),
    /// Re-verify an existing bundle and rebuild its summary.
    Report {
        /// Directory holding a run manifest.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Validate(args) => {
            let cfg = load_config(&args)?;
            validate_config(&cfg)?;
            println!("ok: configuration is valid");
            Ok(())
        }
        Command::Calibrate(args) => {
            let cfg = load_config(&args)?;
            validate_config(&cfg)?;
            // Force the calibrate policy so the sweep runs even for a
            // fixed-lambda configuration, defaulting the constant to 1.
            let mut cfg = cfg;
            if let LambdaPolicy::Fixed { .. } = cfg.lambda {
                cfg.lambda = LambdaPolicy::Calibrate { k: 1.0 };
            }
            let manifest = run_experiment(&cfg)?;
            let cal = manifest
                .calibration
                .expect("calibrate policy always records an outcome");
            println!("{}", serde_json::to_string_pretty(&cal)?);
            Ok(())
        }
        Command::Run(args) => {
            let cfg = load_config(&args)?;
            let manifest = run_experiment(&cfg)?;
            for (name, sha) in emit_reports(std::path::Path::new(&cfg.out_dir))? {
                println!("wrote {name} {sha}");
            }
            println!(
                "run complete: lambda = {}, {} artifacts in {}",
                manifest.lambda,
                manifest.artifacts.len(),
                cfg.out_dir
            );
            Ok(())
        }
        Command::Report { out } => {
            for (name, sha) in emit_reports(&out)? {
                println!("wrote {name} {sha}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
