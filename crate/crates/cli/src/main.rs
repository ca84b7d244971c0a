use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use polmem_cli::{
    cmd_qpt, cmd_spectrum, cmd_storage, cmd_sweep, write_files, CliError, GlobalFlags, Report, RunConfig,
    DEFAULT_POINTS, DEFAULT_SPAN_HZ,
};

/// Simulate and reconstruct a dual-rail EIT polarization-qubit memory.
#[derive(Debug, Parser)]
#[command(name = "polmem", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[output].directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// PRNG seed; overrides `[counting].seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use exact expected counts instead of Poisson samples.
    #[arg(long, global = true)]
    exact: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Probe transmission spectrum and transparency FWHM.
    Spectrum {
        /// Half-width of the two-photon detuning grid (Hz).
        #[arg(long, default_value_t = DEFAULT_SPAN_HZ)]
        span_hz: f64,
        #[arg(long, default_value_t = DEFAULT_POINTS)]
        points: usize,
    },
    /// Storage and retrieval intensity trace.
    Storage,
    /// Tomography dataset and reconstructed χ at one storage time.
    Qpt {
        /// Storage time (s).
        #[arg(long)]
        time: f64,
    },
    /// Process fidelity and retrieval efficiency over `[sweep].times`.
    Sweep,
}

fn run(cli: &Cli) -> Result<Report, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = RunConfig::load(path)?;
    let flags = GlobalFlags { out: cli.out.clone(), seed: cli.seed, exact: cli.exact };
    let dir = cfg.output_directory(flags.out.as_deref())?;
    let result = match &cli.command {
        Command::Spectrum { span_hz, points } => cmd_spectrum(&cfg, *span_hz, *points),
        Command::Storage => cmd_storage(&cfg),
        Command::Qpt { time } => cmd_qpt(&cfg, &flags, *time),
        Command::Sweep => cmd_sweep(&cfg, &flags),
    };
    match result {
        Ok(report) => {
            write_files(&dir, &report.files)?;
            Ok(report)
        }
        Err(CliError::NonConvergence(nc, files)) => {
            write_files(&dir, &files)?;
            Err(CliError::NonConvergence(nc, files))
        }
        Err(e) => Err(e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            for line in report.summary {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("polmem: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
