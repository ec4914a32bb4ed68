use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;
use rydres_cli::{run, CliError, Command, RunConfig, RunRequest};

#[derive(Parser, Debug)]
#[command(name = "rydres", version, about = "Simulate and fit cavity-enhanced two-photon Rydberg spectroscopy")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML run configuration (frequencies in Hz, times in s).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Input dataset for the fit commands.
    #[arg(long, global = true)]
    data: Option<PathBuf>,

    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Noise seed; overrides `synth.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: one per core).
    #[arg(long, global = true, env = "RYDRES_THREADS")]
    threads: Option<usize>,

    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Population versus pulse length for a single cavity-filtered pulse.
    SimulateRabi,
    /// Two-pulse Ramsey spectrum versus carrier frequency.
    SimulateRamsey,
    /// Fit the damped Rabi formula to a duration scan.
    FitRabi,
    /// Fit resonance, Q and coupling to a Ramsey spectrum.
    FitRamsey,
    /// Steady-state power response and a driven field trace.
    ResonatorResponse,
    /// Noisy synthetic Ramsey or Rabi data.
    Synth,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::SimulateRabi => Command::SimulateRabi,
            Cmd::SimulateRamsey => Command::SimulateRamsey,
            Cmd::FitRabi => Command::FitRabi,
            Cmd::FitRamsey => Command::FitRamsey,
            Cmd::ResonatorResponse => Command::ResonatorResponse,
            Cmd::Synth => Command::Synth,
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let config = RunConfig::load(path)?;
    let report = run(&RunRequest {
        command: cli.command.into(),
        config: &config,
        data: cli.data.as_deref(),
        out_dir: cli.out.as_deref(),
        seed: cli.seed,
    })?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    println!("{}", report.out_dir.display());
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(code) => {
            if code != 0 {
                error!("fit did not converge; outputs written");
            }
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
