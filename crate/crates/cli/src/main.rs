use std::path::PathBuf;
use std::process::ExitCode;

use chaotrans_cli::config::{self, ExperimentConfig};
use chaotrans_cli::output::OutputDir;
use chaotrans_cli::run::{self, Experiment};
use chaotrans_cli::CliError;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chaotrans", version, about = "Chaotic atomic transport experiments in an optical lattice")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON config file, or a manifest from an earlier run to replay.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "CHAOTRANS_OUT_DIR", default_value = "out")]
    out: PathBuf,

    /// Master seed; defaults to the replayed manifest's seed, else 0.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "CHAOTRANS_WORKERS", default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Integrate one trajectory.
    Simulate,
    /// Maximum Lyapunov exponent over a (Δ, p₀) grid.
    LyapunovMap,
    /// Flight and trapping histograms from full trajectories.
    Pdf,
    /// Flight and trapping histograms from the stochastic map.
    MapPdf,
    /// Analytic flight and trapping curves.
    AnalyticPdf,
    /// Exit-time scan over detuning with refinement.
    FractalScan,
    /// Print energies, jump sizes, regime and warnings for a config.
    Validate,
}

fn execute(cli: &Cli) -> Result<serde_json::Value, CliError> {
    let (cfg, manifest_seed) = match &cli.config {
        Some(p) => {
            let l = config::load(p)?;
            (l.config, l.seed)
        }
        None => (ExperimentConfig::default(), None),
    };
    let seed = cli.seed.or(manifest_seed).unwrap_or(0);
    let exp = match cli.command {
        Command::Simulate => Experiment::Simulate,
        Command::LyapunovMap => Experiment::LyapunovMap,
        Command::Pdf => Experiment::Pdf,
        Command::MapPdf => Experiment::MapPdf,
        Command::AnalyticPdf => Experiment::AnalyticPdf,
        Command::FractalScan => Experiment::FractalScan,
        Command::Validate => return Ok(run::validate(&cfg)),
    };
    let mut out = OutputDir::create(&cli.out)?;
    chaotrans::par::with_workers(cli.workers, || run::run(exp, &cfg, seed, &mut out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
