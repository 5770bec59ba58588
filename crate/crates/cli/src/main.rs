use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rabi_otto_cli::{execute, Command, RunConfig};

/// Quantum Otto cycles with an anisotropic Rabi-Stark working medium.
#[derive(Parser, Debug)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// configuration file (sectioned key = value)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory, created if absent
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// worker threads (default: $RABI_OTTO_WORKERS, then all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// overwrite existing output files
    #[arg(long, global = true)]
    force: bool,
    /// override a configuration value, e.g. --set system.lambda1=0.5
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Sub {
    /// low-lying levels along the [sweep] axes
    Spectrum,
    /// ideal cycle at one parameter point
    IdealCycle,
    /// ideal cycle over the [sweep] grid
    PhaseDiagram,
    /// finite-time limit cycle at one point or over the [sweep] grid
    FiniteCycle,
    /// cycle-by-cycle approach to the limit cycle
    LimitCycle,
    /// uncertainty-relation bound over [tur] sigma
    Tur,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Spectrum => Command::Spectrum,
            Sub::IdealCycle => Command::IdealCycle,
            Sub::PhaseDiagram => Command::PhaseDiagram,
            Sub::FiniteCycle => Command::FiniteCycle,
            Sub::LimitCycle => Command::LimitCycle,
            Sub::Tur => Command::Tur,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let rc = RunConfig {
        command: cli.command.into(),
        config_path: cli.config,
        output_dir: cli.out,
        workers: cli.workers,
        overrides: cli.overrides,
        force: cli.force,
    };
    match execute(&rc) {
        Ok(out) => {
            for line in &out.summary {
                println!("{line}");
            }
            println!("wrote {} and {}", out.csv.display(), out.meta.display());
            if out.failures > 0 {
                eprintln!("{} grid points failed; see the status column", out.failures);
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
