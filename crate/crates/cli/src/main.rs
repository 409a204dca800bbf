//! `otc` - integrate, solve, simulate and verify OTC market models from a
//! TOML config.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use otc_core::io::{self, CommandError, CommandOutput, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "otc", version, about = "Multi-asset OTC market models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the mean-field equations and write the trajectory.
    Integrate(Common),
    /// Compute the steady state.
    Steady(Common),
    /// Run the finite-population simulation.
    Simulate(Common),
    /// Run the cross-method checks; exits 1 if any fails.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output path prefix; files are named `<prefix>_<artifact>.csv`.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Target box volume for subdivision.
    #[arg(long)]
    eps: Option<f64>,
    /// Face grid points per axis.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

fn run(
    common: &Common,
    f: fn(&RunConfig) -> Result<CommandOutput, CommandError>,
) -> Result<CommandOutput, CommandError> {
    let mut cfg = RunConfig::load(&common.config)?;
    cfg.apply(&Overrides {
        seed: common.seed,
        tol: common.tol,
        eps: common.eps,
        grid: common.grid,
        prefix: common.out.clone(),
    });
    f(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, f): (&Common, fn(&RunConfig) -> _) = match &cli.command {
        Command::Integrate(c) => (c, io::run_integrate),
        Command::Steady(c) => (c, io::run_steady),
        Command::Simulate(c) => (c, io::run_simulate),
        Command::Verify(c) => (c, io::run_verify),
    };
    match run(common, f) {
        Ok(out) => {
            if !common.quiet {
                for (k, v) in &out.summary.entries {
                    println!("{k} = {v}");
                }
                for path in &out.files {
                    println!("wrote {}", path.display());
                }
            }
            if out.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("failed checks: {}", out.failures.join(", "));
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
