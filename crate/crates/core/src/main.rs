use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use chemotaxsim::driver::{execute_path, ExecOptions, EXIT_OK};

/// Finite-volume simulator and estimate auditor for chemotaxis-consumption
/// systems with nonlinear diffusion.
#[derive(Parser, Debug)]
#[command(name = "chemotaxsim", version)]
struct Cli {
    /// Configuration file (flat `section.key = value` lines).
    config: PathBuf,
    /// Validate and print the run plan without running or writing anything.
    #[arg(long)]
    dry_run: bool,
    /// Maximum number of concurrent runs in sweep and ladder modes.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: u32,
    /// Output directory, overriding `output.directory`.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = ExecOptions {
        dry_run: cli.dry_run,
        jobs: cli.jobs as usize,
        output: cli.output,
    };
    let outcome = execute_path(&cli.config, &opts);
    if outcome.code == EXIT_OK {
        print!("{}", outcome.message);
    } else {
        eprintln!("{}", outcome.message.trim_end());
    }
    ExitCode::from(outcome.code as u8)
}
