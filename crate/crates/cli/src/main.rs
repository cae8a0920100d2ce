use std::process::ExitCode;

use clap::{Parser, Subcommand};
use csrg_cli::config::{resolve, resolve_compare, Flags};
use csrg_cli::{commands, exit_code, EXIT_OK, EXIT_USAGE};

/// Chance-constrained reference governor: set construction, simulation and studies.
#[derive(Parser)]
#[command(name = "csrg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Command {
    /// Build the admissible set and write `set.toml` and `build-report.txt`.
    BuildSet,
    /// Run one closed-loop simulation and write `trace.csv`.
    Simulate,
    /// Run independent lanes and write `montecarlo.toml` and `frequency.csv`.
    Montecarlo,
    /// Project the admissible set onto 2 or 3 coordinates and write `projection.csv`.
    Project,
    /// Tabulate the joint-mode comparison over output and constraint counts into `gamma.csv`.
    CompareJoint,
    /// Write the selected model as an editable model file.
    ExportModel,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let result = match cli.command {
        Command::CompareJoint => {
            resolve_compare(&cli.flags).and_then(|c| commands::compare_joint(&c))
        }
        cmd => resolve(&cli.flags).and_then(|run| match cmd {
            Command::BuildSet => commands::build_set(&run),
            Command::Simulate => commands::simulate(&run),
            Command::Montecarlo => commands::montecarlo(&run),
            Command::Project => commands::project(&run),
            Command::ExportModel => commands::export_model(&run),
            Command::CompareJoint => unreachable!("handled above"),
        }),
    };
    match result {
        Ok(written) => {
            for p in written.0 {
                println!("wrote {}", p.display());
            }
            ExitCode::from(EXIT_OK)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
