use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use schwarz_lab::cli::{print_summary, run_experiment, ExperimentConfig, Overrides, EXIT_ERROR, EXIT_OK};

#[derive(Parser)]
#[command(name = "schwarz-lab", version, about = "Schwarz preconditioner experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Flags {
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dense_cap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            output: self.out.clone(),
            dense_cap: self.dense_cap,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and write the reports.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Print the table of a finished run.
    Summary { manifest: PathBuf },
    /// Validate a configuration without running it.
    Check {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, flags } => ExperimentConfig::load(&config, &flags.overrides()).and_then(|c| {
            let manifest = run_experiment(&c)?;
            print!("{}", print_summary(&c.output.join("manifest.json"))?);
            if manifest.failed_bounds > 0 {
                eprintln!("{} asserted bound(s) failed, see bounds.csv", manifest.failed_bounds);
            }
            Ok(manifest.exit_code())
        }),
        Command::Summary { manifest } => print_summary(&manifest).map(|t| {
            print!("{t}");
            EXIT_OK
        }),
        Command::Check { config, flags } => ExperimentConfig::load(&config, &flags.overrides()).map(|c| {
            println!("ok: {} with {} method(s)", c.key(), c.method_kinds().map_or(0, |k| k.len()));
            EXIT_OK
        }),
    };
    match result {
        Ok(code) => exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            exit(EXIT_ERROR)
        }
    }
}
