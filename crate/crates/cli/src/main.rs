use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

/// Communication-efficient federated learning experiments.
#[derive(Parser, Debug)]
#[command(name = "fedcomp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a federated training experiment and emit per-round metrics.
    Run(ConfigArgs),
    /// Train per the config, then sweep codec settings over the final model.
    Compare(ConfigArgs),
    /// Print size and compute savings without training.
    Report(ConfigArgs),
    /// Print the effective config with all defaults and overrides applied.
    Config(ConfigArgs),
    /// Check or rewrite the codec wire-format fixtures.
    Golden {
        /// Directory holding the fixtures.
        #[arg(long, default_value = "crates/core/tests/golden")]
        dir: PathBuf,
        /// Overwrite the fixtures instead of checking them.
        #[arg(long)]
        regenerate: bool,
    },
}

#[derive(clap::Args, Debug)]
struct ConfigArgs {
    /// Path to a key=value config file.
    config: PathBuf,
    /// Overrides of the form --key=value.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(commands::EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(a) => commands::run(&a.config, &a.overrides),
        Command::Compare(a) => commands::compare(&a.config, &a.overrides),
        Command::Report(a) => commands::report(&a.config, &a.overrides),
        Command::Config(a) => commands::show_config(&a.config, &a.overrides),
        Command::Golden { dir, regenerate } => commands::golden(&dir, regenerate),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
