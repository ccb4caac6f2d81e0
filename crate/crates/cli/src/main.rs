use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use landau_cli::config::load_config;
use landau_cli::output::write_outputs;
use landau_cli::pipeline::{run, Subcommand};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    /// Run the solver and write the time series.
    Simulate,
    /// Write the coercivity certificate.
    Coercivity,
    /// Run the solver and every check valid for gamma.
    Verify,
    /// Run the inequality bench.
    Bench,
}

/// Landau equation solver and estimate checks.
#[derive(Debug, Parser)]
#[command(name = "landau", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML configuration with flat dotted keys.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory; overrides output.dir.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let sub = match cli.command {
        Command::Simulate => Subcommand::Simulate,
        Command::Coercivity => Subcommand::Coercivity,
        Command::Verify => Subcommand::Verify,
        Command::Bench => Subcommand::Bench,
    };
    let result = load_config(&cli.config).map_err(anyhow::Error::from).and_then(|config| {
        let outcome = run(&config, sub)?;
        let dir = cli.out.clone().unwrap_or_else(|| config.output.dir.clone());
        for path in write_outputs(&outcome, &dir, &config.output.csv, &config.output.json)? {
            eprintln!("wrote {}", path.display());
        }
        for check in &outcome.report.checks {
            eprintln!("{:<13} {:?}", check.name, check.verdict);
        }
        Ok(outcome.report.exit_code)
    });
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
