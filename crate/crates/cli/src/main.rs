mod commands;
mod failure;
mod manifest;
mod summary;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ccsqz_core::{ModelKind, Weighting};

/// Simulate, reduce, fit and budget squeezed-light noise spectra.
///
/// Exit codes: 0 ok, 2 configuration, 3 data, 4 fit, 5 budget.
#[derive(Parser, Debug)]
#[command(name = "ccsqz", version, about)]
struct Cli {
    /// Directory for every file a command writes.
    #[arg(long, global = true, env = "SQZ_OUT_DIR", default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic measurement campaign from a TOML description.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Average the noisiest and quietest spectra into a trace pair.
    Reduce {
        /// An `ensemble.manifest`, or signal spectrum files together with --dark and --shot.
        inputs: Vec<PathBuf>,
        #[arg(long)]
        dark: Option<PathBuf>,
        #[arg(long)]
        shot: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        n_select: usize,
    },
    /// Fit a noise model to a trace pair.
    Fit {
        traces: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        model: ModelKind,
        /// Fix a parameter, e.g. `--pin chi=704e3`. Frequencies in Hz, angles in rad.
        #[arg(long, value_name = "PARAM=VALUE")]
        pin: Vec<String>,
        #[arg(long, value_parser = parse_weighting)]
        weighting: Option<Weighting>,
        /// Fit settings (TOML): fixed, bounds, weighting, selection, init.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate an efficiency and loss budget.
    Budget {
        #[arg(long)]
        config: PathBuf,
    },
    /// Best achievable squeezing for a budget.
    Forecast {
        #[arg(long)]
        config: PathBuf,
        /// Readout phase error in rad; overrides `delta_phi` in the budget.
        #[arg(long)]
        delta_phi: Option<f64>,
    },
    /// Summarise a fit result.
    Report { fit: PathBuf },
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: ccsqz_core::Error| e.to_string())
}

fn parse_weighting(s: &str) -> Result<Weighting, String> {
    s.parse().map_err(|e: ccsqz_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, seed } => commands::simulate(&cli.out, &config, seed),
        Command::Reduce { inputs, dark, shot, n_select } => {
            commands::reduce(&cli.out, &inputs, dark.as_deref(), shot.as_deref(), n_select)
        }
        Command::Fit { traces, model, pin, weighting, config } => {
            commands::fit(&cli.out, &traces, model, &pin, weighting, config.as_deref())
        }
        Command::Budget { config } => commands::budget(&cli.out, &config),
        Command::Forecast { config, delta_phi } => commands::forecast(&cli.out, &config, delta_phi),
        Command::Report { fit } => commands::report(&cli.out, &fit),
    };
    match result {
        Ok(()) => ExitCode::from(failure::code::OK),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
