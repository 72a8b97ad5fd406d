//! `ipw`: command-line workbench for the ion-photon interface models.
//!
//! Every subcommand reads one TOML configuration, validates all of it, and
//! writes CSV files (optionally with gnuplot scripts) into the output
//! directory. Failures print a single `error: kind=...` line on stderr and
//! exit with 2 (validation) or 3 (runtime).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Runtime,
}

#[derive(Debug, Clone)]
pub struct CliError {
    pub kind: ErrorKind,
    pub field: Option<String>,
    pub message: String,
}

impl CliError {
    pub fn validation(field: Option<&str>, message: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Validation, field: field.map(str::to_string), message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Runtime, field: None, message: message.into() }
    }

    fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Validation => 2,
            ErrorKind::Runtime => 3,
        }
    }

    fn line(&self) -> String {
        let kind = match self.kind {
            ErrorKind::Validation => "validation",
            ErrorKind::Runtime => "runtime",
        };
        let field = self.field.as_deref().map(|f| format!(" field={f}")).unwrap_or_default();
        format!("error: kind={kind}{field} message={:?}", self.message)
    }
}

#[derive(Debug, Parser)]
#[command(name = "ipw", version, about = "Ion-photon interface workbench")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed, overriding `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write gnuplot scripts.
    #[arg(long, global = true)]
    plots: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Double-excitation error versus pulse duration.
    Bloch,
    /// Polarization-mixing error versus collected solid angle.
    Aperture,
    /// g²(0) from a simulated or recorded click stream.
    G2 {
        #[command(subcommand)]
        mode: G2Mode,
    },
    /// Ion-photon fringes and fidelities for full, circular-stop and slit-stop apertures.
    Entangle,
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Debug, Subcommand)]
enum G2Mode {
    /// Simulate a click stream, save it, and analyze it.
    Simulate,
    /// Analyze a binary or CSV click stream.
    Analyze { input: PathBuf },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = cli.out {
        config.out_dir = out;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.plots |= cli.plots;
    config.validate()?;
    match cli.command {
        Command::Bloch => commands::bloch(&config),
        Command::Aperture => commands::aperture(&config),
        Command::G2 { mode: G2Mode::Simulate } => commands::g2_simulate(&config),
        Command::G2 { mode: G2Mode::Analyze { input } } => commands::g2_analyze(&config, &input),
        Command::Entangle => commands::entangle(&config),
        Command::Config => {
            print!("{}", toml::to_string(&config).map_err(|e| CliError::runtime(e.to_string()))?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code())
        }
    }
}
