//! `gpx`: calibrate, forecast, evaluate and compare daily load density
//! forecasts, or simulate synthetic panels.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 numerical failure.
//! Errors are reported on stderr as one JSON object.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::ConfigError;

#[derive(Debug, Parser)]
#[command(
    name = "gpx",
    version,
    about = "Density forecasting of daily electricity consumption"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Calibrate a model on the in-sample range and write its artifacts.
    Calibrate(RunArgs),
    /// Forecast the out-of-sample range from a calibrated model.
    Forecast(RunArgs),
    /// Score a forecast CSV against realized consumption.
    Evaluate(RunArgs),
    /// Calibrate, forecast and evaluate GLM, ARX and GPX side by side.
    Compare(RunArgs),
    /// Draw a synthetic panel from the `[simulate]` section of the config.
    Simulate(RunArgs),
}

/// Flags shared by every command; each overrides the matching config key.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Daily panel CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// In-sample range, START:END.
    #[arg(long)]
    pub is_range: Option<String>,
    /// Out-of-sample range, START:END.
    #[arg(long)]
    pub os_range: Option<String>,
    /// Central CI levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// Model name: glm, arx or gpx.
    #[arg(long)]
    pub model: Option<String>,
    /// Bootstrap replicas for the GPX standard errors (0 skips the bootstrap).
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Model artifact JSON read by `forecast`.
    #[arg(long)]
    pub artifact: Option<PathBuf>,
    /// Forecast CSV read by `evaluate`.
    #[arg(long)]
    pub forecast: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] gpx_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(e) => e.kind(),
        }
    }

    fn path(&self) -> Option<String> {
        match self {
            CliError::Config(ConfigError::Read { path, .. } | ConfigError::Parse { path, .. }) => {
                Some(path.display().to_string())
            }
            CliError::Core(gpx_core::Error::Io { path, .. }) => Some(path.display().to_string()),
            _ => None,
        }
    }
}

#[derive(Serialize)]
struct ErrorReport {
    error: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<String>,
    exit_code: u8,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Forecast(a) => commands::forecast(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Compare(a) => commands::compare(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = ErrorReport {
                error: e.kind(),
                message: e.to_string(),
                path: e.path(),
                exit_code: e.exit_code(),
            };
            eprintln!(
                "{}",
                serde_json::to_string(&report)
                    .unwrap_or_else(|_| format!("{{\"message\":{:?}}}", report.message))
            );
            ExitCode::from(report.exit_code)
        }
    }
}
