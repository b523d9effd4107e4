mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use stoplab_core::distributions::BUILTIN_JSON;

use commands::{
    CalibrateArgs, ClassicalArgs, CompareArgs, CriticalArgs, CurvesArgs, FitArgs, SimulateArgs,
};

/// Repeated secretary problem: optimal thresholds, agent simulation and
/// Bayesian comparison of stopping policies.
#[derive(Parser)]
#[command(name = "stoplab")]
struct Cli {
    /// Read the subcommand and its flags from a JSON file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Critical percentiles z_t and win probabilities p_t(0) with t boxes left.
    SolveCritical(CriticalArgs),
    /// Optimal cutoff and win probability of the rank-only secretary problem.
    SolveClassical(ClassicalArgs),
    /// Recalibrate the low/high value distributions.
    CalibrateDist(CalibrateArgs),
    /// Simulate a cohort of agents playing repeated games.
    Simulate(SimulateArgs),
    /// Posterior sample of one policy model given a decision log.
    Fit(FitArgs),
    /// Cross-validated evidence of several policy models.
    Compare(CompareArgs),
    /// Stopping curves and learning curves from logs.
    Curves(CurvesArgs),
}

/// Failure classes, each with its own exit code.
enum Failure {
    Usage(String),
    Config(String),
    Core(stoplab_core::Error),
}

impl Failure {
    fn kind(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Config(_) => "config",
            Failure::Core(e) => e.kind(),
        }
    }

    fn code(&self) -> u8 {
        match self.kind() {
            "usage" => 2,
            "config" => 3,
            "invalid_argument" => 4,
            "invalid_spec" => 5,
            "calibration_failure" => 6,
            "contract_violation" => 7,
            "empty_dataset" => 8,
            "malformed_record" => 9,
            "initialization" => 10,
            "schema" => 11,
            "io" => 12,
            "csv" => 13,
            "json" => 14,
            _ => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) | Failure::Config(m) => m.clone(),
            Failure::Core(e) => e.to_string(),
        }
    }
}

impl From<stoplab_core::Error> for Failure {
    fn from(e: stoplab_core::Error) -> Self {
        Failure::Core(e)
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    exit_code: u8,
}

fn fingerprint() -> String {
    Sha256::digest(BUILTIN_JSON.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn version() -> &'static str {
    static VERSION: std::sync::OnceLock<String> = std::sync::OnceLock::new();
    VERSION.get_or_init(|| {
        format!(
            "{} (distributions sha256:{})",
            env!("CARGO_PKG_VERSION"),
            fingerprint()
        )
    })
}

fn parse<I: IntoIterator<Item = String>>(args: I) -> Result<Result<Cli, clap::Error>, clap::Error> {
    let matches = Cli::command()
        .version(version())
        .try_get_matches_from(args)?;
    Ok(Cli::from_arg_matches(&matches))
}

fn run() -> Result<(), Failure> {
    let cli = match parse(std::env::args()) {
        Ok(Ok(cli)) => cli,
        Ok(Err(e)) | Err(e) => return Err(clap_failure(e, Failure::Usage)),
    };
    let command = match (cli.config, cli.command) {
        (Some(_), Some(_)) => {
            return Err(Failure::Usage(
                "--config cannot be combined with a subcommand".into(),
            ))
        }
        (Some(path), None) => {
            let text = commands::read_text(&path)?;
            let args = config::config_to_args(&text).map_err(Failure::Config)?;
            let cli = match parse(args) {
                Ok(Ok(cli)) => cli,
                Ok(Err(e)) | Err(e) => return Err(clap_failure(e, Failure::Config)),
            };
            cli.command
                .ok_or_else(|| Failure::Config("config names no subcommand".into()))?
        }
        (None, Some(command)) => command,
        (None, None) => {
            return Err(Failure::Usage(
                "no subcommand given; see `stoplab --help`".into(),
            ))
        }
    };
    match command {
        Command::SolveCritical(a) => commands::solve_critical(a)?,
        Command::SolveClassical(a) => commands::solve_classical(a)?,
        Command::CalibrateDist(a) => commands::calibrate(a)?,
        Command::Simulate(a) => commands::simulate(a)?,
        Command::Fit(a) => commands::fit(a)?,
        Command::Compare(a) => commands::compare(a)?,
        Command::Curves(a) => commands::curves(a)?,
    }
    Ok(())
}

/// Help and version requests are printed and exit 0; everything else becomes
/// a failure of class `wrap`.
fn clap_failure(e: clap::Error, wrap: fn(String) -> Failure) -> Failure {
    use clap::error::ErrorKind;
    if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
        let _ = e.print();
        std::process::exit(0);
    }
    wrap(e.render().to_string().trim_end().to_string())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let report = ErrorReport {
                error: f.kind(),
                message: f.message(),
                exit_code: f.code(),
            };
            eprintln!(
                "{}",
                serde_json::to_string(&report).expect("error report serializes")
            );
            ExitCode::from(f.code())
        }
    }
}
