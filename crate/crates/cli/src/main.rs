//! `metacomm`: command-line front end for the metacommunity laboratory.
//!
//! Exit codes: 0 success, 1 usage, configuration or solver error, 2 a
//! theorem-level check failed (artifacts are still written).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use commands::{CliError, Outcome};
use config::{Command, Settings};

#[derive(Parser)]
#[command(name = "metacomm", version, about = "Two-patch neutral metacommunity: chain, Monte Carlo and PDE")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct RunArgs {
    /// JSON file with any of the settings below; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand)]
enum Sub {
    /// Monte Carlo estimate of the extinction time.
    Simulate(RunArgs),
    /// Exact expected extinction times over the whole chain grid.
    ExactHitting(RunArgs),
    /// Elliptic extinction time of the diffusion limit.
    PdeElliptic(RunArgs),
    /// Implicit-Euler solution of the limiting backward equation.
    PdeParabolic(RunArgs),
    /// Nodewise check of a closed-form lower bound against the elliptic solution.
    Compare(RunArgs),
    /// Convergence or small-distortion study.
    Sweep(RunArgs),
    /// Quick battery of invariant checks at one parameter point.
    Validate(RunArgs),
}

impl Sub {
    fn split(self) -> (Command, RunArgs) {
        match self {
            Self::Simulate(a) => (Command::Simulate, a),
            Self::ExactHitting(a) => (Command::ExactHitting, a),
            Self::PdeElliptic(a) => (Command::PdeElliptic, a),
            Self::PdeParabolic(a) => (Command::PdeParabolic, a),
            Self::Compare(a) => (Command::Compare, a),
            Self::Sweep(a) => (Command::Sweep, a),
            Self::Validate(a) => (Command::Validate, a),
        }
    }
}

fn resolve(cmd: Command, args: RunArgs) -> Result<Settings, CliError> {
    let base = match &args.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    if let Some(c) = base.command {
        if c != cmd {
            return Err(CliError::Usage(format!("config file is for `{}`, not `{}`", c.name(), cmd.name())));
        }
    }
    let mut settings = base.overlay(&args.settings);
    settings.command = Some(cmd);
    settings.resolve_output_dir();
    Ok(settings)
}

fn write_outputs(settings: &Settings, outcome: &Outcome) -> Result<Vec<String>, CliError> {
    let dir = settings.output_dir.clone().expect("resolved before dispatch");
    let mut written = Vec::new();
    for a in &outcome.artifacts {
        let path = dir.join(&a.name);
        metacomm_core::io::write_atomic(&path, |w| w.write_all(&a.bytes))?;
        written.push(path.display().to_string());
    }
    Ok(written)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (cmd, args) = cli.command.split();
    let result = resolve(cmd, args).and_then(|mut settings| {
        let outcome = commands::run(cmd, &mut settings)?;
        let written = write_outputs(&settings, &outcome)?;
        Ok((outcome, written))
    });
    match result {
        Ok((outcome, written)) => {
            let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            let line = json!({
                "command": cmd.name(),
                "status": if outcome.passed { "ok" } else { "check_failed" },
                "outputs": written,
                "summary": outcome.summary,
                "timestamp": timestamp,
            });
            println!("{line}");
            ExitCode::from(if outcome.passed { 0 } else { 2 })
        }
        Err(e) => {
            eprintln!("metacomm {}: {e}", cmd.name());
            ExitCode::from(1)
        }
    }
}
