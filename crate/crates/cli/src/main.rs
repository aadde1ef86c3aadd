//! `rankhom <command> --scenario <path> --out <path> [--seed N] [--depth N]
//! [--steps N] [--fixed-report] [--csv <path>]`
//!
//! Exit status: 0 when every check passes, 1 when a check fails or the
//! operation errors, 2 when the scenario cannot be read or validated.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use rankhom::harness::{parse_scenario, run, Command, HarnessError, Report, RunOptions};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Stratify,
    Membership,
    Gap,
    Contract,
    Connect,
    Truncate,
    Probe,
    Chern,
    VerifySuite,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Stratify => Command::Stratify,
            Cmd::Membership => Command::Membership,
            Cmd::Gap => Command::Gap,
            Cmd::Contract => Command::Contract,
            Cmd::Connect => Command::Connect,
            Cmd::Truncate => Command::Truncate,
            Cmd::Probe => Command::Probe,
            Cmd::Chern => Command::Chern,
            Cmd::VerifySuite => Command::VerifySuite,
        }
    }
}

/// Rank-window homotopies of PSD matrix fields, driven by scenario files.
///
/// Tolerance defaults can be overridden with RANKHOM_RANK_THRESHOLD,
/// RANKHOM_RESIDUAL_TOL and RANKHOM_MAX_SWEEPS; explicit scenario values
/// take precedence over both.
#[derive(Debug, Parser)]
#[command(name = "rankhom", version)]
struct Args {
    command: Cmd,
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Report JSON destination.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    depth: Option<usize>,
    /// Initial steps per path segment.
    #[arg(long)]
    steps: Option<usize>,
    /// Omit timing so that identical inputs give byte-identical reports.
    #[arg(long)]
    fixed_report: bool,
    /// Eigenvalue curves of the constructed path, as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn write(path: &Path, text: &str) -> Result<(), String> {
    fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn invalid(command: Command, out: &Path, err: HarnessError) -> ExitCode {
    let report = Report::invalid(command.as_str(), &err).to_json();
    eprint!("{report}");
    if let Err(e) = write(out, &report) {
        eprintln!("{e}");
    }
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command = Command::from(args.command);
    let text = match fs::read_to_string(&args.scenario) {
        Ok(t) => t,
        Err(e) => {
            let err = HarnessError::Validation(format!("cannot read {}: {e}", args.scenario.display()));
            return invalid(command, &args.out, err);
        }
    };
    let scenario = match parse_scenario(&text) {
        Ok(s) => s,
        Err(e) => return invalid(command, &args.out, e),
    };
    let opts = RunOptions {
        seed: args.seed,
        depth: args.depth,
        steps: args.steps,
        fixed_report: args.fixed_report,
    };
    let output = run(command, &scenario, &opts);
    let mut io_ok = write(&args.out, &output.report.to_json()).map_err(|e| eprintln!("{e}")).is_ok();
    if let Some(path) = &args.csv {
        match &output.csv {
            Some(csv) => io_ok &= write(path, csv).map_err(|e| eprintln!("{e}")).is_ok(),
            None => eprintln!("{} builds no path; no CSV written", command.as_str()),
        }
    }
    if let Some(err) = &output.report.error {
        eprintln!("{}: {}", err.kind, err.message);
    }
    for c in output.report.checks.iter().filter(|c| !c.pass) {
        eprintln!("check failed: {}", c.name);
    }
    if output.report.pass && io_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
