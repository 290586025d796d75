use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use accelpd_core::harness::acceptance::{self, Level};
use accelpd_core::harness::{self, suite};
use accelpd_core::Error;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "accelpd", version, about = "Accelerated primal-dual solvers with certified traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config; prints the summary as JSON.
    Solve { config: PathBuf },
    /// Run a suite of configs; prints the comparison table as CSV.
    Bench { suite: PathBuf },
    /// Run the acceptance checks.
    Verify {
        #[arg(long, value_enum, default_value_t = VerifyLevel::Fast)]
        level: VerifyLevel,
    },
    /// Fit rates to a trace CSV.
    Rates {
        trace: PathBuf,
        /// Number of trailing records to fit (default: all).
        #[arg(long)]
        window: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifyLevel {
    Fast,
    Full,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_VERIFICATION: u8 = 2;
const EXIT_IO: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Verification { .. } => EXIT_VERIFICATION,
        Error::Io(_) => EXIT_IO,
        Error::Json(e) if e.is_io() => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn run(command: Command) -> Result<u8, Error> {
    let mut out = io::stdout().lock();
    match command {
        Command::Solve { config } => {
            let (_, summary) = harness::execute_file(&config)?;
            serde_json::to_writer_pretty(&mut out, &summary)?;
            writeln!(out)?;
        }
        Command::Bench { suite: path } => {
            let outcomes = suite::run_suite_file(&path)?;
            suite::write_table(&mut out, &outcomes)?;
        }
        Command::Verify { level } => {
            // fail on a bad thread cap before spending time on the suite
            harness::thread_cap()?;
            let level = match level {
                VerifyLevel::Fast => Level::Fast,
                VerifyLevel::Full => Level::Full,
            };
            let report = acceptance::run_all(level);
            for c in &report {
                writeln!(out, "{c}")?;
            }
            let failed = report.iter().filter(|c| !c.passed).count();
            writeln!(out, "{} of {} criteria passed", report.len() - failed, report.len())?;
            if failed > 0 {
                return Ok(EXIT_VERIFICATION);
            }
        }
        Command::Rates { trace, window } => {
            let fit = harness::rates_from_csv(&trace, window)?;
            serde_json::to_writer_pretty(&mut out, &fit)?;
            writeln!(out)?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("accelpd: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
