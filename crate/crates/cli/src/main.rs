use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use failcast_core::commands::{self, Overrides};
use failcast_core::fusion::CaseId;
use failcast_core::{Error, ErrorClass};

#[derive(Parser)]
#[command(name = "failcast", version, about = "Failure-rate forecasting and warranty analytics for fleets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a fleet and write its event log and ground truth.
    Simulate(Common),
    /// Fit every configured case on the event log.
    Fit(Common),
    /// Expected failures over the forecast window from the fit report.
    Forecast(Common),
    /// Cost-optimal warranty periods from the fit report.
    Warranty(Common),
    /// Summary document and cost-curve data from the three reports.
    Report(Common),
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_parser = parse_case)]
    case: Option<CaseId>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_case(s: &str) -> Result<CaseId, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}

fn init_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("FAILCAST_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("FAILCAST_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn run(command: Command) -> Result<(), Error> {
    init_threads()?;
    let c = match &command {
        Command::Simulate(c) | Command::Fit(c) | Command::Forecast(c) | Command::Warranty(c) | Command::Report(c) => c,
    };
    let overrides = Overrides { case: c.case, out: c.out.clone(), seed: c.seed };
    let cfg = commands::resolve_config(&c.config, &overrides)?;
    match command {
        Command::Simulate(_) => {
            for f in commands::cmd_simulate(&cfg)? {
                println!("wrote {}", f.display());
            }
        }
        Command::Fit(_) => {
            let outcome = commands::cmd_fit(&cfg)?;
            for row in outcome.rows.iter().filter(|r| r.error.is_some()) {
                let dtc = row.dtc.map_or("all".to_string(), |d| d.to_string());
                eprintln!("warning: {} part {} dtc {}: {}", row.case, row.part, dtc, row.error.as_deref().unwrap_or(""));
            }
            println!("fitted {} part-level results, {} failed jobs", outcome.part_fits.len(), outcome.n_errors);
        }
        Command::Forecast(_) => {
            let rows = commands::cmd_forecast(&cfg)?;
            println!("forecast {} (case, part) rows", rows.len());
        }
        Command::Warranty(_) => {
            let rows = commands::cmd_warranty(&cfg)?;
            for r in rows.iter().filter(|r| !r.converged) {
                eprintln!("warning: {} part {}: descent hit the iteration limit", r.case, r.part);
            }
            println!("optimized {} (case, part) warranty periods", rows.len());
        }
        Command::Report(_) => {
            let path = commands::cmd_report(&cfg)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
