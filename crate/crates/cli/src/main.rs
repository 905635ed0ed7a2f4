//! `geocache`: solve, evaluate, sweep and simulate cache placement scenarios.

mod commands;
mod error;
mod output;
mod scenario;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{CliError, Result};
use crate::output::Rendered;
use crate::scenario::{Scenario, SimulationSpec};

#[derive(Debug, Parser)]
#[command(
    name = "geocache",
    version,
    about = "Optimal randomized cache placement for Poisson cellular networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimal placement, its hit probability and the most-popular baseline.
    Solve(CommonArgs),
    /// Coverage-number pmf of the scenario's network model.
    Coverage(CommonArgs),
    /// Optimal vs. baseline hit probability over a threshold or coverage-ratio grid.
    Sweep(CommonArgs),
    /// Monte Carlo hit rate and coverage pmf next to the analytic values.
    Simulate(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Scenario file (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Write here instead of standard output.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Overrides the simulation seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Overrides the dual-bisection tolerance.
    #[arg(long, value_name = "X")]
    tolerance: Option<f64>,
}

fn emit(rendered: &Rendered, args: &CommonArgs) -> Result<()> {
    let mut sink: Box<dyn Write> = match &args.output {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    match args.format {
        Format::Csv => rendered.table.write_csv(&mut sink)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut sink, &rendered.json)?;
            writeln!(sink)?;
        }
    }
    sink.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let (args, action): (&CommonArgs, fn(&Scenario) -> Result<Rendered>) = match &cli.command {
        Command::Solve(a) => (a, commands::solve),
        Command::Coverage(a) => (a, commands::coverage),
        Command::Sweep(a) => (a, commands::sweep),
        Command::Simulate(a) => (a, commands::simulate),
    };
    let mut scenario = Scenario::load(&args.config)?;
    if let Some(t) = args.tolerance {
        if !(t.is_finite() && t > 0.0) {
            return Err(CliError::Usage(format!(
                "--tolerance must be positive, got {t}"
            )));
        }
        scenario.tolerances.dual = t;
    }
    if let Some(seed) = args.seed {
        scenario
            .simulation
            .get_or_insert_with(SimulationSpec::default)
            .seed = seed;
    }
    let mut rendered = action(&scenario)?;
    // Echo the effective scenario so the run can be repeated from the output.
    if let serde_json::Value::Object(map) = &mut rendered.json {
        map.insert("scenario".into(), serde_json::to_value(&scenario)?);
    }
    emit(&rendered, args)
}

fn fail(err: &CliError) -> ExitCode {
    let object = serde_json::json!({ "error": err.report() });
    eprintln!("{object}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::Usage(e.to_string().trim_end().to_string())),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // the reader went away (e.g. `| head`)
        Err(e) if e.is_broken_pipe() => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
