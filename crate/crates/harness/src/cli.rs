//! Command-line surface. Successful runs print one JSON line on stdout;
//! failures print one JSON object on stderr and exit nonzero.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::error::Result;
use crate::report::report;
use crate::run::{run, Experiment};
use crate::scenario::Scenario;
use crate::verify::verify;

#[derive(Debug, Parser)]
#[command(name = "fracwave", version, about = "Nonlocal wave simulation, DN-map synthesis and reconstruction")]
pub struct Cli {
    /// Worker threads for parallel solves; defaults to the available cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario file (flat `key = value`; see SCENARIO.md).
    #[arg(long)]
    pub scenario: PathBuf,

    /// Output root; runs land in `<out>/<hash16>/<command>/`.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    /// Overrides the scenario's `seed` before hashing.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Overrides the scenario's `noise.level` before hashing.
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Output root to summarize.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forward solve; writes the trajectory and energy and Picard logs.
    Simulate(RunArgs),
    /// DN-map columns for the passive input and a cosine basis on w1.
    Dnmap(RunArgs),
    /// Remainder decay of the amplitude linearization.
    Probe(RunArgs),
    /// Runge control sweep towards the configured target.
    Runge(RunArgs),
    /// Recovers f(x, 1) and the exponent from oracle data.
    RecoverNonlinearity(RunArgs),
    /// Recovers (u0, u1) from the passive measurement.
    RecoverInitial(RunArgs),
    /// Recovers a linear potential together with the initial data.
    RecoverPotential(RunArgs),
    /// Runs the full invariant suite.
    Verify(RunArgs),
    /// Collects all runs below an output root into CSV tables.
    Report(ReportArgs),
}

/// Loads the scenario and applies the flag overrides before hashing.
pub fn load(args: &RunArgs) -> Result<Scenario> {
    let mut scenario = Scenario::from_file(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.set("seed", &seed.to_string())?;
    }
    if let Some(noise) = args.noise {
        scenario.set("noise.level", &noise.to_string())?;
    }
    Ok(scenario)
}

fn run_with(experiment: Experiment, args: &RunArgs) -> Result<Value> {
    let scenario = load(args)?;
    let manifest = run(experiment, &scenario, &args.out)?;
    let dir = crate::run::run_dir(&args.out, &scenario, experiment.command());
    Ok(json!({
        "command": manifest.command,
        "scenario_hash": manifest.scenario_hash,
        "dir": dir,
        "summary": manifest.summary,
    }))
}

/// Executes a parsed command line.
pub fn execute(cli: &Cli) -> Result<Value> {
    if let Some(threads) = cli.threads {
        // a second initialization in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
    }
    match &cli.command {
        Command::Simulate(a) => run_with(Experiment::Simulate, a),
        Command::Dnmap(a) => run_with(Experiment::Dnmap, a),
        Command::Probe(a) => run_with(Experiment::Probe, a),
        Command::Runge(a) => run_with(Experiment::Runge, a),
        Command::RecoverNonlinearity(a) => run_with(Experiment::RecoverNonlinearity, a),
        Command::RecoverInitial(a) => run_with(Experiment::RecoverInitial, a),
        Command::RecoverPotential(a) => run_with(Experiment::RecoverPotential, a),
        Command::Verify(a) => {
            let scenario = load(a)?;
            let (dir, rows) = verify(&scenario, &a.out)?;
            Ok(json!({"command": "verify", "scenario_hash": scenario.hash(), "dir": dir, "checks": rows.len()}))
        }
        Command::Report(a) => {
            let (dir, rows) = report(&a.out)?;
            Ok(json!({"command": "report", "dir": dir, "rows": rows.len()}))
        }
    }
}

/// Full entry point over raw arguments; returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", json!({"error": "usage", "message": e.to_string()}));
            return 2;
        }
    };
    match execute(&cli) {
        Ok(value) => {
            println!("{value}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
