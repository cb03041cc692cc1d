use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use bagchain_sim::{emit, run, Scenario, SimError, Stepping};

#[derive(Parser)]
#[command(name = "bagchain", version, about = "Discrete-round BagChain simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSV outputs.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        cfs: Option<Switch>,
        /// `key=v1,v2,…`; one run per value, each in `<out>/<key>=<value>`.
        #[arg(long)]
        sweep: Option<String>,
        /// Step miners on all cores. Output is identical to serial stepping.
        #[arg(long)]
        parallel: bool,
    },
}

fn run_one(sc: &Scenario, out: &Path, stepping: Stepping) -> Result<(), SimError> {
    match run(sc, stepping) {
        Ok((_, report)) => {
            emit::write_report(&report, out)?;
            print!("{}", emit::summary_text(&report));
            Ok(())
        }
        Err(SimError::Timeout { rounds, partial }) => {
            emit::write_report(&partial, out)?;
            Err(SimError::Timeout { rounds, partial })
        }
        Err(e) => Err(e),
    }
}

fn execute(cli: Cli) -> Result<(), SimError> {
    let Command::Run {
        scenario,
        seed,
        out,
        cfs,
        sweep,
        parallel,
    } = cli.command;
    let mut sc = Scenario::load(&scenario)?;
    if let Some(seed) = seed {
        sc.seed = seed;
    }
    if let Some(cfs) = cfs {
        sc.cfs = matches!(cfs, Switch::On);
    }
    let stepping = if parallel { Stepping::Parallel } else { Stepping::Serial };
    let Some(sweep) = sweep else {
        return run_one(&sc, &out, stepping);
    };
    let (key, values) = sweep
        .split_once('=')
        .ok_or_else(|| SimError::Scenario(format!("sweep must be key=v1,v2,…: `{sweep}`")))?;
    for value in values.split(',').map(str::trim).filter(|v| !v.is_empty()) {
        let mut point = sc.clone();
        point.set(key.trim(), value)?;
        println!("== {key}={value}");
        run_one(&point, &out.join(format!("{}={value}", key.trim())), stepping)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} message={:?}", e.kind(), e.to_string());
            ExitCode::FAILURE
        }
    }
}
