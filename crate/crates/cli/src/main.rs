//! Command-line driver: single runs, severity sweeps and log replay.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use occusafe::scenario::{
    fixtures, read_log, replay_check, run_scenario, sweep, write_csv, write_log, ReplaySettings, Scenario,
};

#[derive(Parser)]
#[command(name = "occusafe", version, about = "Occlusion-aware NMPC scenarios, sweeps and log replay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print its report.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Directory for run.jsonl, ticks.csv and report.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario over a grid of pedestrian speed caps and horizons.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// Pedestrian speed caps in m/s.
        #[arg(long, value_delimiter = ',', default_value = "0.5,1.0,1.5,2.0")]
        vped: Vec<f64>,
        /// Horizons in seconds.
        #[arg(long, value_delimiter = ',', default_value = "1.0,1.5,2.0,2.5")]
        horizon: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-verify observer and constraint invariants from a run log.
    Check {
        #[arg(long)]
        replay: PathBuf,
    },
    /// Write the built-in garage map, path and scenario files.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(path: &Path) -> Result<Scenario> {
    Scenario::load(path).with_context(|| format!("loading {}", path.display()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn run(scenario: &Path, out: Option<&Path>) -> Result<ExitCode> {
    let scenario = load(scenario)?;
    let output = run_scenario(&scenario)?;
    let report = serde_json::to_string_pretty(&output.report)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_log(create(dir, "run.jsonl")?, &output.header, &output.records)?;
        write_csv(create(dir, "ticks.csv")?, &output.records)?;
        fs::write(dir.join("report.json"), format!("{report}\n"))?;
    }
    println!("{report}");
    Ok(ExitCode::SUCCESS)
}

fn run_sweep(scenario: &Path, vped: &[f64], horizon: &[f64], out: &Path) -> Result<ExitCode> {
    let scenario = load(scenario)?;
    let report = sweep(&scenario, vped, horizon, |cell| {
        eprintln!(
            "T={} s, v={} m/s: {} (max overlap {:.4}, {} ticks, {:?})",
            cell.horizon,
            cell.max_pedestrian_speed,
            cell.report.severity,
            cell.report.max_overlap,
            cell.report.ticks,
            cell.report.outcome
        );
    })?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("sweep.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    let table = report.table();
    fs::write(out.join("sweep.txt"), &table)?;
    print!("{table}");
    if !report.is_monotone() {
        eprintln!("severity is not monotone over the grid");
    }
    Ok(ExitCode::SUCCESS)
}

fn check(log: &Path) -> Result<ExitCode> {
    let file = File::open(log).with_context(|| format!("opening {}", log.display()))?;
    let (header, records) = read_log(BufReader::new(file))?;
    let report = replay_check(&header, &records, &ReplaySettings::default())?;
    println!(
        "{} ticks, {} accepted plans, {} violations",
        report.ticks,
        report.accepted,
        report.violations.len()
    );
    for v in &report.violations {
        println!("  {v}");
    }
    Ok(if report.is_clean() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn write_fixtures(out: &Path) -> Result<ExitCode> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("garage.map"), fixtures::garage_map().to_text())?;
    fs::write(out.join("garage.path"), fixtures::garage_path(0.1).to_text())?;
    fs::write(out.join("garage.toml"), fixtures::garage_config().to_toml())?;
    println!("wrote garage.map, garage.path and garage.toml to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { scenario, out } => run(&scenario, out.as_deref()),
        Command::Sweep {
            scenario,
            vped,
            horizon,
            out,
        } => run_sweep(&scenario, &vped, &horizon, &out),
        Command::Check { replay } => check(&replay),
        Command::Fixtures { out } => write_fixtures(&out),
    }
}
