use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use slbsim_core::sweep::{self, Grid};
use slbsim_core::{Runner, Scenario};

/// Platoon beaconing simulator.
#[derive(Debug, Parser)]
#[command(name = "slbsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run one scenario.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replace the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Stop at this time instead of the scenario's t_end.
        #[arg(long)]
        until: Option<f64>,
        /// Write the event trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write metrics as <path>.csv and <path>.json (or the given
        /// extension plus the other one).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dotted-path override, e.g. channel.loss_prob=0.2. Repeatable.
        #[arg(long = "override", value_name = "PATH=VALUE")]
        overrides: Vec<String>,
    },
    /// Run every grid point for every seed.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// JSON object mapping dotted paths to lists of values.
        #[arg(long)]
        grid: PathBuf,
        /// a..b, a..=b or a comma-separated list.
        #[arg(long)]
        seeds: String,
        /// Per-run CSV.
        #[arg(long)]
        out: PathBuf,
        /// Per-grid-point mean/stddev CSV.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a scenario file and report every problem.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

/// `out` names either file; the other gets the sibling extension.
fn metric_paths(out: &Path) -> (PathBuf, PathBuf) {
    match out.extension().and_then(|e| e.to_str()) {
        Some("csv") | Some("json") => (out.with_extension("csv"), out.with_extension("json")),
        _ => {
            let name = out.as_os_str().to_owned();
            let mut csv = name.clone();
            csv.push(".csv");
            let mut json = name;
            json.push(".json");
            (csv.into(), json.into())
        }
    }
}

fn run_cmd(
    config: &Path,
    seed: Option<u64>,
    until: Option<f64>,
    trace: Option<&Path>,
    out: Option<&Path>,
    mut overrides: Vec<String>,
) -> Result<()> {
    if let Some(seed) = seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(t) = until {
        overrides.push(format!("t_end={t}"));
    }
    let scenario = Scenario::load(config, &overrides)?;
    info!(
        "running {} to t={} with seed {}",
        config.display(),
        scenario.t_end,
        scenario.seed
    );
    let output = Runner::new(&scenario, trace.is_some()).finish()?;
    if let Some(path) = trace {
        write(path, &output.trace)?;
    }
    match out {
        Some(out) => {
            let (csv, json) = metric_paths(out);
            write(&csv, &output.report.to_csv())?;
            write(&json, &output.report.to_json())?;
        }
        None => print!("{}", output.report.to_csv()),
    }
    info!("{} events fired", output.summary.events_fired);
    Ok(())
}

fn sweep_cmd(
    config: &Path,
    grid: &Path,
    seeds: &str,
    out: &Path,
    summary: Option<&Path>,
    threads: Option<usize>,
) -> Result<()> {
    let seeds = sweep::parse_seeds(seeds)?;
    let text = fs::read_to_string(config).with_context(|| format!("cannot read {}", config.display()))?;
    let base: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", config.display()))?;
    // fail on a broken base scenario before expanding the grid
    Scenario::from_value(base.clone()).with_context(|| format!("invalid scenario {}", config.display()))?;
    let grid_text = fs::read_to_string(grid).with_context(|| format!("cannot read {}", grid.display()))?;
    let grid = Grid::from_json(&grid_text)?;
    let rows = sweep::sweep(&base, &grid, &seeds, threads)?;
    info!("{} runs finished", rows.len());
    write(out, &sweep::rows_csv(&grid, &rows))?;
    if let Some(path) = summary {
        write(path, &sweep::summary_csv(&grid, &sweep::summarize(&rows)))?;
    }
    Ok(())
}

fn validate_cmd(config: &Path) -> Result<()> {
    let s = Scenario::load(config, &[])?;
    let agents: usize = s.platoons.iter().map(|p| p.size).sum();
    println!(
        "{}: ok ({} platoon(s), {agents} agents, t_end {})",
        config.display(),
        s.platoons.len(),
        s.t_end
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SLBSIM_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run {
            config,
            seed,
            until,
            trace,
            out,
            overrides,
        } => run_cmd(&config, seed, until, trace.as_deref(), out.as_deref(), overrides),
        Cmd::Sweep {
            config,
            grid,
            seeds,
            out,
            summary,
            threads,
        } => sweep_cmd(&config, &grid, &seeds, &out, summary.as_deref(), threads),
        Cmd::Validate { config } => validate_cmd(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_siblings() {
        assert_eq!(
            metric_paths(Path::new("out/run")),
            (PathBuf::from("out/run.csv"), PathBuf::from("out/run.json"))
        );
        assert_eq!(
            metric_paths(Path::new("m.json")),
            (PathBuf::from("m.csv"), PathBuf::from("m.json"))
        );
    }

    #[test]
    fn parses_repeated_overrides() {
        let cli = Cli::try_parse_from([
            "slbsim",
            "run",
            "--config",
            "a.json",
            "--override",
            "seed=2",
            "--override",
            "channel.loss_prob=1",
        ])
        .unwrap();
        match cli.command {
            Cmd::Run { overrides, .. } => assert_eq!(overrides, vec!["seed=2", "channel.loss_prob=1"]),
            other => panic!("{other:?}"),
        }
    }
}
