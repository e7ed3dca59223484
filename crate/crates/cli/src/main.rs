//! Command-line driver: single-scenario runs and experiment sweeps, with
//! CSV as the sole output format.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use macsim_core::experiment::{self, SweepSpec};
use macsim_core::scenario::{load_scenario, Protocol, Scenario};
use macsim_core::time::{SimTime, MILLIS};

#[derive(Parser)]
#[command(
    name = "macsim",
    about = "Deterministic simulator for priority-aware wireless MAC protocols",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file across seeds and emit result rows.
    Run(RunArgs),
    /// Run the protocol x nodes x fragment-size x seed cross-product.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario configuration file.
    #[arg(long)]
    scenario: PathBuf,
    /// Seeds to run, e.g. `1-10` or `1,5,9`. Defaults to the scenario seed.
    #[arg(long)]
    seeds: Option<String>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Base scenario file for everything the axes do not override.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Protocols to sweep.
    #[arg(long, default_value = "FROG,DYFRAG,IDSME", value_delimiter = ',')]
    protocols: Vec<Protocol>,
    /// Source-node counts, e.g. `1-10`.
    #[arg(long, default_value = "1-10")]
    nodes: String,
    /// FROG fragment sizes, e.g. `16,2`.
    #[arg(long, default_value = "16,2")]
    frags: String,
    /// Seeds, e.g. `1-10`.
    #[arg(long, default_value = "1-10")]
    seeds: String,
    /// Override the simulated horizon in milliseconds.
    #[arg(long)]
    horizon_ms: Option<u64>,
    /// Output CSV path.
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    /// Run every cell twice and flag any digest divergence.
    #[arg(long)]
    verify_determinism: bool,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    jobs: Option<usize>,
}

/// Parse `1-10`, `1,2,3` or mixes like `1-3,7` into a list.
fn parse_list(text: &str) -> Result<Vec<u64>> {
    let mut values = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        match part.split_once('-') {
            Some((lo, hi)) => {
                let lo: u64 = lo.trim().parse().context("range start")?;
                let hi: u64 = hi.trim().parse().context("range end")?;
                if lo > hi {
                    bail!("empty range {part:?}");
                }
                values.extend(lo..=hi);
            }
            None => values.push(part.parse().context("list entry")?),
        }
    }
    if values.is_empty() {
        bail!("list {text:?} is empty");
    }
    Ok(values)
}

fn emit(rows: &[experiment::ResultRow], out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            experiment::write_csv(rows, path)
                .with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
        }
        None => {
            println!("{}", experiment::CSV_HEADER);
            for row in rows {
                println!("{}", row.to_csv_line());
            }
        }
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let scenario = load_scenario(&args.scenario)
        .with_context(|| format!("loading {}", args.scenario.display()))?;
    let seeds = match &args.seeds {
        Some(text) => parse_list(text)?,
        None => vec![scenario.seed],
    };
    let rows = experiment::run_experiment(&scenario, &seeds);
    emit(&rows, args.out.as_ref())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut base = match &args.scenario {
        Some(path) => load_scenario(path).with_context(|| format!("loading {}", path.display()))?,
        None => Scenario::default(),
    };
    if let Some(ms) = args.horizon_ms {
        base.horizon = SimTime(ms * MILLIS);
    }
    let nodes = parse_list(&args.nodes)?
        .into_iter()
        .map(|n| u16::try_from(n).context("node count fits u16"))
        .collect::<Result<Vec<u16>>>()?;
    let frags = parse_list(&args.frags)?
        .into_iter()
        .map(|f| u32::try_from(f).context("fragment size fits u32"))
        .collect::<Result<Vec<u32>>>()?;
    let seeds = parse_list(&args.seeds)?;
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));

    let spec = SweepSpec {
        protocols: args.protocols.clone(),
        nodes,
        frags,
        seeds,
        base,
    };
    let rows = experiment::sweep(&spec, jobs, args.verify_determinism)?;
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    emit(&rows, Some(&args.out))?;
    if failures > 0 {
        bail!("{failures} rows carry errors (see the error column)");
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_parsing_handles_ranges_and_commas() {
        assert_eq!(parse_list("1-4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_list("16,2").unwrap(), vec![16, 2]);
        assert_eq!(parse_list("1-3,7").unwrap(), vec![1, 2, 3, 7]);
        assert!(parse_list("5-3").is_err());
        assert!(parse_list("").is_err());
    }
}
