//! Experiment sweeps: the protocol × node-count × fragment-size × seed
//! cross-product, result rows, CSV emission, and determinism verification.
//!
//! The fragment-size axis only applies to FROG (fixed fragmentation);
//! DYFRAG and IDSME runs record `n/a` in that column and run once per
//! (nodes, seed). Runs may execute on several worker threads (each run is
//! fully isolated) while the emitted row order stays deterministic:
//! sorted by the sweep axes, never by completion time.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::packet::Priority;
use crate::runner::{run_scenario, RunOptions, RunSummary};
use crate::scenario::{Protocol, Scenario};

pub const CSV_HEADER: &str =
    "scenario,protocol,nodes,frag,seed,class,avg_delay_s,throughput_units_per_s,drops,trace_digest,error";

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub scenario_id: String,
    pub protocol: Protocol,
    pub nodes: u16,
    /// FROG's fixed fragment size; `None` (printed `n/a`) for the others.
    pub frag: Option<u32>,
    pub seed: u64,
    pub class: Priority,
    pub avg_delay_s: Option<f64>,
    pub throughput_units_per_s: f64,
    pub drops: u64,
    pub trace_digest: u64,
    pub error: Option<String>,
}

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        let mut line = String::new();
        let frag = match self.frag {
            Some(f) => f.to_string(),
            None => "n/a".to_string(),
        };
        let delay = match self.avg_delay_s {
            Some(d) => format!("{d:.9}"),
            None => "n/a".to_string(),
        };
        write!(
            line,
            "{},{},{},{},{},{},{},{:.6},{},{:016x},{}",
            self.scenario_id,
            self.protocol,
            self.nodes,
            frag,
            self.seed,
            self.class,
            delay,
            self.throughput_units_per_s,
            self.drops,
            self.trace_digest,
            self.error.as_deref().unwrap_or("")
        )
        .expect("write to string");
        line
    }

    pub fn from_csv_line(line: &str) -> Result<ResultRow, CsvError> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(CsvError::FieldCount {
                got: fields.len(),
                line: line.to_string(),
            });
        }
        let parse_err = |field: &str, what: &str| CsvError::BadField {
            field: field.to_string(),
            what: what.to_string(),
        };
        Ok(ResultRow {
            scenario_id: fields[0].to_string(),
            protocol: fields[1]
                .parse()
                .map_err(|_| parse_err(fields[1], "protocol"))?,
            nodes: fields[2]
                .parse()
                .map_err(|_| parse_err(fields[2], "nodes"))?,
            frag: match fields[3] {
                "n/a" => None,
                f => Some(f.parse().map_err(|_| parse_err(f, "frag"))?),
            },
            seed: fields[4]
                .parse()
                .map_err(|_| parse_err(fields[4], "seed"))?,
            class: match fields[5] {
                "normal" => Priority::Normal,
                "urgent" => Priority::Urgent,
                f => return Err(parse_err(f, "class")),
            },
            avg_delay_s: match fields[6] {
                "n/a" => None,
                f => Some(f.parse().map_err(|_| parse_err(f, "avg_delay_s"))?),
            },
            throughput_units_per_s: fields[7]
                .parse()
                .map_err(|_| parse_err(fields[7], "throughput"))?,
            drops: fields[8]
                .parse()
                .map_err(|_| parse_err(fields[8], "drops"))?,
            trace_digest: u64::from_str_radix(fields[9], 16)
                .map_err(|_| parse_err(fields[9], "trace_digest"))?,
            error: match fields[10] {
                "" => None,
                e => Some(e.to_string()),
            },
        })
    }
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("expected 11 fields, got {got}: {line:?}")]
    FieldCount { got: usize, line: String },
    #[error("cannot parse {field:?} as {what}")]
    BadField { field: String, what: String },
    #[error("missing header row")]
    MissingHeader,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<(), CsvError> {
    let mut text = String::with_capacity(rows.len() * 96 + 128);
    text.push_str(CSV_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row.to_csv_line());
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>, CsvError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == CSV_HEADER => {}
        _ => return Err(CsvError::MissingHeader),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(ResultRow::from_csv_line)
        .collect()
}

fn scenario_cell_id(protocol: Protocol, nodes: u16, frag: Option<u32>) -> String {
    match frag {
        Some(f) => format!("{protocol}-n{nodes}-f{f}"),
        None => format!("{protocol}-n{nodes}"),
    }
}

fn rows_from_summary(sc: &Scenario, frag: Option<u32>, summary: &RunSummary) -> Vec<ResultRow> {
    Priority::ALL
        .iter()
        .map(|&class| {
            let c = summary.class(class);
            ResultRow {
                scenario_id: sc.id.clone(),
                protocol: sc.protocol,
                nodes: sc.sources,
                frag,
                seed: summary.seed,
                class,
                avg_delay_s: c.avg_delay_s,
                throughput_units_per_s: c.throughput_units_per_s,
                drops: c.dropped,
                trace_digest: summary.digest,
                error: None,
            }
        })
        .collect()
}

fn error_rows(sc: &Scenario, frag: Option<u32>, seed: u64, message: &str) -> Vec<ResultRow> {
    // Commas would break the fixed column grid.
    let clean: String = message
        .chars()
        .map(|c| if c == ',' || c == '\n' { ';' } else { c })
        .collect();
    Priority::ALL
        .iter()
        .map(|&class| ResultRow {
            scenario_id: sc.id.clone(),
            protocol: sc.protocol,
            nodes: sc.sources,
            frag,
            seed,
            class,
            avg_delay_s: None,
            throughput_units_per_s: 0.0,
            drops: 0,
            trace_digest: 0,
            error: Some(clean.clone()),
        })
        .collect()
}

/// One independent simulation per seed; two rows (one per class) per run.
pub fn run_experiment(sc: &Scenario, seeds: &[u64]) -> Vec<ResultRow> {
    let frag = match sc.protocol {
        Protocol::Frog => Some(sc.frog_fragment_units),
        _ => None,
    };
    let mut rows = Vec::with_capacity(seeds.len() * 2);
    for &seed in seeds {
        let out = run_scenario(sc, seed, &RunOptions::default());
        rows.extend(rows_from_summary(sc, frag, &out.summary));
    }
    rows
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub protocols: Vec<Protocol>,
    pub nodes: Vec<u16>,
    /// FROG fragment sizes to sweep; ignored (one run, `n/a`) elsewhere.
    pub frags: Vec<u32>,
    pub seeds: Vec<u64>,
    pub base: Scenario,
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep axis {0} is empty")]
    EmptyAxis(&'static str),
}

/// Scenario for one sweep cell.
pub fn cell_scenario(
    base: &Scenario,
    protocol: Protocol,
    nodes: u16,
    frag: Option<u32>,
) -> Scenario {
    let mut sc = base.clone();
    sc.protocol = protocol;
    sc.sources = nodes;
    if let Some(f) = frag {
        sc.frog_fragment_units = f;
    }
    sc.id = scenario_cell_id(protocol, nodes, frag);
    sc
}

/// Run the full cross-product. `verify_determinism` executes every run
/// twice and reports any digest or row divergence in the error column.
/// Worker panics become error rows; the sweep continues.
pub fn sweep(
    spec: &SweepSpec,
    jobs: usize,
    verify_determinism: bool,
) -> Result<Vec<ResultRow>, SweepError> {
    if spec.protocols.is_empty() {
        return Err(SweepError::EmptyAxis("protocols"));
    }
    if spec.nodes.is_empty() {
        return Err(SweepError::EmptyAxis("nodes"));
    }
    if spec.seeds.is_empty() {
        return Err(SweepError::EmptyAxis("seeds"));
    }
    if spec.frags.is_empty() && spec.protocols.contains(&Protocol::Frog) {
        return Err(SweepError::EmptyAxis("frags"));
    }

    struct Cell {
        sc: Scenario,
        frag: Option<u32>,
        seed: u64,
    }
    let mut cells = Vec::new();
    for &protocol in &spec.protocols {
        let frags: Vec<Option<u32>> = match protocol {
            Protocol::Frog => spec.frags.iter().map(|&f| Some(f)).collect(),
            _ => vec![None],
        };
        for &nodes in &spec.nodes {
            for &frag in &frags {
                for &seed in &spec.seeds {
                    cells.push(Cell {
                        sc: cell_scenario(&spec.base, protocol, nodes, frag),
                        frag,
                        seed,
                    });
                }
            }
        }
    }

    let results: Vec<Mutex<Vec<ResultRow>>> =
        (0..cells.len()).map(|_| Mutex::new(Vec::new())).collect();
    let next = AtomicUsize::new(0);
    let workers = jobs.max(1).min(cells.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let cell = &cells[i];
                let rows = run_cell(&cell.sc, cell.frag, cell.seed, verify_determinism);
                *results[i].lock().expect("results lock") = rows;
            });
        }
    });

    Ok(results
        .into_iter()
        .flat_map(|m| m.into_inner().expect("results lock"))
        .collect())
}

fn run_cell(sc: &Scenario, frag: Option<u32>, seed: u64, verify: bool) -> Vec<ResultRow> {
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        let first = run_scenario(sc, seed, &RunOptions::default()).summary;
        if verify {
            let second = run_scenario(sc, seed, &RunOptions::default()).summary;
            if second != first {
                return Err(format!(
                    "determinism violation: digests {:016x} vs {:016x}",
                    first.digest, second.digest
                ));
            }
        }
        Ok(first)
    }));
    match outcome {
        Ok(Ok(summary)) => {
            let mut rows = rows_from_summary(sc, frag, &summary);
            if !summary.conservation_ok {
                for row in &mut rows {
                    row.error = Some("conservation violation".to_string());
                }
            } else if !summary.monitor.is_clean() {
                for row in &mut rows {
                    row.error = Some(format!("invariant violation: {:?}", summary.monitor));
                }
            }
            rows
        }
        Ok(Err(msg)) => error_rows(sc, frag, seed, &msg),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .map(|s| s.as_str())
                .or_else(|| panic.downcast_ref::<&str>().copied())
                .unwrap_or("run panicked");
            error_rows(sc, frag, seed, msg)
        }
    }
}
