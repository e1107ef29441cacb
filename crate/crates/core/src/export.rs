//! On-disk artifacts of an experiment.
//!
//! | file                 | contents                                              |
//! |----------------------|-------------------------------------------------------|
//! | `aoi_timeseries.csv` | `t,seed,method,avg_aoi`                               |
//! | `tasks.csv`          | one lifecycle row per task and run                    |
//! | `summary.json`       | `methods`, `windows`, `totals`, `improvements`, `seeds` |
//! | `events.log`         | one JSON event per line                               |
//! | `weights.csv`        | optional weight-matrix dumps                          |
//! | `ledger.csv`         | optional twin-state dumps                             |
//!
//! Runs are written in (method, seed) order and maps are key-sorted, so
//! identical inputs produce byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::metrics::{
    aggregate_seeds, format_improvement, Estimate, MetricsError, ReferenceFigures, Window, Windows,
    REFERENCE_CONVENTIONAL, REFERENCE_PROPOSAL,
};
use crate::sim::{Method, SimulationResult};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub const INTERVAL_METHOD: &str = "95% two-sided Student-t interval, n-1 degrees of freedom";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowStats {
    pub label: String,
    pub tasks_per_min: Estimate,
    pub peak_aoi: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub n_seeds: usize,
    pub interval: &'static str,
    pub windows: Vec<WindowStats>,
    pub reference: ReferenceFigures,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Totals {
    pub completed: Estimate,
    pub generated: Estimate,
}

/// Proposal relative to conventional, present only when both were run.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Improvements {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_completed: Option<String>,
    pub tasks_per_min: BTreeMap<String, String>,
    pub peak_aoi: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub methods: BTreeMap<Method, MethodSummary>,
    pub windows: Vec<Window>,
    pub totals: BTreeMap<Method, Totals>,
    pub improvements: Improvements,
    pub seeds: Vec<u64>,
}

fn ordered(results: &[SimulationResult]) -> Vec<&SimulationResult> {
    let mut runs: Vec<&SimulationResult> = results.iter().collect();
    runs.sort_by_key(|r| (r.method, r.seed));
    runs
}

pub fn summarize(results: &[SimulationResult], windows: &Windows) -> Result<Summary, ExportError> {
    let mut by_method: BTreeMap<Method, Vec<SimulationResult>> = BTreeMap::new();
    for r in ordered(results) {
        by_method.entry(r.method).or_default().push(r.clone());
    }
    let mut seeds: Vec<u64> = results.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();

    let mut methods = BTreeMap::new();
    let mut totals = BTreeMap::new();
    let mut aggregates = BTreeMap::new();
    for (method, runs) in &by_method {
        let agg = aggregate_seeds(runs, windows)?;
        let generated: Vec<f64> = runs.iter().map(|r| r.tasks.len() as f64).collect();
        totals.insert(
            *method,
            Totals {
                completed: agg.total_completed,
                generated: crate::metrics::estimate(&generated),
            },
        );
        methods.insert(
            *method,
            MethodSummary {
                n_seeds: runs.len(),
                interval: INTERVAL_METHOD,
                windows: agg
                    .windows
                    .iter()
                    .map(|w| WindowStats {
                        label: w.label.clone(),
                        tasks_per_min: w.tasks_per_min,
                        peak_aoi: w.peak_aoi,
                    })
                    .collect(),
                reference: match method {
                    Method::Proposal => REFERENCE_PROPOSAL,
                    Method::Conventional => REFERENCE_CONVENTIONAL,
                },
            },
        );
        aggregates.insert(*method, agg);
    }

    let mut improvements = Improvements::default();
    if let (Some(p), Some(c)) = (
        aggregates.get(&Method::Proposal),
        aggregates.get(&Method::Conventional),
    ) {
        improvements.total_completed = Some(format_improvement(
            p.total_completed.mean,
            c.total_completed.mean,
        ));
        for (pw, cw) in p.windows.iter().zip(&c.windows) {
            improvements.tasks_per_min.insert(
                pw.label.clone(),
                format_improvement(pw.tasks_per_min.mean, cw.tasks_per_min.mean),
            );
            improvements.peak_aoi.insert(
                pw.label.clone(),
                format_improvement(pw.peak_aoi.mean, cw.peak_aoi.mean),
            );
        }
    }

    Ok(Summary {
        methods,
        windows: windows.iter().cloned().collect(),
        totals,
        improvements,
        seeds,
    })
}

#[derive(Serialize)]
struct AoiRow {
    t: f64,
    seed: u64,
    method: Method,
    avg_aoi: f64,
}

#[derive(Serialize)]
struct TaskRow {
    seed: u64,
    method: Method,
    task: usize,
    pickup: usize,
    dropoff: usize,
    arrival_t: f64,
    assigned_t: Option<f64>,
    pickup_t: Option<f64>,
    complete_t: Option<f64>,
    vehicle: Option<usize>,
}

#[derive(Serialize)]
struct WeightCsvRow {
    t: f64,
    seed: u64,
    method: Method,
    from: usize,
    to: usize,
    weight: f64,
}

#[derive(Serialize)]
struct LedgerCsvRow {
    t: f64,
    seed: u64,
    method: Method,
    edge: usize,
    density: f64,
    age: f64,
}

#[derive(Serialize)]
struct EventLine<'a> {
    seed: u64,
    method: Method,
    #[serde(flatten)]
    event: &'a crate::sim::Event,
}

fn write_csv<R: Serialize>(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = R>,
) -> Result<(), ExportError> {
    let csv_err = |source| ExportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Paths of the files written by [`export`].
#[derive(Debug, Clone, PartialEq)]
pub struct Exported {
    pub files: Vec<PathBuf>,
}

/// Writes every artifact for `results` into `dir`, creating it if needed.
/// Weight and ledger dumps are written only when some run recorded them.
pub fn export(
    results: &[SimulationResult],
    windows: &Windows,
    dir: &Path,
) -> Result<Exported, ExportError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ExportError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let runs = ordered(results);
    let mut files = Vec::new();

    let path = dir.join("aoi_timeseries.csv");
    write_csv(
        &path,
        &["t", "seed", "method", "avg_aoi"],
        runs.iter().flat_map(|r| {
            r.aoi_series.iter().map(|s| AoiRow {
                t: s.t,
                seed: r.seed,
                method: r.method,
                avg_aoi: s.avg_aoi,
            })
        }),
    )?;
    files.push(path);

    let path = dir.join("tasks.csv");
    write_csv(
        &path,
        &[
            "seed", "method", "task", "pickup", "dropoff", "arrival_t", "assigned_t", "pickup_t",
            "complete_t", "vehicle",
        ],
        runs.iter().flat_map(|r| {
            r.tasks.iter().map(|t| TaskRow {
                seed: r.seed,
                method: r.method,
                task: t.id,
                pickup: t.pickup.0,
                dropoff: t.dropoff.0,
                arrival_t: t.arrival_t,
                assigned_t: t.assigned_t,
                pickup_t: t.pickup_t,
                complete_t: t.complete_t,
                vehicle: t.vehicle,
            })
        }),
    )?;
    files.push(path);

    let path = dir.join("summary.json");
    let summary = summarize(results, windows)?;
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    files.push(path);

    let path = dir.join("events.log");
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    for r in &runs {
        for event in &r.events {
            let line = EventLine {
                seed: r.seed,
                method: r.method,
                event,
            };
            serde_json::to_writer(&mut w, &line).expect("event serializes");
            w.write_all(b"\n").map_err(io_err(&path))?;
        }
    }
    w.flush().map_err(io_err(&path))?;
    files.push(path);

    if runs.iter().any(|r| !r.weight_rows.is_empty()) {
        let path = dir.join("weights.csv");
        write_csv(
            &path,
            &["t", "seed", "method", "from", "to", "weight"],
            runs.iter().flat_map(|r| {
                r.weight_rows.iter().map(|w| WeightCsvRow {
                    t: w.t,
                    seed: r.seed,
                    method: r.method,
                    from: w.from,
                    to: w.to,
                    weight: w.weight,
                })
            }),
        )?;
        files.push(path);
    }

    if runs.iter().any(|r| !r.ledger_rows.is_empty()) {
        let path = dir.join("ledger.csv");
        write_csv(
            &path,
            &["t", "seed", "method", "edge", "density", "age"],
            runs.iter().flat_map(|r| {
                r.ledger_rows.iter().map(|l| LedgerCsvRow {
                    t: l.t,
                    seed: r.seed,
                    method: r.method,
                    edge: l.edge,
                    density: l.density,
                    age: l.age,
                })
            }),
        )?;
        files.push(path);
    }

    Ok(Exported { files })
}
