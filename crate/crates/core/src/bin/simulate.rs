use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use rayon::prelude::*;

use aoi_fleet::export::{export, summarize};
use aoi_fleet::metrics::{format_rate, Windows};
use aoi_fleet::scenario::{load_scenario_file, validate_scenario, ScenarioError};
use aoi_fleet::sim::{run_with, Method, RunOptions, SimulationResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Proposal,
    Conventional,
    Both,
}

impl MethodArg {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Proposal => vec![Method::Proposal],
            MethodArg::Conventional => vec![Method::Conventional],
            MethodArg::Both => vec![Method::Proposal, Method::Conventional],
        }
    }
}

/// Run a fleet scenario under one or both routing methods and export the metrics.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Args {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: PathBuf,
    /// Seed count `n` (runs seeds 1..=n) or a comma-separated seed list.
    #[arg(long, default_value = "1", value_parser = parse_seeds)]
    seeds: Seeds,
    #[arg(long, value_enum, default_value_t = MethodArg::Both)]
    method: MethodArg,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the tick length (s).
    #[arg(long)]
    dt: Option<f64>,
    /// Override the freshness decay rate (1/s).
    #[arg(long)]
    beta: Option<f64>,
    /// Override the horizon (s).
    #[arg(long)]
    horizon: Option<f64>,
    /// Write weight-matrix dumps to weights.csv.
    #[arg(long)]
    emit_weights: bool,
    /// Write twin-state dumps to ledger.csv.
    #[arg(long)]
    emit_ledger: bool,
    /// Interval between weight / ledger dumps (s).
    #[arg(long, default_value_t = 10.0)]
    dump_every: f64,
    /// Suppress the human-readable report.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Clone)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    if s.contains(',') {
        return s
            .split(',')
            .map(|p| p.trim().parse::<u64>().map_err(|e| format!("bad seed `{p}`: {e}")))
            .collect::<Result<_, _>>()
            .map(Seeds);
    }
    let n: u64 = s.parse().map_err(|e| format!("bad seed count `{s}`: {e}"))?;
    if n == 0 {
        return Err("seed count must be at least 1".into());
    }
    Ok(Seeds((1..=n).collect()))
}

fn thread_cap() -> Option<usize> {
    std::env::var("AOI_FLEET_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
}

fn main() -> ExitCode {
    let args = Args::parse();

    let (graph, mut config) = match load_scenario_file(&args.scenario) {
        Ok(loaded) => loaded,
        Err(e @ ScenarioError::Io { .. }) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(dt) = args.dt {
        config.params.dt_s = dt;
    }
    if let Some(beta) = args.beta {
        config.params.beta_per_s = beta;
    }
    if let Some(horizon) = args.horizon {
        config.params.horizon_s = horizon;
    }
    if let Err(e) = validate_scenario(&graph, &config) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let windows = match Windows::from_breaks(&config.params.window_breaks_s, config.params.horizon_s) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    let options = RunOptions {
        weights_every_s: args.emit_weights.then_some(args.dump_every),
        ledger_every_s: args.emit_ledger.then_some(args.dump_every),
    };
    let jobs: Vec<(Method, u64)> = args
        .method
        .methods()
        .into_iter()
        .flat_map(|m| args.seeds.0.iter().map(move |&s| (m, s)))
        .collect();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    };
    let outcome: Result<Vec<SimulationResult>, String> = pool.install(|| {
        jobs.par_iter()
            .map(|&(method, seed)| {
                run_with(&graph, &config, seed, method, options)
                    .map_err(|e| format!("{method} seed {seed}: {e}"))
            })
            .collect()
    });
    let results = match outcome {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };

    if let Err(e) = export(&results, &windows, &args.out) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    if !args.quiet {
        match summarize(&results, &windows) {
            Ok(summary) => {
                println!("scenario {} | seeds {:?}", config.name, summary.seeds);
                for (method, stats) in &summary.methods {
                    let total = &summary.totals[method];
                    let rates: Vec<String> = stats
                        .windows
                        .iter()
                        .map(|w| format!("{} {}", w.label, format_rate(w.tasks_per_min.mean)))
                        .collect();
                    let peaks: Vec<String> = stats
                        .windows
                        .iter()
                        .map(|w| format!("{} {:.1}", w.label, w.peak_aoi.mean))
                        .collect();
                    println!(
                        "{method:>12}: completed {:.1} | tasks/min {} | peak AoI (s) {}",
                        total.completed.mean,
                        rates.join(", "),
                        peaks.join(", ")
                    );
                }
                if let Some(total) = &summary.improvements.total_completed {
                    println!("  completed tasks, proposal vs conventional: {total}");
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        }
        println!("wrote {}", args.out.display());
    }
    ExitCode::SUCCESS
}
