//! Windowed throughput, peak freshness and multi-seed aggregation.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::sim::{AoiSample, Method, SimulationResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("windows do not partition [0, {horizon}]: {reason}")]
    NonPartitioning { horizon: f64, reason: String },
    #[error("no AoI samples fall in window `{0}`")]
    EmptyWindow(String),
    #[error("cannot aggregate an empty result set")]
    NoResults,
    #[error("results mix {0}")]
    Mixed(&'static str),
}

/// Labels for the standard three-window split.
pub const WINDOW_LABELS: [&str; 3] = ["normal", "congestion", "post"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Window {
    pub label: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl Window {
    pub fn minutes(&self) -> f64 {
        (self.end_s - self.start_s) / 60.0
    }
}

/// A contiguous partition of `[0, horizon]`. Each window is half-open except
/// the last, which also owns the horizon instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Windows {
    windows: Vec<Window>,
}

impl Windows {
    pub fn new(windows: Vec<Window>, horizon: f64) -> Result<Self, MetricsError> {
        let fail = |reason: String| MetricsError::NonPartitioning { horizon, reason };
        let first = windows.first().ok_or_else(|| fail("no windows".into()))?;
        if first.start_s != 0.0 {
            return Err(fail(format!("first window starts at {}", first.start_s)));
        }
        for pair in windows.windows(2) {
            if pair[0].end_s != pair[1].start_s {
                return Err(fail(format!(
                    "gap or overlap between `{}` and `{}`",
                    pair[0].label, pair[1].label
                )));
            }
        }
        if let Some(w) = windows.iter().find(|w| !(w.end_s > w.start_s)) {
            return Err(fail(format!("window `{}` is empty", w.label)));
        }
        let last = windows.last().expect("non-empty");
        if last.end_s != horizon {
            return Err(fail(format!("last window ends at {}", last.end_s)));
        }
        Ok(Self { windows })
    }

    /// Splits `[0, horizon]` at `breaks`. Three windows get the labels
    /// normal / congestion / post; other counts are labelled `w0`, `w1`, ….
    pub fn from_breaks(breaks: &[f64], horizon: f64) -> Result<Self, MetricsError> {
        let mut bounds = vec![0.0];
        bounds.extend_from_slice(breaks);
        bounds.push(horizon);
        let n = bounds.len() - 1;
        let windows = bounds
            .windows(2)
            .enumerate()
            .map(|(i, b)| Window {
                label: if n == WINDOW_LABELS.len() {
                    WINDOW_LABELS[i].to_string()
                } else {
                    format!("w{i}")
                },
                start_s: b[0],
                end_s: b[1],
            })
            .collect();
        Self::new(windows, horizon)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Window> {
        self.windows.iter()
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.windows.last().map_or(0.0, |w| w.end_s)
    }

    fn contains(&self, idx: usize, t: f64) -> bool {
        let w = &self.windows[idx];
        t >= w.start_s && (t < w.end_s || (idx + 1 == self.windows.len() && t == w.end_s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowedThroughput {
    pub label: String,
    pub start_s: f64,
    pub end_s: f64,
    pub completed: usize,
    pub tasks_per_min: f64,
}

/// Completed tasks per minute in each window, by completion time.
pub fn throughput_windows(
    result: &SimulationResult,
    windows: &Windows,
) -> Result<Vec<WindowedThroughput>, MetricsError> {
    let completions: Vec<f64> = result.tasks.iter().filter_map(|t| t.complete_t).collect();
    Ok(windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let completed = completions.iter().filter(|&&t| windows.contains(i, t)).count();
            WindowedThroughput {
                label: w.label.clone(),
                start_s: w.start_s,
                end_s: w.end_s,
                completed,
                tasks_per_min: completed as f64 / w.minutes(),
            }
        })
        .collect())
}

/// Maximum of the spatial-average AoI series within each window.
pub fn peak_average_aoi(series: &[AoiSample], windows: &Windows) -> Result<Vec<f64>, MetricsError> {
    windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            series
                .iter()
                .filter(|s| windows.contains(i, s.t))
                .map(|s| s.avg_aoi)
                .reduce(f64::max)
                .ok_or_else(|| MetricsError::EmptyWindow(w.label.clone()))
        })
        .collect()
}

/// Sample mean with a two-sided 95% Student-t interval over `n - 1`
/// degrees of freedom. With one sample the interval collapses to the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn estimate(values: &[f64]) -> Estimate {
    let n = values.len();
    if n == 0 {
        return Estimate {
            mean: f64::NAN,
            lower: f64::NAN,
            upper: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Estimate {
            mean,
            lower: mean,
            upper: mean,
        };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    let half = t * (var / n as f64).sqrt();
    Estimate {
        mean,
        lower: mean - half,
        upper: mean + half,
    }
}

/// Pointwise statistics of the AoI series over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateSeries {
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowSummary {
    pub label: String,
    pub tasks_per_min: Estimate,
    pub peak_aoi: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub method: Method,
    pub series: AggregateSeries,
    pub total_completed: Estimate,
    pub windows: Vec<WindowSummary>,
}

/// Combines runs of one scenario and method over several seeds.
pub fn aggregate_seeds(
    results: &[SimulationResult],
    windows: &Windows,
) -> Result<Aggregate, MetricsError> {
    let first = results.first().ok_or(MetricsError::NoResults)?;
    if results.iter().any(|r| r.scenario != first.scenario) {
        return Err(MetricsError::Mixed("scenarios"));
    }
    if results.iter().any(|r| r.method != first.method) {
        return Err(MetricsError::Mixed("methods"));
    }
    let grid: Vec<f64> = first.aoi_series.iter().map(|s| s.t).collect();
    if results
        .iter()
        .any(|r| r.aoi_series.len() != grid.len() || r.aoi_series.iter().zip(&grid).any(|(s, t)| s.t != *t))
    {
        return Err(MetricsError::Mixed("time grids"));
    }

    let mut series = AggregateSeries {
        t: grid.clone(),
        mean: Vec::with_capacity(grid.len()),
        lower: Vec::with_capacity(grid.len()),
        upper: Vec::with_capacity(grid.len()),
        n_seeds: results.len(),
    };
    let mut column = Vec::with_capacity(results.len());
    for i in 0..grid.len() {
        column.clear();
        column.extend(results.iter().map(|r| r.aoi_series[i].avg_aoi));
        let e = estimate(&column);
        series.mean.push(e.mean);
        series.lower.push(e.lower);
        series.upper.push(e.upper);
    }

    let totals: Vec<f64> = results.iter().map(|r| r.completed() as f64).collect();
    let rates = results
        .iter()
        .map(|r| throughput_windows(r, windows))
        .collect::<Result<Vec<_>, _>>()?;
    let peaks = results
        .iter()
        .map(|r| peak_average_aoi(&r.aoi_series, windows))
        .collect::<Result<Vec<_>, _>>()?;
    let window_summaries = windows
        .iter()
        .enumerate()
        .map(|(i, w)| WindowSummary {
            label: w.label.clone(),
            tasks_per_min: estimate(&rates.iter().map(|r| r[i].tasks_per_min).collect::<Vec<_>>()),
            peak_aoi: estimate(&peaks.iter().map(|p| p[i]).collect::<Vec<_>>()),
        })
        .collect();

    Ok(Aggregate {
        method: first.method,
        series,
        total_completed: estimate(&totals),
        windows: window_summaries,
    })
}

/// Relative change of `value` against `baseline` as a signed percentage
/// with one decimal, e.g. `+11.8%`. Rounding is half-away-from-zero on the
/// magnitude, so swapping the arguments of an equal-magnitude change only
/// flips the sign. Values that round to zero print as `0.0%`.
pub fn format_improvement(value: f64, baseline: f64) -> String {
    let pct = (value / baseline - 1.0) * 100.0;
    if !pct.is_finite() {
        return "n/a".to_string();
    }
    let magnitude = (pct.abs() * 10.0).round() / 10.0;
    if magnitude == 0.0 {
        "0.0%".to_string()
    } else if pct > 0.0 {
        format!("+{magnitude:.1}%")
    } else {
        format!("-{magnitude:.1}%")
    }
}

/// Two-decimal rendering used in human-readable output.
pub fn format_rate(rate: f64) -> String {
    format!("{rate:.2}")
}

/// Published figures for the physical testbed, carried into reports for
/// side-by-side comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceFigures {
    pub tasks_per_min: [f64; 3],
    pub peak_aoi_s: [f64; 3],
}

pub const REFERENCE_PROPOSAL: ReferenceFigures = ReferenceFigures {
    tasks_per_min: [0.53, 0.33, 0.48],
    peak_aoi_s: [24.7, 49.4, 49.8],
};

pub const REFERENCE_CONVENTIONAL: ReferenceFigures = ReferenceFigures {
    tasks_per_min: [0.53, 0.30, 0.32],
    peak_aoi_s: [24.4, 64.2, 50.9],
};
