//! Fundamental-diagram speeds and freshness-decayed travel times.
//!
//! Speed follows the linear density law `v = v_free * (1 - k / k_max)`,
//! floored at `epsilon_v` so a jammed segment keeps a finite (large) travel
//! time. The planning weight of a segment blends the travel time implied by
//! its last observed density with its free-flow time:
//!
//! ```text
//! T = (T_dyn - T_free) * exp(-beta * age) + T_free
//! ```
//!
//! Fresh data (`age = 0`) or `beta = 0` gives full trust in `T_dyn`; old data
//! decays toward the optimistic free-flow time.

use thiserror::Error;

use crate::graph::{Edge, EdgeId, NodeId, RoadGraph};
use crate::ledger::{LedgerError, TwinLedger};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrafficError {
    #[error("density {density} outside [0, {k_max}]")]
    DensityOutOfRange { density: f64, k_max: f64 },
    #[error("negative information age {0}")]
    NegativeAge(f64),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Freshness decay rate, 1/s.
    pub beta: f64,
    /// Jam density, vehicles per meter per lane.
    pub k_max: f64,
    /// Speed floor, m/s.
    pub epsilon_v: f64,
}

impl ModelParams {
    pub fn with_beta(self, beta: f64) -> Self {
        Self { beta, ..self }
    }
}

pub fn fd_speed(density: f64, v_free: f64, k_max: f64, epsilon_v: f64) -> Result<f64, TrafficError> {
    if !(0.0..=k_max).contains(&density) {
        return Err(TrafficError::DensityOutOfRange { density, k_max });
    }
    Ok((v_free * (1.0 - density / k_max)).max(epsilon_v))
}

/// Travel time implied by `density`, always at least the free-flow time.
pub fn dynamic_travel_time(edge: &Edge, density: f64, params: &ModelParams) -> Result<f64, TrafficError> {
    let v = fd_speed(density, edge.v_free_mps, params.k_max, params.epsilon_v)?;
    Ok(edge.length_m / v)
}

/// Freshness-decayed travel time for an edge whose last observed density is
/// `density` and whose information is `age` seconds old. `age` may be
/// infinite (never observed), which yields the free-flow time.
pub fn effective_travel_time(
    edge: &Edge,
    density: f64,
    age: f64,
    params: &ModelParams,
) -> Result<f64, TrafficError> {
    if age < 0.0 || age.is_nan() {
        return Err(TrafficError::NegativeAge(age));
    }
    let t_dyn = dynamic_travel_time(edge, density, params)?;
    let t_free = edge.free_flow_time();
    if params.beta == 0.0 || age == 0.0 {
        return Ok(t_dyn);
    }
    let decay = (-params.beta * age).exp();
    Ok(((t_dyn - t_free) * decay + t_free).clamp(t_free, t_dyn))
}

/// Dense `|V| x |V|` snapshot of planning weights; `+inf` where no edge exists.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    data: Vec<f64>,
    t: f64,
}

impl WeightMatrix {
    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Evaluation time of the snapshot.
    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn get(&self, from: NodeId, to: NodeId) -> f64 {
        self.data[from.0 * self.n + to.0]
    }

    /// Finite entries as `(from, to, weight)`, row-major.
    pub fn finite_entries(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.data.iter().enumerate().filter(|(_, w)| w.is_finite()).map(|(i, &w)| {
            (NodeId(i / self.n), NodeId(i % self.n), w)
        })
    }

    /// Builds a matrix directly from per-edge weights. Used by tests and by
    /// callers that compute weights themselves.
    pub fn from_edge_weights(graph: &RoadGraph, weights: &[f64], t: f64) -> Self {
        let n = graph.node_count();
        let mut data = vec![f64::INFINITY; n * n];
        for (e, w) in graph.edges().iter().zip(weights) {
            data[e.from.0 * n + e.to.0] = *w;
        }
        Self { n, data, t }
    }

    /// Multiplies every finite entry by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|w| w * factor).collect(),
            t: self.t,
        }
    }
}

pub fn build_weight_matrix(
    graph: &RoadGraph,
    ledger: &TwinLedger,
    t: f64,
    params: &ModelParams,
) -> Result<WeightMatrix, TrafficError> {
    let mut weights = Vec::with_capacity(graph.edge_count());
    for (i, edge) in graph.edges().iter().enumerate() {
        let id = EdgeId(i);
        let density = ledger.state(id)?.density;
        let age = ledger.age(id, t)?;
        weights.push(effective_travel_time(edge, density, age, params)?);
    }
    Ok(WeightMatrix::from_edge_weights(graph, &weights, t))
}
