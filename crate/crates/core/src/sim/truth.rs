//! Ground-truth traffic: background vehicles doing a random walk over the
//! network, per-edge occupancy counts and congestion overrides.
//!
//! Background vehicles move according to the density of other background
//! vehicles only, so their trajectories do not depend on what the service
//! fleet does. Observed densities count every vehicle.

use rand::{Rng, RngExt};

use crate::graph::{EdgeId, RoadGraph};
use crate::scenario::CongestionEvent;
use crate::traffic::{fd_speed, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundVehicle {
    pub edge: EdgeId,
    pub offset_m: f64,
}

/// A congestion event with edge references resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedCongestion {
    pub edges: Vec<EdgeId>,
    pub start_s: f64,
    pub end_s: f64,
    pub density_fraction: f64,
}

impl ResolvedCongestion {
    pub fn new(event: &CongestionEvent, edges: Vec<EdgeId>) -> Self {
        Self {
            edges,
            start_s: event.start_s,
            end_s: event.end_s,
            density_fraction: event.density_fraction,
        }
    }

    pub fn active_at(&self, t: f64) -> bool {
        self.start_s <= t && t < self.end_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTraffic {
    pub background: Vec<BackgroundVehicle>,
    background_counts: Vec<u32>,
    cav_counts: Vec<u32>,
    overrides: Vec<Option<f64>>,
    density: Vec<f64>,
    capacity: Vec<f64>,
    k_max: f64,
}

impl GroundTruthTraffic {
    /// Places `count` background vehicles on uniformly drawn edges at
    /// uniformly drawn offsets.
    pub fn new<R: Rng + ?Sized>(graph: &RoadGraph, count: usize, k_max: f64, rng: &mut R) -> Self {
        let m = graph.edge_count();
        let background = (0..count)
            .map(|_| {
                let edge = EdgeId(rng.random_range(0..m));
                let offset_m = rng.random::<f64>() * graph.edges()[edge.0].length_m;
                BackgroundVehicle { edge, offset_m }
            })
            .collect();
        let capacity = graph
            .edges()
            .iter()
            .map(|e| e.length_m * f64::from(e.lanes))
            .collect();
        let mut truth = Self {
            background,
            background_counts: vec![0; m],
            cav_counts: vec![0; m],
            overrides: vec![None; m],
            density: vec![0.0; m],
            capacity,
            k_max,
        };
        truth.recount_background();
        truth.refresh_density();
        truth
    }

    /// Current ground-truth density per edge, vehicles per meter per lane.
    pub fn densities(&self) -> &[f64] {
        &self.density
    }

    pub fn density(&self, edge: EdgeId) -> f64 {
        self.density[edge.0]
    }

    pub fn background_counts(&self) -> &[u32] {
        &self.background_counts
    }

    pub fn cav_counts(&self) -> &[u32] {
        &self.cav_counts
    }

    pub fn override_density(&self, edge: EdgeId) -> Option<f64> {
        self.overrides[edge.0]
    }

    /// Density implied by `vehicles` on `edge`, or the active override.
    pub fn density_for(&self, edge: EdgeId, vehicles: u32) -> f64 {
        match self.overrides[edge.0] {
            Some(k) => k,
            None => (f64::from(vehicles) / self.capacity[edge.0]).min(self.k_max),
        }
    }

    /// Speed experienced by a service vehicle on `edge`, given the other
    /// vehicles there (it does not count itself).
    pub fn cav_speed(&self, graph: &RoadGraph, edge: EdgeId, params: &ModelParams, on_edge: bool) -> f64 {
        let mut others = self.background_counts[edge.0] + self.cav_counts[edge.0];
        if on_edge {
            others = others.saturating_sub(1);
        }
        let k = self.density_for(edge, others);
        fd_speed(k, graph.edges()[edge.0].v_free_mps, params.k_max, params.epsilon_v)
            .expect("densities are clipped to jam density")
    }

    fn background_speed(&self, graph: &RoadGraph, edge: EdgeId, params: &ModelParams, on_edge: bool) -> f64 {
        let mut others = self.background_counts[edge.0];
        if on_edge {
            others = others.saturating_sub(1);
        }
        let k = self.density_for(edge, others);
        fd_speed(k, graph.edges()[edge.0].v_free_mps, params.k_max, params.epsilon_v)
            .expect("densities are clipped to jam density")
    }

    /// Advances every background vehicle by `dt`. Speeds are evaluated from
    /// the counts at the start of the step. On reaching a node a vehicle
    /// turns onto a uniformly drawn outgoing edge; at a dead end it waits.
    pub fn background_traffic_step<R: Rng + ?Sized>(
        &mut self,
        graph: &RoadGraph,
        dt: f64,
        params: &ModelParams,
        rng: &mut R,
    ) {
        let mut moved = self.background.clone();
        for vehicle in &mut moved {
            let mut remaining = dt;
            let mut on_start_edge = true;
            loop {
                let e = &graph.edges()[vehicle.edge.0];
                let v = self.background_speed(graph, vehicle.edge, params, on_start_edge);
                let needed = (e.length_m - vehicle.offset_m) / v;
                if needed > remaining {
                    vehicle.offset_m += v * remaining;
                    break;
                }
                remaining -= needed;
                let out = graph.outgoing(e.to).expect("edge endpoints exist");
                match choose_next_edge(out, rng) {
                    Some(next) => {
                        vehicle.edge = next;
                        vehicle.offset_m = 0.0;
                        on_start_edge = false;
                    }
                    None => {
                        vehicle.offset_m = e.length_m;
                        break;
                    }
                }
            }
        }
        self.background = moved;
        self.recount_background();
        self.refresh_density();
    }

    /// Applies the congestion events active at `t`. Overlapping events on one
    /// edge impose the largest fraction; edges outside every active window
    /// revert to their vehicle-derived density.
    pub fn apply_congestion(&mut self, events: &[ResolvedCongestion], t: f64) {
        self.overrides.iter_mut().for_each(|o| *o = None);
        for event in events.iter().filter(|e| e.active_at(t)) {
            let k = event.density_fraction * self.k_max;
            for edge in &event.edges {
                let slot = &mut self.overrides[edge.0];
                *slot = Some(slot.map_or(k, |prev| prev.max(k)));
            }
        }
        self.refresh_density();
    }

    /// Replaces the service-vehicle occupancy counts.
    pub fn set_cav_counts(&mut self, counts: Vec<u32>) {
        self.cav_counts = counts;
        self.refresh_density();
    }

    fn recount_background(&mut self) {
        self.background_counts = count_background(&self.background, self.capacity.len());
    }

    fn refresh_density(&mut self) {
        for i in 0..self.density.len() {
            let n = self.background_counts[i] + self.cav_counts[i];
            self.density[i] = self.density_for(EdgeId(i), n);
        }
    }
}

pub fn count_background(vehicles: &[BackgroundVehicle], edge_count: usize) -> Vec<u32> {
    let mut counts = vec![0; edge_count];
    for v in vehicles {
        counts[v.edge.0] += 1;
    }
    counts
}

/// Uniform choice among `out`; `None` for a dead end.
pub fn choose_next_edge<R: Rng + ?Sized>(out: &[EdgeId], rng: &mut R) -> Option<EdgeId> {
    match out.len() {
        0 => None,
        n => Some(out[rng.random_range(0..n)]),
    }
}
