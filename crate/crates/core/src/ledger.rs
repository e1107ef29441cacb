//! Digital-twin state per road segment: last observed density and the time
//! it was observed. Ages derive from those timestamps.

use thiserror::Error;

use crate::graph::{EdgeId, RoadGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LedgerError {
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error("density {density} on edge {edge} is outside [0, {k_max}]")]
    DensityOutOfRange { edge: EdgeId, density: f64, k_max: f64 },
    #[error("time regression on edge {edge}: observed at {last}, got {t}")]
    TimeRegression { edge: EdgeId, last: f64, t: f64 },
    #[error("ledger has no edges")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeTwinState {
    /// Vehicles per meter per lane.
    pub density: f64,
    /// Simulation time of the last observation; `None` if never observed.
    pub last_update: Option<f64>,
}

impl Default for EdgeTwinState {
    fn default() -> Self {
        Self {
            density: 0.0,
            last_update: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwinLedger {
    states: Vec<EdgeTwinState>,
    clock: f64,
    k_max: f64,
    aoi_cap: f64,
    initial_age: f64,
}

impl TwinLedger {
    /// A ledger with nothing observed. Unobserved edges report an age of
    /// `aoi_cap`.
    pub fn new(edge_count: usize, k_max: f64, aoi_cap: f64) -> Self {
        Self {
            states: vec![EdgeTwinState::default(); edge_count],
            clock: 0.0,
            k_max,
            aoi_cap,
            initial_age: aoi_cap,
        }
    }

    /// Overrides the age reported for never-observed edges. `f64::INFINITY`
    /// makes them fully stale, which the weight model maps to free flow.
    pub fn with_initial_age(mut self, initial_age: f64) -> Self {
        self.initial_age = initial_age;
        self
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn k_max(&self) -> f64 {
        self.k_max
    }

    pub fn aoi_cap(&self) -> f64 {
        self.aoi_cap
    }

    pub fn states(&self) -> &[EdgeTwinState] {
        &self.states
    }

    pub fn state(&self, edge: EdgeId) -> Result<&EdgeTwinState, LedgerError> {
        self.states.get(edge.0).ok_or(LedgerError::UnknownEdge(edge))
    }

    /// Advances the ledger clock without observing anything.
    pub fn advance_clock(&mut self, t: f64) {
        if t > self.clock {
            self.clock = t;
        }
    }

    pub fn record_observation(
        &mut self,
        edge: EdgeId,
        t: f64,
        density: f64,
    ) -> Result<(), LedgerError> {
        let k_max = self.k_max;
        let state = self
            .states
            .get_mut(edge.0)
            .ok_or(LedgerError::UnknownEdge(edge))?;
        if !(0.0..=k_max).contains(&density) {
            return Err(LedgerError::DensityOutOfRange {
                edge,
                density,
                k_max,
            });
        }
        if let Some(last) = state.last_update {
            if t < last {
                return Err(LedgerError::TimeRegression { edge, last, t });
            }
        }
        state.density = density;
        state.last_update = Some(t);
        self.advance_clock(t);
        Ok(())
    }

    /// Age of the information held for `edge` at time `t`, `t - last_update`.
    pub fn age(&self, edge: EdgeId, t: f64) -> Result<f64, LedgerError> {
        let state = self.state(edge)?;
        match state.last_update {
            Some(last) if t < last => Err(LedgerError::TimeRegression { edge, last, t }),
            Some(last) => Ok(t - last),
            None => Ok(self.initial_age),
        }
    }

    /// Observes each listed edge with its ground-truth density.
    pub fn observe_edges(
        &mut self,
        edges: &[EdgeId],
        t: f64,
        truth: &[f64],
    ) -> Result<(), LedgerError> {
        for &edge in edges {
            let k = *truth.get(edge.0).ok_or(LedgerError::UnknownEdge(edge))?;
            self.record_observation(edge, t, k)?;
        }
        Ok(())
    }

    /// Observes every edge whose two endpoints both lie within `radius_m`
    /// of `position`. Returns the number of edges refreshed.
    pub fn apply_sensing_footprint(
        &mut self,
        graph: &RoadGraph,
        position: (f64, f64),
        radius_m: f64,
        t: f64,
        truth: &[f64],
    ) -> Result<usize, LedgerError> {
        let covered = sensing_footprint(graph, position, radius_m);
        self.observe_edges(&covered, t, truth)?;
        Ok(covered.len())
    }

    /// Mean age over all edges at time `t`, each age clipped to `aoi_cap`.
    pub fn spatial_average_aoi(&self, t: f64) -> Result<f64, LedgerError> {
        if self.states.is_empty() {
            return Err(LedgerError::Empty);
        }
        let mut sum = 0.0;
        for i in 0..self.states.len() {
            sum += self.age(EdgeId(i), t)?.min(self.aoi_cap);
        }
        Ok(sum / self.states.len() as f64)
    }
}

/// Edges with both endpoints inside the disc of `radius_m` around `position`.
pub fn sensing_footprint(graph: &RoadGraph, position: (f64, f64), radius_m: f64) -> Vec<EdgeId> {
    let r2 = radius_m * radius_m;
    let inside: Vec<bool> = graph
        .nodes()
        .iter()
        .map(|n| {
            let dx = n.x - position.0;
            let dy = n.y - position.1;
            dx * dx + dy * dy <= r2
        })
        .collect();
    graph
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, e)| inside[e.from.0] && inside[e.to.0])
        .map(|(i, _)| EdgeId(i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, Node, NodeId};

    fn ledger(edges: usize) -> TwinLedger {
        TwinLedger::new(edges, 0.2, 300.0)
    }

    #[test]
    fn observation_resets_age() {
        let mut l = ledger(5);
        l.record_observation(EdgeId(3), 10.0, 0.02).unwrap();
        assert_eq!(l.age(EdgeId(3), 10.0).unwrap(), 0.0);
        assert_eq!(l.age(EdgeId(3), 17.0).unwrap(), 7.0);
    }

    #[test]
    fn age_examples() {
        let mut l = ledger(2);
        l.record_observation(EdgeId(0), 0.0, 0.0).unwrap();
        assert_eq!(l.age(EdgeId(0), 0.0).unwrap(), 0.0);
        l.record_observation(EdgeId(1), 12.0, 0.0).unwrap();
        assert_eq!(l.age(EdgeId(1), 30.0).unwrap(), 18.0);
        assert_eq!(l.age(EdgeId(7), 30.0), Err(LedgerError::UnknownEdge(EdgeId(7))));
    }

    #[test]
    fn never_observed_edges_use_initial_age() {
        let l = ledger(1);
        assert_eq!(l.age(EdgeId(0), 5.0).unwrap(), 300.0);
        let stale = ledger(1).with_initial_age(f64::INFINITY);
        assert_eq!(stale.age(EdgeId(0), 5.0).unwrap(), f64::INFINITY);
        // Reporting stays finite.
        assert_eq!(stale.spatial_average_aoi(5.0).unwrap(), 300.0);
    }

    #[test]
    fn rejects_bad_observations() {
        let mut l = ledger(1);
        assert!(matches!(
            l.record_observation(EdgeId(0), 1.0, 0.3),
            Err(LedgerError::DensityOutOfRange { .. })
        ));
        assert!(matches!(
            l.record_observation(EdgeId(0), 1.0, -0.1),
            Err(LedgerError::DensityOutOfRange { .. })
        ));
        l.record_observation(EdgeId(0), 10.0, 0.1).unwrap();
        assert!(matches!(
            l.record_observation(EdgeId(0), 9.0, 0.1),
            Err(LedgerError::TimeRegression { .. })
        ));
        assert!(matches!(
            l.age(EdgeId(0), 9.0),
            Err(LedgerError::TimeRegression { .. })
        ));
    }

    #[test]
    fn spatial_average_examples() {
        let mut l = ledger(3);
        for i in 0..3 {
            l.record_observation(EdgeId(i), 4.0, 0.0).unwrap();
        }
        assert_eq!(l.spatial_average_aoi(4.0).unwrap(), 0.0);

        let mut l = ledger(3);
        l.record_observation(EdgeId(0), 8.0, 0.0).unwrap();
        l.record_observation(EdgeId(1), 6.0, 0.0).unwrap();
        l.record_observation(EdgeId(2), 4.0, 0.0).unwrap();
        assert_eq!(l.spatial_average_aoi(10.0).unwrap(), 4.0);

        let mut l = ledger(1);
        l.record_observation(EdgeId(0), 3.0, 0.0).unwrap();
        assert_eq!(l.spatial_average_aoi(10.0).unwrap(), 7.0);

        assert_eq!(ledger(0).spatial_average_aoi(0.0), Err(LedgerError::Empty));
    }

    #[test]
    fn footprint_requires_both_endpoints() {
        let nodes = vec![
            Node { id: NodeId(0), x: 0.0, y: 0.0 },
            Node { id: NodeId(1), x: 100.0, y: 0.0 },
            Node { id: NodeId(2), x: 300.0, y: 0.0 },
        ];
        let e = |a: usize, b: usize| Edge {
            from: NodeId(a),
            to: NodeId(b),
            length_m: 100.0,
            lanes: 1,
            v_free_mps: 10.0,
        };
        let g = RoadGraph::new(nodes, vec![e(0, 1), e(1, 0), e(1, 2), e(2, 1)]).unwrap();
        let truth = vec![0.01, 0.02, 0.03, 0.04];
        let mut l = ledger(4);
        let n = l
            .apply_sensing_footprint(&g, (0.0, 0.0), 150.0, 2.0, &truth)
            .unwrap();
        assert_eq!(n, 2);
        assert_eq!(l.age(EdgeId(0), 2.0).unwrap(), 0.0);
        assert_eq!(l.age(EdgeId(1), 2.0).unwrap(), 0.0);
        assert_eq!(l.state(EdgeId(1)).unwrap().density, 0.02);
        assert_eq!(l.state(EdgeId(2)).unwrap().last_update, None);

        let n = l
            .apply_sensing_footprint(&g, (0.0, 0.0), 0.1, 3.0, &truth)
            .unwrap();
        assert_eq!(n, 0);
    }
}
