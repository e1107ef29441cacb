//! Scenario documents: a TOML description of the road network, sensors,
//! fleet, demand, congestion and model parameters.
//!
//! Loading fills in every default, so serializing a loaded scenario writes
//! the complete, explicit configuration back out. Unknown fields are
//! rejected. The field reference lives in `docs/scenario-schema.md`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fleet::AssignmentPolicy;
use crate::graph::{Edge, EdgeId, GraphError, Node, NodeId, RoadGraph};
use crate::router::ReplanPolicy;
use crate::traffic::ModelParams;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("scenario validation failed:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Directed edge reference by endpoint node ids, written `[from, to]`.
pub type EdgeRef = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub from: usize,
    pub to: usize,
    pub length_m: f64,
    #[serde(default = "one_lane")]
    pub lanes: u32,
    pub v_free_mps: f64,
}

fn one_lane() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rsu {
    pub node: usize,
    /// Edges refreshed by this unit on every tick.
    pub coverage: Vec<EdgeRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub id: usize,
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub arrival_s: f64,
    pub pickup: usize,
    pub dropoff: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskProcess {
    pub rate_per_min: f64,
    pub horizon_s: f64,
    /// Defaults to every node.
    #[serde(default)]
    pub pickup_nodes: Vec<usize>,
    /// Defaults to every node.
    #[serde(default)]
    pub dropoff_nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSource {
    Explicit(Vec<TaskSpec>),
    Process(TaskProcess),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    /// Derived from the run seed, so background behavior varies per seed.
    #[default]
    Run,
    /// The same background behavior for every run seed.
    Fixed(u64),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundTraffic {
    #[serde(default)]
    pub count: usize,
    #[serde(default)]
    pub seed_policy: SeedPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CongestionEvent {
    pub edges: Vec<EdgeRef>,
    pub start_s: f64,
    pub end_s: f64,
    /// Imposed density as a fraction of jam density.
    pub density_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwinInit {
    /// Nothing observed at t = 0.
    #[default]
    Unobserved,
    /// Every edge observed with ground truth at t = 0.
    Snapshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationSharing {
    /// Vehicle observations reach the shared twin.
    #[default]
    Shared,
    /// Each vehicle plans on RSU data plus its own observations only.
    Private,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default = "defaults::beta")]
    pub beta_per_s: f64,
    #[serde(default = "defaults::k_max")]
    pub k_max_veh_per_m_per_lane: f64,
    #[serde(default = "defaults::sensing_radius")]
    pub sensing_radius_m: f64,
    #[serde(default = "defaults::dt")]
    pub dt_s: f64,
    #[serde(default = "defaults::horizon")]
    pub horizon_s: f64,
    #[serde(default = "defaults::epsilon_v")]
    pub epsilon_v_mps: f64,
    #[serde(default = "defaults::aoi_cap")]
    pub aoi_cap_s: f64,
    #[serde(default)]
    pub replan: ReplanPolicy,
    #[serde(default)]
    pub assignment: AssignmentPolicy,
    #[serde(default)]
    pub twin_init: TwinInit,
    #[serde(default)]
    pub observation_sharing: ObservationSharing,
    /// Boundaries between the reporting windows.
    #[serde(default = "defaults::window_breaks")]
    pub window_breaks_s: Vec<f64>,
}

mod defaults {
    pub fn beta() -> f64 {
        0.05
    }
    pub fn k_max() -> f64 {
        0.15
    }
    pub fn sensing_radius() -> f64 {
        50.0
    }
    pub fn dt() -> f64 {
        0.5
    }
    pub fn horizon() -> f64 {
        1500.0
    }
    pub fn epsilon_v() -> f64 {
        0.1
    }
    pub fn aoi_cap() -> f64 {
        300.0
    }
    pub fn window_breaks() -> Vec<f64> {
        vec![300.0, 900.0]
    }
}

impl Default for Params {
    fn default() -> Self {
        Self {
            beta_per_s: defaults::beta(),
            k_max_veh_per_m_per_lane: defaults::k_max(),
            sensing_radius_m: defaults::sensing_radius(),
            dt_s: defaults::dt(),
            horizon_s: defaults::horizon(),
            epsilon_v_mps: defaults::epsilon_v(),
            aoi_cap_s: defaults::aoi_cap(),
            replan: ReplanPolicy::default(),
            assignment: AssignmentPolicy::default(),
            twin_init: TwinInit::default(),
            observation_sharing: ObservationSharing::default(),
            window_breaks_s: defaults::window_breaks(),
        }
    }
}

impl Params {
    pub fn model(&self) -> ModelParams {
        ModelParams {
            beta: self.beta_per_s,
            k_max: self.k_max_veh_per_m_per_lane,
            epsilon_v: self.epsilon_v_mps,
        }
    }

    /// Number of ticks covering the horizon.
    pub fn tick_count(&self) -> usize {
        (self.horizon_s / self.dt_s).round() as usize
    }
}

/// Everything in a scenario except the road network itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub rsus: Vec<Rsu>,
    pub vehicles: Vec<VehicleSpec>,
    pub tasks: TaskSource,
    pub background_traffic: BackgroundTraffic,
    pub congestion: Vec<CongestionEvent>,
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    #[serde(default)]
    name: String,
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
    #[serde(default)]
    rsus: Vec<Rsu>,
    #[serde(default)]
    vehicles: Vec<VehicleSpec>,
    tasks: TaskSource,
    #[serde(default)]
    background_traffic: BackgroundTraffic,
    #[serde(default)]
    congestion: Vec<CongestionEvent>,
    #[serde(default)]
    params: Params,
}

pub fn load_scenario(source: &str) -> Result<(RoadGraph, ScenarioConfig), ScenarioError> {
    let doc: Document =
        toml::from_str(source).map_err(|e| ScenarioError::Parse(e.to_string()))?;

    let nodes = doc
        .nodes
        .iter()
        .map(|n| Node {
            id: NodeId(n.id),
            x: n.x,
            y: n.y,
        })
        .collect();
    let edges = doc
        .edges
        .iter()
        .map(|e| Edge {
            from: NodeId(e.from),
            to: NodeId(e.to),
            length_m: e.length_m,
            lanes: e.lanes,
            v_free_mps: e.v_free_mps,
        })
        .collect();
    let graph = match RoadGraph::new(nodes, edges) {
        Ok(g) => g,
        Err(GraphError::Invalid(problems)) => return Err(ScenarioError::Invalid(problems)),
        Err(other) => return Err(ScenarioError::Invalid(vec![other.to_string()])),
    };

    let mut config = ScenarioConfig {
        name: doc.name,
        rsus: doc.rsus,
        vehicles: doc.vehicles,
        tasks: doc.tasks,
        background_traffic: doc.background_traffic,
        congestion: doc.congestion,
        params: doc.params,
    };
    fill_defaults(&graph, &mut config);
    validate_scenario(&graph, &config)?;
    Ok((graph, config))
}

/// Re-checks a configuration, e.g. after command-line overrides.
pub fn validate_scenario(graph: &RoadGraph, config: &ScenarioConfig) -> Result<(), ScenarioError> {
    let problems = validate(graph, config);
    if problems.is_empty() {
        Ok(())
    } else {
        Err(ScenarioError::Invalid(problems))
    }
}

pub fn load_scenario_file(path: &Path) -> Result<(RoadGraph, ScenarioConfig), ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_scenario(&text)
}

/// Serializes a scenario with every field explicit.
pub fn write_scenario(graph: &RoadGraph, config: &ScenarioConfig) -> String {
    let doc = Document {
        name: config.name.clone(),
        nodes: graph
            .nodes()
            .iter()
            .map(|n| NodeRecord {
                id: n.id.0,
                x: n.x,
                y: n.y,
            })
            .collect(),
        edges: graph
            .edges()
            .iter()
            .map(|e| EdgeRecord {
                from: e.from.0,
                to: e.to.0,
                length_m: e.length_m,
                lanes: e.lanes,
                v_free_mps: e.v_free_mps,
            })
            .collect(),
        rsus: config.rsus.clone(),
        vehicles: config.vehicles.clone(),
        tasks: config.tasks.clone(),
        background_traffic: config.background_traffic.clone(),
        congestion: config.congestion.clone(),
        params: config.params.clone(),
    };
    toml::to_string(&doc).expect("scenario documents always serialize")
}

/// Resolves `[from, to]` references to edge ids.
pub fn resolve_edges(graph: &RoadGraph, refs: &[EdgeRef]) -> Result<Vec<EdgeId>, String> {
    refs.iter()
        .map(|&(a, b)| {
            graph
                .edge_between(NodeId(a), NodeId(b))
                .ok_or_else(|| format!("no edge {a} -> {b}"))
        })
        .collect()
}

fn fill_defaults(graph: &RoadGraph, config: &mut ScenarioConfig) {
    if let TaskSource::Process(p) = &mut config.tasks {
        let all: Vec<usize> = (0..graph.node_count()).collect();
        if p.pickup_nodes.is_empty() {
            p.pickup_nodes = all.clone();
        }
        if p.dropoff_nodes.is_empty() {
            p.dropoff_nodes = all;
        }
    }
    config.vehicles.sort_by_key(|v| v.id);
}

fn validate(graph: &RoadGraph, config: &ScenarioConfig) -> Vec<String> {
    let mut problems = Vec::new();
    let n = graph.node_count();
    let node_ok = |id: usize| id < n;

    for (i, rsu) in config.rsus.iter().enumerate() {
        if !node_ok(rsu.node) {
            problems.push(format!("rsus[{i}] sits on undeclared node {}", rsu.node));
        }
        if let Err(e) = resolve_edges(graph, &rsu.coverage) {
            problems.push(format!("rsus[{i}].coverage: {e}"));
        }
    }

    let mut seen = std::collections::BTreeSet::new();
    for (i, v) in config.vehicles.iter().enumerate() {
        if !seen.insert(v.id) {
            problems.push(format!("vehicles[{i}]: duplicate vehicle id {}", v.id));
        }
        if !node_ok(v.start) {
            problems.push(format!("vehicles[{i}] starts on undeclared node {}", v.start));
        }
    }

    let (pickups, dropoffs): (Vec<usize>, Vec<usize>) = match &config.tasks {
        TaskSource::Explicit(list) => {
            let mut last = f64::NEG_INFINITY;
            for (i, t) in list.iter().enumerate() {
                for (what, id) in [("pickup", t.pickup), ("dropoff", t.dropoff)] {
                    if !node_ok(id) {
                        problems.push(format!("tasks.explicit[{i}].{what}: undeclared node {id}"));
                    }
                }
                if t.pickup == t.dropoff {
                    problems.push(format!("tasks.explicit[{i}]: pickup equals dropoff"));
                }
                if !(t.arrival_s >= 0.0 && t.arrival_s.is_finite()) {
                    problems.push(format!("tasks.explicit[{i}].arrival_s must be >= 0"));
                }
                if t.arrival_s < last {
                    problems.push(format!("tasks.explicit[{i}] arrives before its predecessor"));
                }
                last = t.arrival_s;
            }
            (
                list.iter().map(|t| t.pickup).collect(),
                list.iter().map(|t| t.dropoff).collect(),
            )
        }
        TaskSource::Process(p) => {
            if !(p.rate_per_min > 0.0 && p.rate_per_min.is_finite()) {
                problems.push(format!("tasks.process.rate_per_min must be > 0, got {}", p.rate_per_min));
            }
            if !(p.horizon_s >= 0.0 && p.horizon_s.is_finite()) {
                problems.push("tasks.process.horizon_s must be >= 0".to_string());
            }
            for (what, pool) in [("pickup_nodes", &p.pickup_nodes), ("dropoff_nodes", &p.dropoff_nodes)] {
                for &id in pool {
                    if !node_ok(id) {
                        problems.push(format!("tasks.process.{what}: undeclared node {id}"));
                    }
                }
            }
            let distinct_pair = p
                .pickup_nodes
                .iter()
                .any(|a| p.dropoff_nodes.iter().any(|b| a != b));
            if !distinct_pair {
                problems.push("tasks.process pools admit no pickup != dropoff pair".to_string());
            }
            (p.pickup_nodes.clone(), p.dropoff_nodes.clone())
        }
    };

    for (i, c) in config.congestion.iter().enumerate() {
        if let Err(e) = resolve_edges(graph, &c.edges) {
            problems.push(format!("congestion[{i}].edges: {e}"));
        }
        if !(c.density_fraction > 0.0 && c.density_fraction <= 1.0) {
            problems.push(format!(
                "congestion[{i}].density_fraction must be in (0, 1], got {}",
                c.density_fraction
            ));
        }
        if !(c.start_s < c.end_s) {
            problems.push(format!("congestion[{i}]: start_s must precede end_s"));
        }
    }

    let p = &config.params;
    if !(p.beta_per_s >= 0.0 && p.beta_per_s.is_finite()) {
        problems.push(format!("params.beta_per_s must be >= 0, got {}", p.beta_per_s));
    }
    if !(p.k_max_veh_per_m_per_lane > 0.0 && p.k_max_veh_per_m_per_lane.is_finite()) {
        problems.push("params.k_max_veh_per_m_per_lane must be > 0".to_string());
    }
    if !(p.sensing_radius_m > 0.0) {
        problems.push("params.sensing_radius_m must be > 0".to_string());
    }
    if !(p.dt_s > 0.0 && p.dt_s.is_finite()) {
        problems.push("params.dt_s must be > 0".to_string());
    } else if !(p.horizon_s >= 0.0 && p.horizon_s.is_finite()) {
        problems.push("params.horizon_s must be >= 0".to_string());
    } else if ((p.horizon_s / p.dt_s).round() * p.dt_s - p.horizon_s).abs() > 1e-6 {
        problems.push("params.horizon_s must be a whole number of dt_s steps".to_string());
    }
    let min_v_free = graph
        .edges()
        .iter()
        .map(|e| e.v_free_mps)
        .fold(f64::INFINITY, f64::min);
    if !(p.epsilon_v_mps > 0.0 && p.epsilon_v_mps < min_v_free) {
        problems.push(format!(
            "params.epsilon_v_mps must lie in (0, {min_v_free}), got {}",
            p.epsilon_v_mps
        ));
    }
    if !(p.aoi_cap_s > 0.0) {
        problems.push("params.aoi_cap_s must be > 0".to_string());
    }
    if let ReplanPolicy::Interval { interval_s } = p.replan {
        if !(interval_s > 0.0) {
            problems.push("params.replan.interval.interval_s must be > 0".to_string());
        }
    }
    if p.window_breaks_s.windows(2).any(|w| w[0] >= w[1])
        || p.window_breaks_s.iter().any(|b| !(*b > 0.0))
    {
        problems.push("params.window_breaks_s must be positive and strictly increasing".to_string());
    }
    if p.horizon_s > 0.0 && p.window_breaks_s.iter().any(|b| *b >= p.horizon_s) {
        problems.push(format!(
            "params.window_breaks_s must lie inside the horizon ({} s)",
            p.horizon_s
        ));
    }

    // Reachability only makes sense on a structurally valid scenario.
    if problems.is_empty() {
        let mut unique_pickups = pickups.clone();
        unique_pickups.sort_unstable();
        unique_pickups.dedup();
        for v in &config.vehicles {
            let reach = graph.reachable_from(NodeId(v.start));
            for &s in &unique_pickups {
                if !reach[s] {
                    problems.push(format!(
                        "pickup node {s} is unreachable from vehicle {} start node {}",
                        v.id, v.start
                    ));
                }
            }
        }
        // Vehicles end up at dropoff nodes, so pickups must be reachable from there too.
        let mut unique_dropoffs = dropoffs.clone();
        unique_dropoffs.sort_unstable();
        unique_dropoffs.dedup();
        for &s in &unique_pickups {
            let reach = graph.reachable_from(NodeId(s));
            for &d in &unique_dropoffs {
                if !reach[d] {
                    problems.push(format!("dropoff node {d} is unreachable from pickup node {s}"));
                }
            }
        }
        for &d in &unique_dropoffs {
            let reach = graph.reachable_from(NodeId(d));
            for &s in &unique_pickups {
                if !reach[s] {
                    problems.push(format!("pickup node {s} is unreachable from dropoff node {d}"));
                }
            }
        }
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
nodes = [{ id = 0, x = 0.0, y = 0.0 }, { id = 1, x = 100.0, y = 0.0 }]
edges = [{ from = 0, to = 1, length_m = 100.0, v_free_mps = 10.0 }]
[tasks]
explicit = []
"#;

    #[test]
    fn minimal_document_loads_with_defaults() {
        let (g, c) = load_scenario(MINIMAL).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edges()[0].lanes, 1);
        assert_eq!(c.params, Params::default());
        let text = write_scenario(&g, &c);
        assert!(text.contains("beta_per_s = 0.05"));
        assert!(text.contains("aoi_cap_s = 300.0"));
    }

    #[test]
    fn undeclared_node_is_named() {
        let doc = MINIMAL.replace("from = 0, to = 1", "from = 0, to = 7");
        let err = load_scenario(&doc).unwrap_err();
        assert!(matches!(&err, ScenarioError::Invalid(p) if p.iter().any(|m| m.contains("node 7"))));
    }

    #[test]
    fn unknown_fields_are_rejected_with_location() {
        let doc = MINIMAL.replace("v_free_mps = 10.0", "v_free_mps = 10.0, colour = \"red\"");
        let err = load_scenario(&doc).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ScenarioError::Parse(_)));
        assert!(msg.contains("colour"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn collects_every_problem() {
        let doc = r#"
nodes = [{ id = 0, x = 0.0, y = 0.0 }, { id = 1, x = 100.0, y = 0.0 }]
edges = [{ from = 0, to = 1, length_m = 100.0, v_free_mps = 10.0 }]
vehicles = [{ id = 0, start = 1 }]
[tasks.process]
rate_per_min = -1.0
horizon_s = 60.0
[[congestion]]
edges = [[1, 0]]
start_s = 10.0
end_s = 5.0
density_fraction = 1.5
[params]
dt_s = 0.0
"#;
        let ScenarioError::Invalid(problems) = load_scenario(doc).unwrap_err() else {
            panic!("expected validation error");
        };
        for needle in ["rate_per_min", "no edge 1 -> 0", "density_fraction", "start_s", "dt_s"] {
            assert!(problems.iter().any(|p| p.contains(needle)), "missing {needle}: {problems:?}");
        }
    }

    #[test]
    fn unreachable_pickup_is_reported() {
        let doc = r#"
nodes = [{ id = 0, x = 0.0, y = 0.0 }, { id = 1, x = 100.0, y = 0.0 }]
edges = [{ from = 0, to = 1, length_m = 100.0, v_free_mps = 10.0 }]
vehicles = [{ id = 0, start = 1 }]
[tasks]
explicit = [{ arrival_s = 0.0, pickup = 0, dropoff = 1 }]
"#;
        let ScenarioError::Invalid(problems) = load_scenario(doc).unwrap_err() else {
            panic!("expected validation error");
        };
        assert!(problems.iter().any(|p| p.contains("pickup node 0 is unreachable")));
    }
}
