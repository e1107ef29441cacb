//! Fixed-step simulation of a service fleet on a road network with a
//! digital twin fed by roadside units and by the vehicles themselves.
//!
//! Each tick runs, in order: clock advance, background traffic, congestion
//! overrides, task arrivals, RSU observations, per-vehicle sensing /
//! replanning / movement, task assignment, metric sampling.

pub mod truth;

use std::collections::hash_map::DefaultHasher;
use std::collections::VecDeque;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::fleet::{
    advance_vehicle, generate_tasks, DeliveryTask, FleetEvent, FleetState, VehicleAgent,
    VehiclePhase,
};
use crate::graph::{EdgeId, NodeId, RoadGraph};
use crate::ledger::TwinLedger;
use crate::metrics::{throughput_windows, Windows, WindowedThroughput};
use crate::router::{maybe_replan, plan_exploration_route, plan_transport_route, Phase, RoutePlan};
use crate::scenario::{resolve_edges, ObservationSharing, ScenarioConfig, SeedPolicy, TwinInit};
use crate::traffic::{build_weight_matrix, ModelParams};

use truth::{GroundTruthTraffic, ResolvedCongestion};

const BACKGROUND_STREAM: u64 = 1;
const TASK_STREAM: u64 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("t={t}s, {stage}: {message}")]
    Step {
        t: f64,
        stage: &'static str,
        message: String,
    },
}

trait AtStep<T> {
    fn at(self, t: f64, stage: &'static str) -> Result<T, SimError>;
}

impl<T, E: fmt::Display> AtStep<T> for Result<T, E> {
    fn at(self, t: f64, stage: &'static str) -> Result<T, SimError> {
        self.map_err(|e| SimError::Step {
            t,
            stage,
            message: e.to_string(),
        })
    }
}

/// Routing method under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Pickup legs plan on freshness-decayed weights.
    Proposal,
    /// Both legs plan on the latest observed travel times (`beta = 0`).
    Conventional,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Proposal => "proposal",
            Method::Conventional => "conventional",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.label())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "proposal" => Ok(Method::Proposal),
            "conventional" => Ok(Method::Conventional),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TaskArrival,
    Assigned,
    Plan,
    NodeArrival,
    Pickup,
    Complete,
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub subject: usize,
    pub payload: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AoiSample {
    pub t: f64,
    pub avg_aoi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightRow {
    pub t: f64,
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerRow {
    pub t: f64,
    pub edge: usize,
    pub density: f64,
    pub age: f64,
}

/// Optional diagnostics collected during a run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    /// Dump the pickup-leg weight matrix every this many seconds.
    pub weights_every_s: Option<f64>,
    /// Dump per-edge twin state every this many seconds.
    pub ledger_every_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub scenario: String,
    pub seed: u64,
    pub method: Method,
    pub dt: f64,
    pub horizon: f64,
    pub aoi_series: Vec<AoiSample>,
    /// Every generated task with its lifecycle timestamps, by id.
    pub tasks: Vec<DeliveryTask>,
    pub events: Vec<Event>,
    pub windows: Vec<WindowedThroughput>,
    /// Per-tick fingerprint of background vehicle positions.
    pub background_trace: Vec<u64>,
    /// Tasks exactly as drawn from the task stream.
    pub task_stream: Vec<DeliveryTask>,
    pub weight_rows: Vec<WeightRow>,
    pub ledger_rows: Vec<LedgerRow>,
}

impl SimulationResult {
    pub fn completed(&self) -> usize {
        self.tasks.iter().filter(|t| t.complete_t.is_some()).count()
    }
}

/// Seeded generator for a named sub-stream of a run.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Full mutable state of one simulation instance.
pub struct World<'a> {
    graph: &'a RoadGraph,
    config: &'a ScenarioConfig,
    method: Method,
    options: RunOptions,
    tick: usize,
    model: ModelParams,
    pub truth: GroundTruthTraffic,
    pub fleet: FleetState,
    /// Server-side twin; used for assignment and the freshness metric.
    pub twin: TwinLedger,
    /// Per-vehicle ledgers when observations are not shared.
    pub private: Vec<TwinLedger>,
    upcoming: VecDeque<DeliveryTask>,
    task_stream: Vec<DeliveryTask>,
    rsu_edges: Vec<EdgeId>,
    congestion: Vec<ResolvedCongestion>,
    background_rng: ChaCha8Rng,
    pub events: Vec<Event>,
    pub aoi_series: Vec<AoiSample>,
    pub background_trace: Vec<u64>,
    weight_rows: Vec<WeightRow>,
    ledger_rows: Vec<LedgerRow>,
}

impl<'a> World<'a> {
    pub fn new(
        graph: &'a RoadGraph,
        config: &'a ScenarioConfig,
        seed: u64,
        method: Method,
        options: RunOptions,
    ) -> Result<Self, SimError> {
        let params = &config.params;
        let scenario_err = |e: String| SimError::Scenario(e);

        let mut rsu_edges = Vec::new();
        for rsu in &config.rsus {
            rsu_edges.extend(resolve_edges(graph, &rsu.coverage).map_err(scenario_err)?);
        }
        rsu_edges.sort();
        rsu_edges.dedup();
        let congestion = config
            .congestion
            .iter()
            .map(|c| Ok(ResolvedCongestion::new(c, resolve_edges(graph, &c.edges)?)))
            .collect::<Result<Vec<_>, String>>()
            .map_err(scenario_err)?;

        let background_seed = match config.background_traffic.seed_policy {
            SeedPolicy::Run => seed,
            SeedPolicy::Fixed(s) => s,
        };
        let mut background_rng = stream_rng(background_seed, BACKGROUND_STREAM);
        let truth = GroundTruthTraffic::new(
            graph,
            config.background_traffic.count,
            params.k_max_veh_per_m_per_lane,
            &mut background_rng,
        );

        let tasks = generate_tasks(&config.tasks, &mut stream_rng(seed, TASK_STREAM))
            .map_err(|e| SimError::Scenario(e.to_string()))?;

        let mut vehicles: Vec<VehicleAgent> = config
            .vehicles
            .iter()
            .map(|v| VehicleAgent::new(v.id, NodeId(v.start), params.sensing_radius_m))
            .collect();
        vehicles.sort_by_key(|v| v.id);

        let mut model = params.model();
        if method == Method::Conventional {
            model.beta = 0.0;
        }
        let twin = TwinLedger::new(
            graph.edge_count(),
            params.k_max_veh_per_m_per_lane,
            params.aoi_cap_s,
        );
        let private = match params.observation_sharing {
            ObservationSharing::Shared => Vec::new(),
            ObservationSharing::Private => vec![twin.clone(); vehicles.len()],
        };

        let mut world = Self {
            graph,
            config,
            method,
            options,
            tick: 0,
            model,
            truth,
            fleet: FleetState::new(vehicles),
            twin,
            private,
            upcoming: tasks.iter().cloned().collect(),
            task_stream: tasks,
            rsu_edges,
            congestion,
            background_rng,
            events: Vec::new(),
            aoi_series: Vec::new(),
            background_trace: Vec::new(),
            weight_rows: Vec::new(),
            ledger_rows: Vec::new(),
        };
        world.initialize()?;
        Ok(world)
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.config.params.dt_s
    }

    /// Tasks whose arrival time has been reached so far.
    pub fn released_task_count(&self) -> usize {
        self.task_stream.len() - self.upcoming.len()
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn graph(&self) -> &RoadGraph {
        self.graph
    }

    /// Effective model parameters for this run (conventional forces `beta = 0`).
    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    fn initialize(&mut self) -> Result<(), SimError> {
        let t = 0.0;
        self.truth.apply_congestion(&self.congestion, t);
        self.sync_cav_counts();
        if self.config.params.twin_init == TwinInit::Snapshot {
            let all: Vec<EdgeId> = (0..self.graph.edge_count()).map(EdgeId).collect();
            self.twin
                .observe_edges(&all, t, self.truth.densities())
                .at(t, "twin snapshot")?;
            for ledger in &mut self.private {
                ledger
                    .observe_edges(&all, t, self.truth.densities())
                    .at(t, "twin snapshot")?;
            }
        }
        self.observe_rsus(t)?;
        for idx in 0..self.fleet.vehicles.len() {
            self.sense(idx, t)?;
        }
        self.sample(t)
    }

    /// Advances the world by one step of `dt`.
    pub fn tick(&mut self) -> Result<(), SimError> {
        let dt = self.config.params.dt_s;
        self.tick += 1;
        let t = self.time();
        let tick_start = t - dt;

        self.truth
            .background_traffic_step(self.graph, dt, &self.model, &mut self.background_rng);
        self.truth.apply_congestion(&self.congestion, t);

        while self.upcoming.front().is_some_and(|task| task.arrival_t <= t) {
            let task = self.upcoming.pop_front().expect("checked");
            self.log(
                task.arrival_t,
                EventKind::TaskArrival,
                task.id,
                json!({ "pickup": task.pickup, "dropoff": task.dropoff }),
            );
            self.fleet.enqueue(task);
        }

        self.observe_rsus(t)?;

        for idx in 0..self.fleet.vehicles.len() {
            self.step_vehicle(idx, tick_start, dt, t)?;
        }
        self.sync_cav_counts();

        self.assignment_pass(t)?;
        self.sample(t)
    }

    fn observe_rsus(&mut self, t: f64) -> Result<(), SimError> {
        let truth = self.truth.densities();
        self.twin
            .observe_edges(&self.rsu_edges, t, truth)
            .at(t, "rsu observation")?;
        for ledger in &mut self.private {
            ledger
                .observe_edges(&self.rsu_edges, t, truth)
                .at(t, "rsu observation")?;
        }
        Ok(())
    }

    fn sense(&mut self, idx: usize, t: f64) -> Result<(), SimError> {
        let vehicle = &self.fleet.vehicles[idx];
        let position = vehicle.coordinates(self.graph);
        let radius = vehicle.sensing_radius_m;
        let ledger = match self.config.params.observation_sharing {
            ObservationSharing::Shared => &mut self.twin,
            ObservationSharing::Private => &mut self.private[idx],
        };
        ledger
            .apply_sensing_footprint(self.graph, position, radius, t, self.truth.densities())
            .at(t, "vehicle sensing")?;
        Ok(())
    }

    fn planning_ledger(&self, idx: usize) -> &TwinLedger {
        match self.config.params.observation_sharing {
            ObservationSharing::Shared => &self.twin,
            ObservationSharing::Private => &self.private[idx],
        }
    }

    /// Plans the current leg of vehicle `idx` from the node it stands on.
    fn plan_leg(&self, idx: usize, t: f64) -> Result<Option<RoutePlan>, SimError> {
        let Some(at) = self.fleet.vehicles[idx].node() else {
            return Ok(None);
        };
        let Some((phase, target)) = self.fleet.leg_target(idx) else {
            return Ok(None);
        };
        let ledger = self.planning_ledger(idx);
        let plan = match phase {
            Phase::ToPickup => {
                let weights =
                    build_weight_matrix(self.graph, ledger, t, &self.model).at(t, "weights")?;
                plan_exploration_route(self.graph, &weights, at, target).at(t, "pickup route")?
            }
            Phase::Transporting => {
                plan_transport_route(self.graph, ledger, t, at, target, &self.model)
                    .at(t, "transport route")?
            }
        };
        Ok(Some(plan))
    }

    fn install_plan(&mut self, idx: usize, plan: RoutePlan, t: f64) {
        let vehicle = &self.fleet.vehicles[idx];
        let unchanged = vehicle
            .plan
            .as_ref()
            .is_some_and(|old| old.phase == plan.phase && old.nodes[vehicle.plan_cursor..] == plan.nodes[..]);
        if !unchanged {
            self.log_plan(vehicle.id, &plan, t);
        }
        self.fleet.vehicles[idx].set_plan(plan);
    }

    fn log_plan(&mut self, vehicle: usize, plan: &RoutePlan, t: f64) {
        self.log(
            t,
            EventKind::Plan,
            vehicle,
            json!({ "phase": plan.phase, "nodes": plan.nodes, "cost": plan.total_cost }),
        );
    }

    fn step_vehicle(&mut self, idx: usize, tick_start: f64, dt: f64, t: f64) -> Result<(), SimError> {
        let counted_edge = match self.fleet.vehicles[idx].position {
            crate::fleet::Position::OnEdge { edge, .. } => Some(edge),
            crate::fleet::Position::AtNode(_) => None,
        };
        let mut elapsed = 0.0;
        loop {
            self.sense(idx, t)?;
            let now = tick_start + elapsed;
            if self.fleet.vehicles[idx].node().is_some() {
                match self.fleet.handle_node(idx, now) {
                    Some(FleetEvent::Pickup { vehicle, task, t: at }) => {
                        self.log(at, EventKind::Pickup, task, json!({ "vehicle": vehicle }));
                        if let Some(plan) = self.plan_leg(idx, t)? {
                            self.install_plan(idx, plan, t);
                        }
                    }
                    Some(FleetEvent::Completion { vehicle, task, t: at }) => {
                        self.log(at, EventKind::Complete, task, json!({ "vehicle": vehicle }));
                        return Ok(());
                    }
                    _ => {
                        let policy = self.config.params.replan;
                        if maybe_replan(&self.fleet.vehicles[idx], t, policy) {
                            if let Some(plan) = self.plan_leg(idx, t)? {
                                self.install_plan(idx, plan, t);
                            }
                        }
                    }
                }
                if self.fleet.vehicles[idx].phase == VehiclePhase::Idle
                    || self.fleet.vehicles[idx].next_hop().is_none()
                    || dt - elapsed <= 1e-12
                {
                    return Ok(());
                }
            }

            let graph = self.graph;
            let truth = &self.truth;
            let model = &self.model;
            let step = advance_vehicle(&mut self.fleet.vehicles[idx], dt - elapsed, graph, |e| {
                truth.cav_speed(graph, e, model, Some(e) == counted_edge)
            });
            elapsed += step.elapsed;
            match step.arrived {
                Some(node) => {
                    let vehicle = self.fleet.vehicles[idx].id;
                    self.log(
                        tick_start + elapsed,
                        EventKind::NodeArrival,
                        vehicle,
                        json!({ "node": node }),
                    );
                }
                None => {
                    self.sense(idx, t)?;
                    return Ok(());
                }
            }
        }
    }

    fn assignment_pass(&mut self, t: f64) -> Result<(), SimError> {
        if self.fleet.pending.is_empty() || !self.fleet.has_idle_vehicle() {
            return Ok(());
        }
        let weights = build_weight_matrix(self.graph, &self.twin, t, &self.model).at(t, "weights")?;
        let policy = self.config.params.assignment;
        while let Some((assignment, plan)) = self
            .fleet
            .assign_next(self.graph, &weights, t, policy)
            .at(t, "assignment")?
        {
            self.log(
                t,
                EventKind::Assigned,
                assignment.task,
                json!({ "vehicle": assignment.vehicle, "cost": assignment.cost }),
            );
            self.log_plan(assignment.vehicle, &plan, t);
        }
        Ok(())
    }

    fn sync_cav_counts(&mut self) {
        let mut counts = vec![0u32; self.graph.edge_count()];
        for v in &self.fleet.vehicles {
            if let crate::fleet::Position::OnEdge { edge, .. } = v.position {
                counts[edge.0] += 1;
            }
        }
        self.truth.set_cav_counts(counts);
    }

    fn sample(&mut self, t: f64) -> Result<(), SimError> {
        self.twin.advance_clock(t);
        let avg_aoi = self.twin.spatial_average_aoi(t).at(t, "aoi metric")?;
        self.aoi_series.push(AoiSample { t, avg_aoi });

        let mut h = DefaultHasher::new();
        for v in &self.truth.background {
            v.edge.hash(&mut h);
            v.offset_m.to_bits().hash(&mut h);
        }
        self.background_trace.push(h.finish());

        if self.due(self.options.weights_every_s) {
            let weights =
                build_weight_matrix(self.graph, &self.twin, t, &self.model).at(t, "weights")?;
            self.weight_rows
                .extend(weights.finite_entries().map(|(i, j, w)| WeightRow {
                    t,
                    from: i.0,
                    to: j.0,
                    weight: w,
                }));
        }
        if self.due(self.options.ledger_every_s) {
            for (i, state) in self.twin.states().iter().enumerate() {
                let age = self.twin.age(EdgeId(i), t).at(t, "ledger dump")?;
                self.ledger_rows.push(LedgerRow {
                    t,
                    edge: i,
                    density: state.density,
                    age,
                });
            }
        }
        Ok(())
    }

    fn due(&self, every: Option<f64>) -> bool {
        let Some(every) = every else { return false };
        let stride = ((every / self.config.params.dt_s).round() as usize).max(1);
        self.tick % stride == 0
    }

    fn log(&mut self, t: f64, kind: EventKind, subject: usize, payload: serde_json::Value) {
        self.events.push(Event {
            t,
            kind,
            subject,
            payload,
        });
    }

    pub fn into_result(self, seed: u64) -> SimulationResult {
        let params = &self.config.params;
        let tasks = self.fleet.all_tasks();
        let mut result = SimulationResult {
            scenario: self.config.name.clone(),
            seed,
            method: self.method,
            dt: params.dt_s,
            horizon: params.horizon_s,
            aoi_series: self.aoi_series,
            tasks: merge_unreleased(tasks, self.upcoming),
            events: self.events,
            windows: Vec::new(),
            background_trace: self.background_trace,
            task_stream: self.task_stream,
            weight_rows: self.weight_rows,
            ledger_rows: self.ledger_rows,
        };
        if let Ok(windows) = Windows::from_breaks(&params.window_breaks_s, params.horizon_s) {
            result.windows = throughput_windows(&result, &windows).unwrap_or_default();
        }
        result
    }
}

fn merge_unreleased(mut tasks: Vec<DeliveryTask>, upcoming: VecDeque<DeliveryTask>) -> Vec<DeliveryTask> {
    tasks.extend(upcoming);
    tasks.sort_by_key(|t| t.id);
    tasks
}

/// Runs a scenario to its horizon.
pub fn run(
    graph: &RoadGraph,
    config: &ScenarioConfig,
    seed: u64,
    method: Method,
) -> Result<SimulationResult, SimError> {
    run_with(graph, config, seed, method, RunOptions::default())
}

pub fn run_with(
    graph: &RoadGraph,
    config: &ScenarioConfig,
    seed: u64,
    method: Method,
    options: RunOptions,
) -> Result<SimulationResult, SimError> {
    let mut world = World::new(graph, config, seed, method, options)?;
    for _ in 0..config.params.tick_count() {
        world.tick()?;
    }
    Ok(world.into_result(seed))
}
