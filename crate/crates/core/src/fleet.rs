//! Vehicles, delivery tasks and the on-demand matching of the two.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeId, NodeId, RoadGraph};
use crate::router::{plan_exploration_route, Phase, RouteError, RoutePlan};
use crate::scenario::{TaskProcess, TaskSource};
use crate::traffic::WeightMatrix;

pub type TaskId = usize;
pub type VehicleId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FleetError {
    #[error("{0} node pool is empty")]
    EmptyPool(&'static str),
    #[error("task rate must be positive, got {0} per minute")]
    NonPositiveRate(f64),
    #[error("cannot draw distinct pickup and dropoff nodes from the pools")]
    DegeneratePools,
    #[error("vehicle {0} does not exist")]
    UnknownVehicle(VehicleId),
    #[error(transparent)]
    Route(#[from] RouteError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehiclePhase {
    Idle,
    ToPickup,
    Transporting,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Position {
    AtNode(NodeId),
    OnEdge { edge: EdgeId, offset_m: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleAgent {
    pub id: VehicleId,
    pub position: Position,
    pub phase: VehiclePhase,
    pub plan: Option<RoutePlan>,
    /// Index into `plan.nodes` of the last node reached.
    pub plan_cursor: usize,
    pub sensing_radius_m: f64,
    pub assigned_task: Option<TaskId>,
}

impl VehicleAgent {
    pub fn new(id: VehicleId, start: NodeId, sensing_radius_m: f64) -> Self {
        Self {
            id,
            position: Position::AtNode(start),
            phase: VehiclePhase::Idle,
            plan: None,
            plan_cursor: 0,
            sensing_radius_m,
            assigned_task: None,
        }
    }

    /// The node the vehicle stands on, if it is not mid-edge.
    pub fn node(&self) -> Option<NodeId> {
        match self.position {
            Position::AtNode(n) => Some(n),
            Position::OnEdge { .. } => None,
        }
    }

    /// Fraction of the current edge already traveled; `None` at a node.
    pub fn fraction(&self, graph: &RoadGraph) -> Option<f64> {
        match self.position {
            Position::AtNode(_) => None,
            Position::OnEdge { edge, offset_m } => {
                Some(offset_m / graph.edges()[edge.0].length_m)
            }
        }
    }

    pub fn coordinates(&self, graph: &RoadGraph) -> (f64, f64) {
        match self.position {
            Position::AtNode(n) => graph.position(n),
            Position::OnEdge { edge, offset_m } => graph.point_on_edge(edge, offset_m),
        }
    }

    pub fn set_plan(&mut self, plan: RoutePlan) {
        self.plan = Some(plan);
        self.plan_cursor = 0;
    }

    /// Next node on the plan after the current one.
    pub fn next_hop(&self) -> Option<NodeId> {
        self.plan
            .as_ref()
            .and_then(|p| p.nodes.get(self.plan_cursor + 1).copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryTask {
    pub id: TaskId,
    pub pickup: NodeId,
    pub dropoff: NodeId,
    pub arrival_t: f64,
    pub assigned_t: Option<f64>,
    pub pickup_t: Option<f64>,
    pub complete_t: Option<f64>,
    pub vehicle: Option<VehicleId>,
}

impl DeliveryTask {
    pub fn new(id: TaskId, pickup: NodeId, dropoff: NodeId, arrival_t: f64) -> Self {
        Self {
            id,
            pickup,
            dropoff,
            arrival_t,
            assigned_t: None,
            pickup_t: None,
            complete_t: None,
            vehicle: None,
        }
    }

    /// Timestamps present so far are non-decreasing in lifecycle order.
    pub fn lifecycle_ordered(&self) -> bool {
        let stamps = [Some(self.arrival_t), self.assigned_t, self.pickup_t, self.complete_t];
        let present: Vec<f64> = stamps.iter().map_while(|s| *s).collect();
        let no_gaps = stamps[present.len()..].iter().all(Option::is_none);
        no_gaps && present.windows(2).all(|w| w[0] <= w[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentPolicy {
    /// Idle vehicle with the smallest pickup-leg plan cost; ties go to the
    /// lowest vehicle id.
    #[default]
    NearestCost,
    /// Lowest-id idle vehicle that can reach the pickup.
    FirstIdle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub task: TaskId,
    pub vehicle: VehicleId,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FleetEvent {
    NodeArrival { vehicle: VehicleId, node: NodeId, t: f64 },
    Pickup { vehicle: VehicleId, task: TaskId, t: f64 },
    Completion { vehicle: VehicleId, task: TaskId, t: f64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FleetState {
    pub vehicles: Vec<VehicleAgent>,
    pub pending: VecDeque<DeliveryTask>,
    pub in_service: BTreeMap<TaskId, DeliveryTask>,
    pub completed: Vec<DeliveryTask>,
}

impl FleetState {
    pub fn new(vehicles: Vec<VehicleAgent>) -> Self {
        Self {
            vehicles,
            ..Self::default()
        }
    }

    pub fn enqueue(&mut self, task: DeliveryTask) {
        self.pending.push_back(task);
    }

    pub fn task_count(&self) -> usize {
        self.pending.len() + self.in_service.len() + self.completed.len()
    }

    pub fn has_idle_vehicle(&self) -> bool {
        self.vehicles.iter().any(|v| v.phase == VehiclePhase::Idle)
    }

    /// Tries to match the task at the head of the pending queue. With no
    /// idle vehicle (or none that can reach the pickup) nothing changes.
    pub fn assign_next(
        &mut self,
        graph: &RoadGraph,
        weights: &WeightMatrix,
        t: f64,
        policy: AssignmentPolicy,
    ) -> Result<Option<(Assignment, RoutePlan)>, FleetError> {
        let Some(task) = self.pending.front() else {
            return Ok(None);
        };
        let pickup = task.pickup;
        let mut best: Option<(VehicleId, RoutePlan)> = None;
        for (idx, vehicle) in self.vehicles.iter().enumerate() {
            if vehicle.phase != VehiclePhase::Idle {
                continue;
            }
            let Some(at) = vehicle.node() else { continue };
            let plan = match plan_exploration_route(graph, weights, at, pickup) {
                Ok(plan) => plan,
                Err(RouteError::Unreachable { .. }) => continue,
                Err(e) => return Err(e.into()),
            };
            let take = match &best {
                None => true,
                Some((_, incumbent)) => {
                    policy == AssignmentPolicy::NearestCost
                        && plan.total_cost < incumbent.total_cost
                }
            };
            if take {
                best = Some((idx, plan));
            }
        }
        let Some((idx, plan)) = best else {
            return Ok(None);
        };

        let mut task = self.pending.pop_front().expect("checked above");
        task.assigned_t = Some(t);
        task.vehicle = Some(self.vehicles[idx].id);
        let assignment = Assignment {
            task: task.id,
            vehicle: self.vehicles[idx].id,
            cost: plan.total_cost,
        };
        let vehicle = &mut self.vehicles[idx];
        vehicle.phase = VehiclePhase::ToPickup;
        vehicle.assigned_task = Some(task.id);
        vehicle.set_plan(plan.clone());
        self.in_service.insert(task.id, task);
        Ok(Some((assignment, plan)))
    }

    /// Lifecycle transitions for a vehicle standing on `node` at time `t`:
    /// boarding at the pickup node, alighting at the dropoff node. Boarding
    /// clears the plan; the caller supplies the passenger-leg plan.
    pub fn handle_node(&mut self, vehicle_idx: usize, t: f64) -> Option<FleetEvent> {
        let vehicle = &mut self.vehicles[vehicle_idx];
        let node = vehicle.node()?;
        let task_id = vehicle.assigned_task?;
        let task = self.in_service.get_mut(&task_id)?;
        match vehicle.phase {
            VehiclePhase::ToPickup if node == task.pickup => {
                task.pickup_t = Some(t);
                vehicle.phase = VehiclePhase::Transporting;
                vehicle.plan = None;
                vehicle.plan_cursor = 0;
                Some(FleetEvent::Pickup {
                    vehicle: vehicle.id,
                    task: task_id,
                    t,
                })
            }
            VehiclePhase::Transporting if node == task.dropoff => {
                task.complete_t = Some(t);
                vehicle.phase = VehiclePhase::Idle;
                vehicle.plan = None;
                vehicle.plan_cursor = 0;
                vehicle.assigned_task = None;
                let done = self.in_service.remove(&task_id).expect("present");
                self.completed.push(done);
                Some(FleetEvent::Completion {
                    vehicle: self.vehicles[vehicle_idx].id,
                    task: task_id,
                    t,
                })
            }
            _ => None,
        }
    }

    /// Target node of the vehicle's current leg.
    pub fn leg_target(&self, vehicle_idx: usize) -> Option<(Phase, NodeId)> {
        let vehicle = &self.vehicles[vehicle_idx];
        let task = self.in_service.get(&vehicle.assigned_task?)?;
        match vehicle.phase {
            VehiclePhase::Idle => None,
            VehiclePhase::ToPickup => Some((Phase::ToPickup, task.pickup)),
            VehiclePhase::Transporting => Some((Phase::Transporting, task.dropoff)),
        }
    }

    /// Every task, in id order, regardless of state.
    pub fn all_tasks(&self) -> Vec<DeliveryTask> {
        let mut all: Vec<DeliveryTask> = self
            .pending
            .iter()
            .chain(self.in_service.values())
            .chain(self.completed.iter())
            .cloned()
            .collect();
        all.sort_by_key(|t| t.id);
        all
    }
}

/// Outcome of moving a vehicle for at most a given time budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Advance {
    /// Time actually spent moving.
    pub elapsed: f64,
    /// Node reached, if the vehicle arrived at the end of its edge.
    pub arrived: Option<NodeId>,
}

/// Moves `vehicle` along its current edge (departing along its plan if it
/// stands on a node) for at most `budget` seconds, at `speed(edge)` m/s.
/// Stops on reaching the next node so the caller can handle arrivals and
/// replanning; the unused budget is `budget - elapsed`.
pub fn advance_vehicle(
    vehicle: &mut VehicleAgent,
    budget: f64,
    graph: &RoadGraph,
    speed: impl Fn(EdgeId) -> f64,
) -> Advance {
    let stay = Advance {
        elapsed: 0.0,
        arrived: None,
    };
    if budget <= 0.0 || vehicle.phase == VehiclePhase::Idle {
        return stay;
    }
    if let Position::AtNode(at) = vehicle.position {
        let Some(next) = vehicle.next_hop() else {
            return stay;
        };
        let Some(edge) = graph.edge_between(at, next) else {
            return stay;
        };
        vehicle.position = Position::OnEdge { edge, offset_m: 0.0 };
    }
    let Position::OnEdge { edge, offset_m } = vehicle.position else {
        unreachable!("vehicle departed above");
    };
    let e = &graph.edges()[edge.0];
    let v = speed(edge);
    let needed = (e.length_m - offset_m) / v;
    if needed <= budget {
        vehicle.position = Position::AtNode(e.to);
        if let Some(plan) = &vehicle.plan {
            if plan.nodes.get(vehicle.plan_cursor + 1) == Some(&e.to) {
                vehicle.plan_cursor += 1;
            }
        }
        Advance {
            elapsed: needed,
            arrived: Some(e.to),
        }
    } else {
        vehicle.position = Position::OnEdge {
            edge,
            offset_m: offset_m + v * budget,
        };
        Advance {
            elapsed: budget,
            arrived: None,
        }
    }
}

/// Draws the full, time-ordered task list for a run.
pub fn generate_tasks<R: Rng + ?Sized>(
    source: &TaskSource,
    rng: &mut R,
) -> Result<Vec<DeliveryTask>, FleetError> {
    match source {
        TaskSource::Explicit(list) => Ok(list
            .iter()
            .enumerate()
            .map(|(i, s)| DeliveryTask::new(i, NodeId(s.pickup), NodeId(s.dropoff), s.arrival_s))
            .collect()),
        TaskSource::Process(process) => poisson_tasks(process, rng),
    }
}

fn poisson_tasks<R: Rng + ?Sized>(
    process: &TaskProcess,
    rng: &mut R,
) -> Result<Vec<DeliveryTask>, FleetError> {
    if !(process.rate_per_min > 0.0) {
        return Err(FleetError::NonPositiveRate(process.rate_per_min));
    }
    if process.pickup_nodes.is_empty() {
        return Err(FleetError::EmptyPool("pickup"));
    }
    if process.dropoff_nodes.is_empty() {
        return Err(FleetError::EmptyPool("dropoff"));
    }
    if process.dropoff_nodes.len() == 1 && process.pickup_nodes == process.dropoff_nodes {
        return Err(FleetError::DegeneratePools);
    }

    let gap = Exp::new(process.rate_per_min / 60.0).expect("positive rate");
    let mut tasks = Vec::new();
    let mut t = 0.0;
    loop {
        t += gap.sample(rng);
        if t > process.horizon_s {
            break;
        }
        let pickup = process.pickup_nodes[rng.random_range(0..process.pickup_nodes.len())];
        let candidates: Vec<usize> = process
            .dropoff_nodes
            .iter()
            .copied()
            .filter(|&d| d != pickup)
            .collect();
        if candidates.is_empty() {
            return Err(FleetError::DegeneratePools);
        }
        let dropoff = candidates[rng.random_range(0..candidates.len())];
        tasks.push(DeliveryTask::new(tasks.len(), NodeId(pickup), NodeId(dropoff), t));
    }
    Ok(tasks)
}
