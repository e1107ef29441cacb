//! Route planning for the two legs of a delivery.
//!
//! The empty (pickup) leg plans on freshness-decayed weights, which makes
//! segments with old information look cheaper and pulls vehicles through
//! them. The passenger leg plans on the latest observed travel times only
//! (`beta = 0`). Both legs run the same label-setting search over a weight
//! snapshot; among equal-cost paths the lexicographically smallest node
//! sequence wins.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fleet::VehicleAgent;
use crate::graph::{NodeId, RoadGraph};
use crate::ledger::TwinLedger;
use crate::traffic::{build_weight_matrix, ModelParams, TrafficError, WeightMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouteError {
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("node {to} is unreachable from node {from}")]
    Unreachable { from: NodeId, to: NodeId },
    #[error(transparent)]
    Traffic(#[from] TrafficError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    ToPickup,
    Transporting,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutePlan {
    pub nodes: Vec<NodeId>,
    /// Sum of snapshot weights along `nodes`, seconds.
    pub total_cost: f64,
    pub planned_at: f64,
    pub phase: Phase,
}

impl RoutePlan {
    pub fn origin(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn target(&self) -> NodeId {
        *self.nodes.last().expect("plans are never empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ReplanPolicy {
    /// Replan on every node arrival.
    EveryNode,
    /// Replan at a node once the current plan is at least this old.
    Interval { interval_s: f64 },
}

impl Default for ReplanPolicy {
    fn default() -> Self {
        Self::EveryNode
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Cost(f64);

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Minimum-cost path from `from` to `to` over the finite entries of
/// `weights`, restricted to graph edges. Returns the node sequence and its
/// cost. Weights must be strictly positive.
pub fn shortest_path(
    graph: &RoadGraph,
    weights: &WeightMatrix,
    from: NodeId,
    to: NodeId,
) -> Result<(Vec<NodeId>, f64), RouteError> {
    for node in [from, to] {
        if !graph.contains(node) {
            return Err(RouteError::UnknownNode(node));
        }
    }
    if from == to {
        return Ok((vec![from], 0.0));
    }

    let n = graph.node_count();
    // Each label carries its full path so equal-cost ties can be broken
    // lexicographically. Graphs here are small.
    let mut labels: Vec<Option<(f64, Vec<NodeId>)>> = vec![None; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    labels[from.0] = Some((0.0, vec![from]));
    heap.push(std::cmp::Reverse((Cost(0.0), from)));

    while let Some(std::cmp::Reverse((Cost(cost), u))) = heap.pop() {
        if settled[u.0] {
            continue;
        }
        settled[u.0] = true;
        if u == to {
            break;
        }
        let base = labels[u.0].clone().expect("queued nodes have labels").1;
        for edge_id in graph.outgoing(u).map_err(|_| RouteError::UnknownNode(u))? {
            let v = graph.edges()[edge_id.0].to;
            if settled[v.0] {
                continue;
            }
            let w = weights.get(u, v);
            if !w.is_finite() {
                continue;
            }
            let candidate = cost + w;
            let better = match &labels[v.0] {
                None => true,
                Some((best, path)) => {
                    candidate < *best
                        || (candidate == *best && lex_less_with(&base, v, path))
                }
            };
            if better {
                let mut path = base.clone();
                path.push(v);
                labels[v.0] = Some((candidate, path));
                heap.push(std::cmp::Reverse((Cost(candidate), v)));
            }
        }
    }

    match labels[to.0].take() {
        Some((cost, path)) if settled[to.0] => Ok((path, cost)),
        _ => Err(RouteError::Unreachable { from, to }),
    }
}

// Is `prefix ++ [last]` lexicographically smaller than `other`?
fn lex_less_with(prefix: &[NodeId], last: NodeId, other: &[NodeId]) -> bool {
    prefix
        .iter()
        .copied()
        .chain(std::iter::once(last))
        .cmp(other.iter().copied())
        == Ordering::Less
}

/// Pickup leg: minimum total decayed weight from the vehicle position `from`
/// to the pickup node.
pub fn plan_exploration_route(
    graph: &RoadGraph,
    weights: &WeightMatrix,
    from: NodeId,
    pickup: NodeId,
) -> Result<RoutePlan, RouteError> {
    let (nodes, total_cost) = shortest_path(graph, weights, from, pickup)?;
    Ok(RoutePlan {
        nodes,
        total_cost,
        planned_at: weights.time(),
        phase: Phase::ToPickup,
    })
}

/// Passenger leg: fastest path under the latest observed densities, i.e.
/// the same search with `beta` forced to zero.
pub fn plan_transport_route(
    graph: &RoadGraph,
    ledger: &TwinLedger,
    t: f64,
    pickup: NodeId,
    dropoff: NodeId,
    params: &ModelParams,
) -> Result<RoutePlan, RouteError> {
    let weights = build_weight_matrix(graph, ledger, t, &params.with_beta(0.0))?;
    let (nodes, total_cost) = shortest_path(graph, &weights, pickup, dropoff)?;
    Ok(RoutePlan {
        nodes,
        total_cost,
        planned_at: t,
        phase: Phase::Transporting,
    })
}

/// Whether `vehicle` should replan now. Replanning only happens at nodes.
pub fn maybe_replan(vehicle: &VehicleAgent, now: f64, policy: ReplanPolicy) -> bool {
    if vehicle.node().is_none() {
        return false;
    }
    let Some(plan) = &vehicle.plan else {
        return false;
    };
    match policy {
        ReplanPolicy::EveryNode => true,
        ReplanPolicy::Interval { interval_s } => now - plan.planned_at >= interval_s,
    }
}
