//! Static road network: intersections, directed road segments and adjacency.
//!
//! The graph is immutable once built. Outgoing edges of every node are kept
//! sorted by target node id; that order is the global tie-break order used by
//! the router and by background traffic, so seeded runs reproduce exactly.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense node index in `0..node_count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

/// Dense edge index in `0..edge_count`, in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub id: NodeId,
    /// Planar position in meters. Only used for sensing geometry.
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub length_m: f64,
    pub lanes: u32,
    pub v_free_mps: f64,
}

impl Edge {
    /// Traversal time at free-flow speed, `length / v_free`.
    pub fn free_flow_time(&self) -> f64 {
        self.length_m / self.v_free_mps
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error("invalid road graph:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<EdgeId>>,
    // Row-major |V|x|V| lookup of the unique edge per ordered pair.
    pair_index: Vec<Option<EdgeId>>,
}

impl RoadGraph {
    /// Builds and validates a graph. Every violated invariant is reported,
    /// not only the first one.
    pub fn new(mut nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        nodes.sort_by_key(|n| n.id);
        let problems = validate(&nodes, &edges);
        if !problems.is_empty() {
            return Err(GraphError::Invalid(problems));
        }

        let n = nodes.len();
        let mut adjacency = vec![Vec::new(); n];
        let mut pair_index = vec![None; n * n];
        for (i, e) in edges.iter().enumerate() {
            adjacency[e.from.0].push(EdgeId(i));
            pair_index[e.from.0 * n + e.to.0] = Some(EdgeId(i));
        }
        for out in &mut adjacency {
            out.sort_by_key(|id| edges[id.0].to);
        }

        Ok(Self {
            nodes,
            edges,
            adjacency,
            pair_index,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.0 < self.nodes.len()
    }

    pub fn node(&self, node: NodeId) -> Result<&Node, GraphError> {
        self.nodes.get(node.0).ok_or(GraphError::UnknownNode(node))
    }

    pub fn edge(&self, edge: EdgeId) -> Result<&Edge, GraphError> {
        self.edges.get(edge.0).ok_or(GraphError::UnknownEdge(edge))
    }

    /// Outgoing edges of `node`, ordered by target node id ascending.
    pub fn outgoing(&self, node: NodeId) -> Result<&[EdgeId], GraphError> {
        self.adjacency
            .get(node.0)
            .map(Vec::as_slice)
            .ok_or(GraphError::UnknownNode(node))
    }

    /// The unique edge `from -> to`, if any.
    pub fn edge_between(&self, from: NodeId, to: NodeId) -> Option<EdgeId> {
        let n = self.nodes.len();
        if from.0 >= n || to.0 >= n {
            return None;
        }
        self.pair_index[from.0 * n + to.0]
    }

    pub fn position(&self, node: NodeId) -> (f64, f64) {
        let n = &self.nodes[node.0];
        (n.x, n.y)
    }

    /// Point at `offset_m` along `edge`, linearly interpolated between the
    /// endpoint positions.
    pub fn point_on_edge(&self, edge: EdgeId, offset_m: f64) -> (f64, f64) {
        let e = &self.edges[edge.0];
        let (x0, y0) = self.position(e.from);
        let (x1, y1) = self.position(e.to);
        let s = (offset_m / e.length_m).clamp(0.0, 1.0);
        (x0 + s * (x1 - x0), y0 + s * (y1 - y0))
    }

    /// Nodes reachable from `start` along directed edges (including `start`).
    pub fn reachable_from(&self, start: NodeId) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        if !self.contains(start) {
            return seen;
        }
        let mut queue = VecDeque::from([start]);
        seen[start.0] = true;
        while let Some(u) = queue.pop_front() {
            for id in &self.adjacency[u.0] {
                let v = self.edges[id.0].to;
                if !seen[v.0] {
                    seen[v.0] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }
}

fn validate(nodes: &[Node], edges: &[Edge]) -> Vec<String> {
    let mut problems = Vec::new();
    let n = nodes.len();
    if n == 0 {
        problems.push("graph has no nodes".to_string());
        return problems;
    }

    let mut declared = vec![false; n];
    for node in nodes {
        if node.id.0 >= n {
            problems.push(format!(
                "node id {} is outside the dense range 0..{}",
                node.id, n
            ));
        } else if declared[node.id.0] {
            problems.push(format!("node {} declared more than once", node.id));
        } else {
            declared[node.id.0] = true;
        }
        if !node.x.is_finite() || !node.y.is_finite() {
            problems.push(format!("node {} has a non-finite position", node.id));
        }
    }
    for (i, ok) in declared.iter().enumerate() {
        if !ok {
            problems.push(format!("node {i} is missing (ids must be dense)"));
        }
    }

    let mut seen_pairs = std::collections::HashSet::new();
    for (i, e) in edges.iter().enumerate() {
        for end in [e.from, e.to] {
            if end.0 >= n {
                problems.push(format!("edge {i} references undeclared node {end}"));
            }
        }
        if e.from == e.to {
            problems.push(format!("edge {i} is a self-loop on node {}", e.from));
        }
        if !(e.length_m > 0.0 && e.length_m.is_finite()) {
            problems.push(format!("edge {i} has nonpositive length {}", e.length_m));
        }
        if e.lanes == 0 {
            problems.push(format!("edge {i} has zero lanes"));
        }
        if !(e.v_free_mps > 0.0 && e.v_free_mps.is_finite()) {
            problems.push(format!(
                "edge {i} has nonpositive free-flow speed {}",
                e.v_free_mps
            ));
        }
        if !seen_pairs.insert((e.from, e.to)) {
            problems.push(format!(
                "edge {i} duplicates the ordered pair {} -> {}",
                e.from, e.to
            ));
        }
    }
    if !problems.is_empty() {
        return problems;
    }

    // Weak connectivity over the undirected view.
    let mut undirected = vec![Vec::new(); n];
    for e in edges {
        undirected[e.from.0].push(e.to.0);
        undirected[e.to.0].push(e.from.0);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &undirected[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    let isolated: Vec<String> = (0..n)
        .filter(|&i| !seen[i])
        .map(|i| i.to_string())
        .collect();
    if !isolated.is_empty() {
        problems.push(format!(
            "graph is not weakly connected; disconnected nodes: {}",
            isolated.join(", ")
        ));
    }
    problems
}
