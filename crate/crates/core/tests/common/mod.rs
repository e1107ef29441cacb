#![allow(dead_code)]

use aoi_fleet::graph::{Edge, Node, NodeId, RoadGraph};
use aoi_fleet::traffic::WeightMatrix;
use proptest::prelude::*;

/// A weakly connected random digraph with per-edge positive weights.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    pub graph: RoadGraph,
    pub weights: Vec<f64>,
}

impl WeightedGraph {
    pub fn matrix(&self) -> WeightMatrix {
        WeightMatrix::from_edge_weights(&self.graph, &self.weights, 0.0)
    }
}

fn build(n: usize, pairs: Vec<(usize, usize, f64)>) -> WeightedGraph {
    let nodes = (0..n)
        .map(|i| Node {
            id: NodeId(i),
            x: 10.0 * i as f64,
            y: 0.0,
        })
        .collect();
    let mut edges = Vec::new();
    let mut weights = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (a, b, w) in pairs {
        if a != b && seen.insert((a, b)) {
            edges.push(Edge {
                from: NodeId(a),
                to: NodeId(b),
                length_m: 100.0,
                lanes: 1,
                v_free_mps: 10.0,
            });
            weights.push(w);
        }
    }
    WeightedGraph {
        graph: RoadGraph::new(nodes, edges).expect("spanning tree keeps it connected"),
        weights,
    }
}

/// Up to `max_nodes` nodes: a randomly oriented spanning tree plus extra
/// random edges, weights in `[1, 100)` (or integer weights to force ties).
pub fn weighted_graph(max_nodes: usize) -> impl Strategy<Value = WeightedGraph> {
    (2..=max_nodes, any::<bool>()).prop_flat_map(|(n, integer)| {
        let weight = move || {
            (1.0f64..100.0).prop_map(move |w| if integer { w.floor() } else { w })
        };
        let tree = proptest::collection::vec((0..n, any::<bool>(), weight()), n - 1);
        let extra = proptest::collection::vec((0..n, 0..n, weight()), 0..=n * (n - 1));
        (tree, extra).prop_map(move |(tree, extra)| {
            let mut pairs = Vec::new();
            for (i, (parent, forward, w)) in tree.into_iter().enumerate() {
                let child = i + 1;
                let parent = parent % child;
                pairs.push(if forward { (parent, child, w) } else { (child, parent, w) });
            }
            pairs.extend(extra);
            build(n, pairs)
        })
    })
}

/// Exhaustive minimum over all simple paths; `None` when unreachable.
pub fn brute_force_cost(g: &WeightedGraph, from: usize, to: usize) -> Option<f64> {
    fn dfs(
        g: &WeightedGraph,
        at: usize,
        to: usize,
        cost: f64,
        visited: &mut Vec<bool>,
        best: &mut Option<f64>,
    ) {
        if at == to {
            *best = Some(best.map_or(cost, |b: f64| b.min(cost)));
            return;
        }
        for &e in g.graph.outgoing(NodeId(at)).unwrap() {
            let next = g.graph.edges()[e.0].to.0;
            if !visited[next] {
                visited[next] = true;
                dfs(g, next, to, cost + g.weights[e.0], visited, best);
                visited[next] = false;
            }
        }
    }
    let mut visited = vec![false; g.graph.node_count()];
    visited[from] = true;
    let mut best = None;
    dfs(g, from, to, 0.0, &mut visited, &mut best);
    best
}

pub fn is_simple(path: &[NodeId]) -> bool {
    let mut seen = std::collections::BTreeSet::new();
    path.iter().all(|n| seen.insert(*n))
}

pub fn path_cost(weights: &WeightMatrix, path: &[NodeId]) -> f64 {
    path.windows(2).map(|w| weights.get(w[0], w[1])).sum()
}

pub fn scenario_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}
