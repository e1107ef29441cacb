mod common;

use aoi_fleet::fleet::{Position, VehicleAgent};
use aoi_fleet::graph::{EdgeId, NodeId};
use aoi_fleet::ledger::TwinLedger;
use aoi_fleet::router::{
    maybe_replan, plan_exploration_route, plan_transport_route, shortest_path, Phase,
    ReplanPolicy, RouteError, RoutePlan,
};
use aoi_fleet::traffic::{build_weight_matrix, ModelParams, WeightMatrix};
use common::{brute_force_cost, is_simple, path_cost, weighted_graph, WeightedGraph};
use proptest::prelude::*;
use proptest::strategy::ValueTree;

const PARAMS: ModelParams = ModelParams {
    beta: 0.05,
    k_max: 0.15,
    epsilon_v: 0.1,
};

/// Lexicographically smallest minimum-cost simple path, by enumeration.
fn brute_force_path(g: &WeightedGraph, from: usize, to: usize) -> Option<Vec<NodeId>> {
    let best = brute_force_cost(g, from, to)?;
    let w = g.matrix();
    let mut found: Option<Vec<NodeId>> = None;
    let mut stack = vec![vec![NodeId(from)]];
    while let Some(path) = stack.pop() {
        let last = *path.last().unwrap();
        if last.0 == to {
            if path_cost(&w, &path) == best && found.as_ref().is_none_or(|f| path < *f) {
                found = Some(path);
            }
            continue;
        }
        for &e in g.graph.outgoing(last).unwrap() {
            let next = g.graph.edges()[e.0].to;
            if !path.contains(&next) {
                let mut p = path.clone();
                p.push(next);
                stack.push(p);
            }
        }
    }
    found
}

fn ledger_with(g: &WeightedGraph, history: &[(usize, f64, f64)]) -> TwinLedger {
    let mut ledger = TwinLedger::new(g.graph.edge_count(), PARAMS.k_max, 300.0);
    let mut sorted = history.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
    for (e, t, frac) in sorted {
        let edge = EdgeId(e % g.graph.edge_count());
        ledger.record_observation(edge, t, frac * PARAMS.k_max).unwrap();
    }
    ledger
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn matches_exhaustive_enumeration(g in weighted_graph(8), from in 0usize..8, to in 0usize..8) {
        let n = g.graph.node_count();
        let (from, to) = (from % n, to % n);
        let w = g.matrix();
        match (shortest_path(&g.graph, &w, NodeId(from), NodeId(to)), brute_force_cost(&g, from, to)) {
            (Ok((path, cost)), Some(best)) => {
                prop_assert!(is_simple(&path));
                prop_assert_eq!(path[0], NodeId(from));
                prop_assert_eq!(*path.last().unwrap(), NodeId(to));
                prop_assert_eq!(path_cost(&w, &path), cost);
                prop_assert!((cost - best).abs() <= 1e-9 * best.max(1.0), "{} vs {}", cost, best);
            }
            (Err(RouteError::Unreachable { .. }), None) => {}
            (got, want) => prop_assert!(false, "router {:?}, enumeration {:?}", got, want),
        }
    }

    #[test]
    fn ties_resolve_to_smallest_sequence(g in weighted_graph(6), from in 0usize..6, to in 0usize..6) {
        // Integer weights make equal-cost sums exact.
        let g = WeightedGraph { weights: g.weights.iter().map(|w| w.floor()).collect(), ..g };
        let n = g.graph.node_count();
        let (from, to) = (from % n, to % n);
        let got = shortest_path(&g.graph, &g.matrix(), NodeId(from), NodeId(to)).ok().map(|p| p.0);
        prop_assert_eq!(got, brute_force_path(&g, from, to));
    }

    #[test]
    fn scaling_weights_keeps_the_route(g in weighted_graph(8), from in 0usize..8, to in 0usize..8, k in -3i32..4, m in 1u32..20) {
        let n = g.graph.node_count();
        let (from, to) = (NodeId(from % n), NodeId(to % n));
        // Powers of two scale exactly; integer weights times integers too.
        let w = g.matrix();
        let base = shortest_path(&g.graph, &w, from, to).ok().map(|p| p.0);
        let scaled = shortest_path(&g.graph, &w.scaled(2f64.powi(k)), from, to).ok().map(|p| p.0);
        prop_assert_eq!(&base, &scaled);

        let gi = WeightedGraph { weights: g.weights.iter().map(|w| w.floor()).collect(), ..g.clone() };
        let wi = gi.matrix();
        let base = shortest_path(&gi.graph, &wi, from, to).ok().map(|p| p.0);
        let scaled = shortest_path(&gi.graph, &wi.scaled(f64::from(m)), from, to).ok().map(|p| p.0);
        prop_assert_eq!(base, scaled);
    }

    #[test]
    fn zero_beta_exploration_equals_transport(
        g in weighted_graph(8),
        history in proptest::collection::vec((0usize..64, 0.0f64..100.0, 0.0f64..=1.0), 0..20),
        from in 0usize..8,
        to in 0usize..8,
        t_extra in 0.0f64..200.0,
    ) {
        let n = g.graph.node_count();
        let (from, to) = (NodeId(from % n), NodeId(to % n));
        let ledger = ledger_with(&g, &history);
        let t = 100.0 + t_extra;
        let params = PARAMS.with_beta(0.0);
        let weights = build_weight_matrix(&g.graph, &ledger, t, &params).unwrap();
        let explore = plan_exploration_route(&g.graph, &weights, from, to);
        let transport = plan_transport_route(&g.graph, &ledger, t, from, to, &PARAMS);
        match (explore, transport) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.nodes, b.nodes);
                prop_assert_eq!(a.total_cost, b.total_cost);
                prop_assert_eq!(a.planned_at, b.planned_at);
            }
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn planning_is_deterministic(g in weighted_graph(8), from in 0usize..8, to in 0usize..8) {
        let n = g.graph.node_count();
        let (from, to) = (NodeId(from % n), NodeId(to % n));
        let a = plan_exploration_route(&g.graph, &g.matrix(), from, to);
        let b = plan_exploration_route(&g.graph, &g.matrix(), from, to);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(&a.nodes, &b.nodes);
                prop_assert_eq!(a.total_cost.to_bits(), b.total_cost.to_bits());
            }
            (a, b) => prop_assert_eq!(a, b),
        }
    }
}

#[test]
fn plans_start_at_origin_and_follow_edges() {
    let g = weighted_graph(8);
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    for _ in 0..200 {
        let g = g.new_tree(&mut runner).unwrap().current();
        let w: WeightMatrix = g.matrix();
        let n = g.graph.node_count();
        for to in 0..n {
            if let Ok(plan) = plan_exploration_route(&g.graph, &w, NodeId(0), NodeId(to)) {
                assert_eq!(plan.origin(), NodeId(0));
                assert_eq!(plan.target(), NodeId(to));
                assert!(plan.nodes.windows(2).all(|p| g.graph.edge_between(p[0], p[1]).is_some()));
                assert!(is_simple(&plan.nodes));
            }
        }
    }
}

fn vehicle_with_plan(planned_at: f64) -> VehicleAgent {
    let mut v = VehicleAgent::new(0, NodeId(0), 50.0);
    v.set_plan(RoutePlan {
        nodes: vec![NodeId(0), NodeId(1)],
        total_cost: 10.0,
        planned_at,
        phase: Phase::ToPickup,
    });
    v
}

#[test]
fn replanning_happens_only_at_nodes() {
    let mut v = vehicle_with_plan(0.0);
    assert!(maybe_replan(&v, 5.0, ReplanPolicy::EveryNode));
    v.position = Position::OnEdge {
        edge: EdgeId(0),
        offset_m: 10.0,
    };
    assert!(!maybe_replan(&v, 5.0, ReplanPolicy::EveryNode));
    assert!(!maybe_replan(&v, 500.0, ReplanPolicy::Interval { interval_s: 30.0 }));
}

#[test]
fn interval_policy_waits_for_plan_age() {
    let v = vehicle_with_plan(100.0);
    let policy = ReplanPolicy::Interval { interval_s: 30.0 };
    assert!(!maybe_replan(&v, 110.0, policy));
    assert!(maybe_replan(&v, 130.0, policy));
}

#[test]
fn vehicle_without_plan_is_not_replanned() {
    let v = VehicleAgent::new(0, NodeId(0), 50.0);
    assert!(!maybe_replan(&v, 1.0, ReplanPolicy::EveryNode));
}
