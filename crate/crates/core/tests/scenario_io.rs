mod common;

use std::path::Path;

use aoi_fleet::fleet::AssignmentPolicy;
use aoi_fleet::graph::{Edge, Node, NodeId, RoadGraph};
use aoi_fleet::router::ReplanPolicy;
use aoi_fleet::scenario::{
    load_scenario, load_scenario_file, write_scenario, BackgroundTraffic, CongestionEvent,
    ObservationSharing, Params, Rsu, ScenarioConfig, ScenarioError, SeedPolicy, TaskProcess,
    TaskSource, TaskSpec, TwinInit, VehicleSpec,
};
use common::scenario_path;
use proptest::prelude::*;

#[test]
fn campus_fixture_shape() {
    let (graph, config) = load_scenario_file(&scenario_path("campus.toml")).unwrap();
    assert_eq!(graph.node_count(), 30);
    assert_eq!(config.rsus.len(), 3);
    assert_eq!(config.vehicles.len(), 3);
    assert_eq!(config.congestion.len(), 1);
    assert_eq!(
        (config.congestion[0].start_s, config.congestion[0].end_s),
        (300.0, 900.0)
    );
    assert_eq!(config.params.horizon_s, 1500.0);
}

#[test]
fn campus_normalizes_to_golden_file() {
    let (graph, config) = load_scenario_file(&scenario_path("campus.toml")).unwrap();
    let text = write_scenario(&graph, &config);
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/campus.normalized.toml");
    if std::env::var_os("AOI_FLEET_BLESS").is_some() {
        std::fs::write(&golden, &text).unwrap();
    }
    assert_eq!(text, std::fs::read_to_string(&golden).unwrap());
}

#[test]
fn fixtures_round_trip() {
    for name in ["campus.toml", "poc2.toml"] {
        let (g1, c1) = load_scenario_file(&scenario_path(name)).unwrap();
        let text = write_scenario(&g1, &c1);
        let (g2, c2) = load_scenario(&text).unwrap();
        assert_eq!(g1, g2, "{name}");
        assert_eq!(c1, c2, "{name}");
        assert_eq!(text, write_scenario(&g2, &c2), "{name}");
    }
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_scenario_file(Path::new("/nonexistent/scenario.toml")).unwrap_err();
    assert!(matches!(err, ScenarioError::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/scenario.toml"));
}

#[test]
fn window_breaks_must_fit_the_horizon() {
    let (graph, mut config) = load_scenario_file(&scenario_path("poc2.toml")).unwrap();
    config.params.window_breaks_s = vec![100.0, 400.0];
    let err = load_scenario(&write_scenario(&graph, &config)).unwrap_err();
    assert!(err.to_string().contains("window_breaks_s"), "{err}");
}

fn scenario() -> impl Strategy<Value = (RoadGraph, ScenarioConfig)> {
    (2usize..8).prop_flat_map(|n| {
        let positions = proptest::collection::vec((-1000.0f64..1000.0, -1000.0f64..1000.0), n);
        let tree = proptest::collection::vec((0usize..n, 10.0f64..500.0, 1u32..4, 1.0f64..20.0), n - 1);
        let vehicles = proptest::collection::vec(0usize..n, 0..4);
        let tasks = prop_oneof![
            proptest::collection::vec((0.0f64..100.0, 0usize..n, 1usize..n), 0..5)
                .prop_map(move |ts| {
                    let mut ts: Vec<TaskSpec> = ts
                        .into_iter()
                        .map(|(arrival_s, p, d)| TaskSpec { arrival_s, pickup: p, dropoff: (p + d) % n })
                        .collect();
                    ts.sort_by(|a, b| a.arrival_s.total_cmp(&b.arrival_s));
                    TaskSource::Explicit(ts)
                }),
            (0.1f64..5.0, 0.0f64..1000.0).prop_map(move |(rate_per_min, horizon_s)| {
                TaskSource::Process(TaskProcess {
                    rate_per_min,
                    horizon_s,
                    pickup_nodes: (0..n).collect(),
                    dropoff_nodes: (0..n).collect(),
                })
            }),
        ];
        let params = (
            0.0f64..1.0,
            1.0f64..500.0,
            prop_oneof![Just(ReplanPolicy::EveryNode), (1.0f64..60.0).prop_map(|interval_s| ReplanPolicy::Interval { interval_s })],
            any::<bool>(),
            any::<bool>(),
            any::<bool>(),
        );
        let extras = (0usize..200, any::<Option<u64>>(), 0.01f64..=1.0, 0usize..3);
        (positions, tree, vehicles, tasks, params, extras).prop_map(
            move |(positions, tree, vehicles, tasks, params, extras)| {
                let nodes: Vec<Node> = positions
                    .iter()
                    .enumerate()
                    .map(|(i, &(x, y))| Node { id: NodeId(i), x, y })
                    .collect();
                let mut edges = Vec::new();
                for (i, &(parent, length_m, lanes, v_free_mps)) in tree.iter().enumerate() {
                    let child = i + 1;
                    let parent = parent % child;
                    for (a, b) in [(parent, child), (child, parent)] {
                        edges.push(Edge { from: NodeId(a), to: NodeId(b), length_m, lanes, v_free_mps });
                    }
                }
                let graph = RoadGraph::new(nodes, edges).unwrap();
                let (beta, sensing, replan, first_idle, snapshot, private) = params;
                let (bg, fixed, fraction, rsu_count) = extras;
                let all_edges: Vec<(usize, usize)> =
                    graph.edges().iter().map(|e| (e.from.0, e.to.0)).collect();
                let mut vehicle_specs: Vec<VehicleSpec> = vehicles
                    .iter()
                    .enumerate()
                    .map(|(id, &start)| VehicleSpec { id, start })
                    .collect();
                vehicle_specs.sort_by_key(|v| v.id);
                let config = ScenarioConfig {
                    name: format!("random-{n}"),
                    rsus: (0..rsu_count)
                        .map(|i| Rsu { node: i % n, coverage: all_edges.iter().copied().skip(i).step_by(2).collect() })
                        .collect(),
                    vehicles: vehicle_specs,
                    tasks,
                    background_traffic: BackgroundTraffic {
                        count: bg,
                        seed_policy: fixed.map_or(SeedPolicy::Run, SeedPolicy::Fixed),
                    },
                    congestion: vec![CongestionEvent {
                        edges: all_edges[..1].to_vec(),
                        start_s: 10.0,
                        end_s: 20.0,
                        density_fraction: fraction,
                    }],
                    params: Params {
                        beta_per_s: beta,
                        sensing_radius_m: sensing,
                        replan,
                        assignment: if first_idle { AssignmentPolicy::FirstIdle } else { AssignmentPolicy::NearestCost },
                        twin_init: if snapshot { TwinInit::Snapshot } else { TwinInit::Unobserved },
                        observation_sharing: if private { ObservationSharing::Private } else { ObservationSharing::Shared },
                        ..Params::default()
                    },
                };
                (graph, config)
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn write_then_load_is_identity((graph, config) in scenario()) {
        let text = write_scenario(&graph, &config);
        let (g2, c2) = load_scenario(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&graph, &g2);
        prop_assert_eq!(&config, &c2);
        prop_assert_eq!(text, write_scenario(&g2, &c2));
    }
}
