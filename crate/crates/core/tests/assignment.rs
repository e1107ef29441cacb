use aoi_fleet::fleet::{AssignmentPolicy, DeliveryTask, FleetState, VehicleAgent, VehiclePhase};
use aoi_fleet::graph::{Edge, Node, NodeId, RoadGraph};
use aoi_fleet::traffic::WeightMatrix;

// 0 -> 3 costs 40 s, 1 -> 3 costs 25 s, 2 is the pickup's other side.
fn four_nodes() -> (RoadGraph, WeightMatrix) {
    let nodes = (0..4)
        .map(|i| Node {
            id: NodeId(i),
            x: 100.0 * i as f64,
            y: 0.0,
        })
        .collect();
    let e = |a: usize, b: usize| Edge {
        from: NodeId(a),
        to: NodeId(b),
        length_m: 100.0,
        lanes: 1,
        v_free_mps: 10.0,
    };
    let g = RoadGraph::new(nodes, vec![e(0, 3), e(1, 3), e(2, 3), e(3, 2)]).unwrap();
    let w = WeightMatrix::from_edge_weights(&g, &[40.0, 25.0, 10.0, 10.0], 0.0);
    (g, w)
}

#[test]
fn cheaper_vehicle_wins() {
    let (g, w) = four_nodes();
    let mut fleet = FleetState::new(vec![
        VehicleAgent::new(0, NodeId(0), 50.0),
        VehicleAgent::new(1, NodeId(1), 50.0),
    ]);
    fleet.enqueue(DeliveryTask::new(0, NodeId(3), NodeId(2), 0.0));
    let (a, plan) = fleet
        .assign_next(&g, &w, 0.0, AssignmentPolicy::NearestCost)
        .unwrap()
        .unwrap();
    assert_eq!(a.vehicle, 1);
    assert_eq!(a.cost, 25.0);
    assert_eq!(plan.nodes, vec![NodeId(1), NodeId(3)]);
    assert_eq!(fleet.vehicles[0].phase, VehiclePhase::Idle);
    assert_eq!(fleet.vehicles[1].phase, VehiclePhase::ToPickup);
}

#[test]
fn equal_costs_go_to_lowest_id() {
    let (g, _) = four_nodes();
    let w = WeightMatrix::from_edge_weights(&g, &[25.0, 25.0, 10.0, 10.0], 0.0);
    let mut fleet = FleetState::new(vec![
        VehicleAgent::new(0, NodeId(0), 50.0),
        VehicleAgent::new(1, NodeId(1), 50.0),
    ]);
    fleet.enqueue(DeliveryTask::new(0, NodeId(3), NodeId(2), 0.0));
    let (a, _) = fleet
        .assign_next(&g, &w, 0.0, AssignmentPolicy::NearestCost)
        .unwrap()
        .unwrap();
    assert_eq!(a.vehicle, 0);
}

#[test]
fn first_idle_policy_ignores_cost() {
    let (g, w) = four_nodes();
    let mut fleet = FleetState::new(vec![
        VehicleAgent::new(0, NodeId(0), 50.0),
        VehicleAgent::new(1, NodeId(1), 50.0),
    ]);
    fleet.enqueue(DeliveryTask::new(0, NodeId(3), NodeId(2), 0.0));
    let (a, _) = fleet
        .assign_next(&g, &w, 0.0, AssignmentPolicy::FirstIdle)
        .unwrap()
        .unwrap();
    assert_eq!(a.vehicle, 0);
}

#[test]
fn tasks_are_served_in_arrival_order() {
    let (g, w) = four_nodes();
    let mut fleet = FleetState::new(vec![VehicleAgent::new(0, NodeId(0), 50.0)]);
    fleet.enqueue(DeliveryTask::new(0, NodeId(3), NodeId(2), 0.0));
    fleet.enqueue(DeliveryTask::new(1, NodeId(2), NodeId(3), 1.0));
    let (a, _) = fleet
        .assign_next(&g, &w, 2.0, AssignmentPolicy::NearestCost)
        .unwrap()
        .unwrap();
    assert_eq!(a.task, 0);
    assert_eq!(fleet.pending.len(), 1);
    assert_eq!(fleet.task_count(), 2);
    assert!(fleet
        .assign_next(&g, &w, 2.0, AssignmentPolicy::NearestCost)
        .unwrap()
        .is_none());
}
