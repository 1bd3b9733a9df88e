use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ridepool::assignment::{build_assignment_ip, commit, greedy_warm_start, solve_assignment, AssignmentSolution};
use ridepool::fleet::{CostParams, Request, RequestId, RequestState, Stop, VehicleId, VehicleState};
use ridepool::network::Network;
use ridepool::oracle::{enumerate_assignment, random_rtv};
use ridepool::pdp::{best_route_exhaustive, PdpQuery};
use ridepool::rtv::{RtvGraph, TvEdge};
use ridepool_optim::{Budget, SolveStatus};

const PARAMS: CostParams = CostParams {
    unassigned_penalty: 9000.0,
};

/// Every request covered at most once, one trip per vehicle, objective adds up.
fn check_solution(g: &RtvGraph, pending: &[RequestId], sol: &AssignmentSolution) {
    let mut vehicles = BTreeSet::new();
    let mut covered = BTreeSet::new();
    let mut cost = 0.0;
    for (v, trip) in &sol.chosen {
        assert!(vehicles.insert(*v));
        cost += g.tv_edges[&(*v, trip.clone())].cost;
        for r in trip {
            assert!(covered.insert(*r));
        }
    }
    for r in pending {
        assert_ne!(covered.contains(r), sol.unassigned.contains(r), "{r} covered exactly once");
    }
    cost += sol.unassigned.len() as f64 * PARAMS.unassigned_penalty;
    assert!((cost - sol.objective).abs() < 1e-6);
}

#[test]
fn optimal_and_greedy_are_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..400 {
        let (g, pending) = random_rtv(&mut rng);
        let greedy = greedy_warm_start(&g, &pending, &PARAMS);
        check_solution(&g, &pending, &greedy);
        let ip = build_assignment_ip(&g, &pending, &PARAMS);
        let (best, _) = solve_assignment(&ip, Some(&greedy), Budget::Unlimited).unwrap();
        check_solution(&g, &pending, &best);
        assert_eq!(best.status, SolveStatus::Optimal);
        assert!((best.objective - enumerate_assignment(&g, &pending, &PARAMS)).abs() < 1e-6);
        assert!(best.objective <= greedy.objective + 1e-6);
        let (cold, _) = solve_assignment(&ip, None, Budget::Unlimited).unwrap();
        assert!((cold.objective - best.objective).abs() < 1e-6);
    }
}

#[test]
fn node_budget_keeps_warm_start_or_better() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..200 {
        let (g, pending) = random_rtv(&mut rng);
        let greedy = greedy_warm_start(&g, &pending, &PARAMS);
        let ip = build_assignment_ip(&g, &pending, &PARAMS);
        let (sol, _) = solve_assignment(&ip, Some(&greedy), Budget::Nodes(1)).unwrap();
        check_solution(&g, &pending, &sol);
        assert!(sol.objective <= greedy.objective + 1e-6);
    }
}

#[test]
fn empty_graph_leaves_everyone_unassigned() {
    let g = RtvGraph::default();
    let pending = [RequestId(3), RequestId(1)];
    let ip = build_assignment_ip(&g, &pending, &PARAMS);
    let (sol, _) = solve_assignment(&ip, None, Budget::Unlimited).unwrap();
    assert!(sol.chosen.is_empty());
    assert_eq!(sol.unassigned, pending.iter().copied().collect());
    assert_eq!(sol.objective, 2.0 * PARAMS.unassigned_penalty);
}

#[test]
fn commit_installs_routes_and_releases_losers() {
    let net = Network::grid(1, 5, 60.0, 0.1).unwrap();
    let mut requests = BTreeMap::new();
    for (id, o, d) in [(0, 1, 3), (1, 4, 2)] {
        let r = Request::new(RequestId(id), o, d, 0.0, 300.0, 600.0, &net).unwrap();
        requests.insert(r.id, r);
    }
    // Request 1 was assigned last round; now it is left out.
    requests.get_mut(&RequestId(1)).unwrap().transition(RequestState::Assigned).unwrap();
    let mut fleet = vec![VehicleState::parked(VehicleId(0), 4, 0), VehicleState::parked(VehicleId(1), 4, 4)];
    fleet[1].route = vec![Stop::pickup(&requests[&RequestId(1)]), Stop::dropoff(&requests[&RequestId(1)])];
    fleet[0].rebalance_target = Some(2);

    let mut g = RtvGraph::default();
    let r0 = &requests[&RequestId(0)];
    let res = best_route_exhaustive(&PdpQuery::new(&fleet[0], vec![], vec![r0], 0.0), &net, true);
    g.tv_edges.insert(
        (VehicleId(0), vec![RequestId(0)]),
        TvEdge {
            cost: res.cost,
            route: res.route.clone(),
        },
    );
    let sol = AssignmentSolution {
        chosen: vec![(VehicleId(0), vec![RequestId(0)])],
        unassigned: [RequestId(1)].into_iter().collect(),
        objective: res.cost + PARAMS.unassigned_penalty,
        status: SolveStatus::Optimal,
    };
    commit(&sol, &g, &mut fleet, &mut requests, 0.0, &net).unwrap();
    assert_eq!(fleet[0].route, res.route);
    assert_eq!(fleet[0].rebalance_target, None);
    assert!(fleet[1].route.is_empty());
    assert_eq!(requests[&RequestId(0)].state, RequestState::Assigned);
    assert_eq!(requests[&RequestId(1)].state, RequestState::Pending);

    // A route that no longer checks out is refused.
    let mut bad = g.clone();
    bad.tv_edges.values_mut().for_each(|e| e.cost += 1.0);
    assert_eq!(
        commit(&sol, &bad, &mut fleet, &mut requests, 0.0, &net).unwrap_err().exit_code(),
        4
    );
}
