use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ridepool::fleet::{Request, RequestId, Stop, StopKind, VehicleId, VehicleState};
use ridepool::network::Network;
use ridepool::oracle::{enumerate_pdp, query_network, random_query, QueryCase};
use ridepool::pdp::{best_route_exhaustive, best_route_insertion, check_route, Planner};

fn riders(case: &QueryCase) -> Vec<&Request> {
    case.onboard.iter().chain(&case.new).collect()
}

#[test]
fn insertion_is_sound_and_never_beats_exact() {
    let net = query_network();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut inserted = 0;
    for _ in 0..3000 {
        let case = random_query(&mut rng, &net);
        let q = case.query();
        let ins = best_route_insertion(&q, &net);
        let exact = best_route_exhaustive(&q, &net, true);
        if ins.feasible {
            inserted += 1;
            assert!(exact.feasible);
            let (ok, cost) = check_route(&case.vehicle, &ins.route, &riders(&case), case.now, &net).unwrap();
            assert!(ok);
            assert!((cost - ins.cost).abs() < 1e-9);
            assert!(ins.cost >= exact.cost - 1e-9);
        }
    }
    assert!(inserted > 300, "too few feasible insertions ({inserted}) to mean anything");
}

#[test]
fn exact_routes_replay_to_their_cost() {
    let net = query_network();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..2000 {
        let case = random_query(&mut rng, &net);
        let q = case.query();
        let res = best_route_exhaustive(&q, &net, true);
        assert_eq!(res, best_route_exhaustive(&q, &net, true), "deterministic");
        let (feasible, cost) = enumerate_pdp(&case, &net);
        assert_eq!(res.feasible, feasible);
        if res.feasible {
            assert_eq!(res.cost, cost);
            let (ok, replay) = check_route(&case.vehicle, &res.route, &riders(&case), case.now, &net).unwrap();
            assert!(ok);
            assert!((replay - res.cost).abs() < 1e-9);
            // Every rider appears with the right stops.
            let drops = res.route.iter().filter(|s| s.kind == StopKind::Dropoff).count();
            assert_eq!(drops, case.onboard.len() + case.new.len());
        }
    }
}

fn line() -> Network {
    Network::grid(1, 6, 60.0, 0.1).unwrap()
}

#[test]
fn capacity_binds() {
    let net = line();
    let a = Request::new(RequestId(0), 1, 5, 0.0, 300.0, 600.0, &net).unwrap();
    let b = Request::new(RequestId(1), 1, 5, 0.0, 300.0, 600.0, &net).unwrap();
    let mut v = VehicleState::parked(VehicleId(0), 1, 0);
    let q = ridepool::pdp::PdpQuery::new(&v, vec![], vec![&a, &b], 0.0);
    let res = best_route_exhaustive(&q, &net, false);
    // One seat: the second rider waits for the 1 -> 5 -> 1 round trip.
    assert!(!res.feasible);
    v.capacity = 2;
    let q = ridepool::pdp::PdpQuery::new(&v, vec![], vec![&a, &b], 0.0);
    let res = best_route_exhaustive(&q, &net, true);
    assert!(res.feasible);
    // Pickup at 60 s for both, dropoff at 300 s, direct arrival 240 s.
    assert_eq!(res.cost, 120.0);
    assert_eq!(
        res.route,
        vec![Stop::pickup(&a), Stop::pickup(&b), Stop::dropoff(&a), Stop::dropoff(&b)]
    );
}

#[test]
fn passenger_deadline_blocks_detour() {
    let net = line();
    // Passenger bound for node 5, due by 500 s; the direct run ends at 300 s.
    let mut p = Request::new(RequestId(0), 0, 5, 0.0, 100.0, 200.0, &net).unwrap();
    p.state = ridepool::fleet::RequestState::Onboard;
    p.pickup_time = Some(0.0);
    let mut v = VehicleState::parked(VehicleId(0), 4, 2);
    v.arrival_time = 120.0;
    v.onboard = vec![p.id];
    v.route = vec![Stop::dropoff(&p)];
    // A hurried rider going back to node 0 (due by 300 s): serving them
    // first lands the passenger at 540 s, the other order misses 300 s.
    let r = Request::new(RequestId(1), 2, 0, 120.0, 60.0, 60.0, &net).unwrap();
    let q = ridepool::pdp::PdpQuery::new(&v, vec![&p], vec![&r], 120.0);
    assert!(!best_route_exhaustive(&q, &net, true).feasible);
    assert!(!best_route_insertion(&q, &net).feasible);
    // Going the same way is fine.
    let s = Request::new(RequestId(2), 3, 4, 120.0, 300.0, 600.0, &net).unwrap();
    let q = ridepool::pdp::PdpQuery::new(&v, vec![&p], vec![&s], 120.0);
    let res = best_route_exhaustive(&q, &net, true);
    assert!(res.feasible);
    assert_eq!(res.route.len(), 3);
}

#[test]
fn planner_switches_to_insertion_above_limit() {
    let net = query_network();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let exact = Planner {
        prune: true,
        exhaustive_limit: 6,
    };
    let cheap = Planner {
        prune: true,
        exhaustive_limit: 0,
    };
    for _ in 0..500 {
        let case = random_query(&mut rng, &net);
        let q = case.query();
        assert_eq!(exact.plan(&q, &net), best_route_exhaustive(&q, &net, true));
        assert_eq!(cheap.plan(&q, &net), best_route_insertion(&q, &net));
        assert_eq!(cheap.plan_exact(&q, &net), best_route_exhaustive(&q, &net, true));
    }
}

#[test]
fn malformed_route_is_an_invariant_error() {
    let net = line();
    let r = Request::new(RequestId(0), 1, 3, 0.0, 300.0, 600.0, &net).unwrap();
    let v = VehicleState::parked(VehicleId(0), 4, 0);
    let e = check_route(&v, &[Stop::dropoff(&r)], &[&r], 0.0, &net).unwrap_err();
    assert_eq!(e.exit_code(), 4);
    let e = check_route(&v, &[Stop::pickup(&r)], &[&r], 0.0, &net).unwrap_err();
    assert_eq!(e.exit_code(), 4);
}
