use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ridepool::fleet::{Request, RequestId, RequestState, Stop, VehicleId, VehicleState};
use ridepool::kmeans::Point;
use ridepool::network::Network;
use ridepool::oracle::query_network;
use ridepool::pdp::{best_route_exhaustive, PdpQuery, Planner};
use ridepool::registry::{partitioners, BuildContext};
use ridepool::rtv::{build_rtv, build_rv, candidate_vehicles, partition_requests, RequestPartition, RtvBudget, Snapshot};
use ridepool::config::SimConfig;

const NOW: f64 = 3600.0;

struct World {
    requests: BTreeMap<RequestId, Request>,
    fleet: Vec<VehicleState>,
    open: Vec<RequestId>,
}

fn trip(rng: &mut ChaCha8Rng, net: &Network, id: u32, t: f64) -> Request {
    let n = net.num_nodes();
    let o = rng.random_range(0..n);
    let d = (o + rng.random_range(1..n)) % n;
    Request::new(RequestId(id), o, d, t, 300.0, 600.0, net).unwrap()
}

/// Some vehicles carry one passenger; open requests arrived in the last 150 s.
fn world(rng: &mut ChaCha8Rng, net: &Network, n_veh: usize, n_req: usize) -> World {
    let mut requests = BTreeMap::new();
    let mut fleet = Vec::new();
    let mut id = 0;
    for v in 0..n_veh {
        let mut veh = VehicleState::parked(VehicleId(v as u32), 4, rng.random_range(0..net.num_nodes()));
        veh.arrival_time = NOW + if rng.random_bool(0.5) { 20.0 } else { 0.0 };
        if rng.random_bool(0.5) {
            let mut p = trip(rng, net, id, NOW - 120.0);
            p.state = RequestState::Onboard;
            p.pickup_time = Some(NOW - 60.0);
            veh.onboard = vec![p.id];
            veh.route = vec![Stop::dropoff(&p)];
            requests.insert(p.id, p);
            id += 1;
        }
        fleet.push(veh);
    }
    let mut open = Vec::new();
    for _ in 0..n_req {
        let t = NOW - f64::from(rng.random_range(0..=150u32));
        let r = trip(rng, net, id, t);
        open.push(r.id);
        requests.insert(r.id, r);
        id += 1;
    }
    World { requests, fleet, open }
}

fn snapshot<'a>(w: &'a World, net: &'a Network) -> Snapshot<'a> {
    Snapshot {
        net,
        requests: &w.requests,
        fleet: &w.fleet,
        now: NOW,
    }
}

fn candidates(w: &World, net: &Network) -> BTreeMap<RequestId, BTreeSet<VehicleId>> {
    w.open
        .iter()
        .map(|id| (*id, candidate_vehicles(&w.requests[id], &w.fleet, NOW, net)))
        .collect()
}

fn exact() -> Planner {
    Planner {
        prune: true,
        exhaustive_limit: 8,
    }
}

fn net() -> &'static Network {
    static NET: std::sync::OnceLock<Network> = std::sync::OnceLock::new();
    NET.get_or_init(query_network)
}

#[test]
fn complete_graph_matches_brute_force() {
    let net = net();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut multi = 0;
    for _ in 0..60 {
        let w = world(&mut rng, net, 3, 6);
        let snap = snapshot(&w, net);
        let cands = candidates(&w, net);
        let part = RequestPartition::single(&w.open, &cands);
        let rv = build_rv(&snap, &part, &cands, &exact());
        let rtv = build_rtv(&snap, &rv, &exact(), RtvBudget::Unlimited);
        assert!(rtv.complete.values().all(|&c| c));

        let mut expected = BTreeMap::new();
        for v in &w.fleet {
            let passengers: Vec<&Request> = v.onboard.iter().map(|id| &w.requests[id]).collect();
            for mask in 1u32..(1 << w.open.len()) {
                if mask.count_ones() as usize > v.capacity {
                    continue;
                }
                let trip: Vec<RequestId> = (0..w.open.len()).filter(|i| mask >> i & 1 == 1).map(|i| w.open[i]).collect();
                let new: Vec<&Request> = trip.iter().map(|id| &w.requests[id]).collect();
                let res = best_route_exhaustive(&PdpQuery::new(v, passengers.clone(), new, NOW), net, false);
                if res.feasible {
                    expected.insert((v.id, trip), res.cost);
                }
            }
        }
        let got: BTreeMap<_, _> = rtv.tv_edges.iter().map(|(k, e)| (k.clone(), e.cost)).collect();
        assert_eq!(got, expected);
        multi += got.keys().filter(|(_, t)| t.len() > 1).count();
    }
    assert!(multi > 20, "only {multi} shared trips; instances too sparse to test anything");
}

#[test]
fn step_budget_marks_incomplete() {
    let net = net();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut cut = 0;
    for _ in 0..40 {
        let w = world(&mut rng, net, 3, 6);
        let snap = snapshot(&w, net);
        let cands = candidates(&w, net);
        let part = RequestPartition::single(&w.open, &cands);
        let rv = build_rv(&snap, &part, &cands, &exact());
        let full = build_rtv(&snap, &rv, &exact(), RtvBudget::Unlimited);
        let capped = build_rtv(&snap, &rv, &exact(), RtvBudget::Steps(1));
        // A budget only ever drops trips, and single requests survive.
        for (k, e) in &capped.tv_edges {
            assert_eq!(full.tv_edges.get(k), Some(e));
        }
        for (k, e) in &full.tv_edges {
            if k.1.len() == 1 {
                assert_eq!(capped.tv_edges.get(k), Some(e));
            }
        }
        for (v, done) in &capped.complete {
            let lost = full.trips_of(*v).count() != capped.trips_of(*v).count();
            if lost {
                assert!(!done);
                cut += 1;
            }
        }
    }
    assert!(cut > 0);
}

fn origin_points(w: &World, net: &Network) -> Vec<(RequestId, Point)> {
    w.open
        .iter()
        .map(|id| (*id, net.coords(w.requests[id].origin)))
        .collect()
}

#[test]
fn partition_does_not_change_the_graph() {
    let net = net();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let cfg = SimConfig::default();
    let ctx = BuildContext {
        config: &cfg,
        clusters: None,
        demand: None,
    };
    let registry = partitioners();
    for _ in 0..20 {
        let w = world(&mut rng, net, 6, 10);
        let snap = snapshot(&w, net);
        let cands = candidates(&w, net);
        let base = build_rv(&snap, &RequestPartition::single(&w.open, &cands), &cands, &exact());
        let points = origin_points(&w, net);
        for name in registry.names() {
            let p = registry.build(name, &ctx).unwrap();
            for k in [1, 2, 4] {
                let part = partition_requests(&points, k, p.as_ref(), &mut rng, &cands);
                let mut seen: Vec<RequestId> = part.slots.iter().flatten().copied().collect();
                seen.sort_unstable();
                assert_eq!(seen, w.open);
                let g = build_rv(&snap, &part, &cands, &exact());
                assert_eq!(g, base, "{name} k={k}");
            }
        }
    }
}
