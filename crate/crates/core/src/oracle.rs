//! Brute-force reference checks, shared by the acceptance tests and the
//! `oracle` subcommand. Each reference solver here is written from scratch
//! and does not call the routine it checks.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use ridepool_optim::{
    min_cost_matching, solve_lp, Budget, IpInstance, MatchingInstance, Relation, SolveStatus, Variable,
};

use crate::assignment::{build_assignment_ip, solve_assignment};
use crate::fleet::{CostParams, Request, RequestId, RequestState, Stop, VehicleId, VehicleState};
use crate::kmeans::Point;
use crate::network::{Network, Seconds};
use crate::pdp::{best_route_exhaustive, PdpQuery, EPS};
use crate::rebalance::marginal_probabilities;
use crate::rtv::partition::{optimal_partition, partition_requests, KMeansPartitioner, RandomPartitioner};
use crate::rtv::{RtvGraph, TvEdge};

pub const QUERY_OMEGA: Seconds = 300.0;
pub const QUERY_DELTA: Seconds = 600.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub note: String,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {}/{} agree{}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases - self.failures,
            self.cases,
            if self.note.is_empty() {
                String::new()
            } else {
                format!(" ({})", self.note)
            }
        )
    }
}

/// A vehicle with up to two passengers plus one to four new requests.
#[derive(Debug, Clone)]
pub struct QueryCase {
    pub vehicle: VehicleState,
    pub onboard: Vec<Request>,
    pub new: Vec<Request>,
    pub now: Seconds,
}

impl QueryCase {
    pub fn query(&self) -> PdpQuery<'_> {
        PdpQuery::new(&self.vehicle, self.onboard.iter().collect(), self.new.iter().collect(), self.now)
    }
}

/// Small grid on which random queries are feasible about a third of the time.
pub fn query_network() -> Network {
    Network::grid(5, 5, 45.0, 0.2).expect("valid grid")
}

fn random_request(rng: &mut ChaCha8Rng, net: &Network, id: u32, t: Seconds) -> Request {
    let n = net.num_nodes();
    let o = rng.random_range(0..n);
    let mut d = rng.random_range(0..n - 1);
    if d >= o {
        d += 1;
    }
    Request::new(RequestId(id), o, d, t, QUERY_OMEGA, QUERY_DELTA, net).expect("connected network")
}

pub fn random_query(rng: &mut ChaCha8Rng, net: &Network) -> QueryCase {
    let now = 3600.0;
    let n_onboard = rng.random_range(0..=2);
    let n_new = rng.random_range(1..=4);
    let mut ids: Vec<u32> = (0..(n_onboard + n_new) as u32).collect();
    ids.shuffle(rng);
    let start = rng.random_range(0..net.num_nodes());
    let mut vehicle = VehicleState::parked(VehicleId(0), 4, start);
    vehicle.arrival_time = now + f64::from(rng.random_range(0..2u32)) * 30.0;
    let mut onboard: Vec<Request> = (0..n_onboard)
        .map(|k| {
            let t = now - f64::from(rng.random_range(30..240u32));
            let mut r = random_request(rng, net, ids[k], t);
            r.state = RequestState::Onboard;
            r.pickup_time = Some(t + 30.0);
            r
        })
        .collect();
    onboard.sort_by_key(|r| r.id);
    vehicle.onboard = onboard.iter().map(|r| r.id).collect();
    vehicle.route = onboard.iter().map(Stop::dropoff).collect();
    let new = (0..n_new)
        .map(|k| {
            let t = now - f64::from(rng.random_range(0..=150u32));
            random_request(rng, net, ids[n_onboard + k], t)
        })
        .collect();
    QueryCase {
        vehicle,
        onboard,
        new,
        now,
    }
}

/// Tries every stop order that respects pickup-before-dropoff and keeps the
/// cheapest feasible one. An order is abandoned at its first broken limit,
/// since later stops cannot repair it. Returns `(feasible, cost)`.
pub fn enumerate_pdp(case: &QueryCase, net: &Network) -> (bool, Seconds) {
    struct Walk<'a> {
        net: &'a Network,
        riders: Vec<&'a Request>,
        capacity: usize,
        // 0 = waiting, 1 = aboard, 2 = delivered
        status: Vec<u8>,
        best: Seconds,
    }
    fn go(w: &mut Walk<'_>, at: usize, t: Seconds, load: usize, cost: Seconds, left: usize) {
        if left == 0 {
            if cost < w.best {
                w.best = cost;
            }
            return;
        }
        for i in 0..w.riders.len() {
            let r = w.riders[i];
            match w.status[i] {
                0 => {
                    let t2 = t + w.net.tt(at, r.origin);
                    if load + 1 > w.capacity || t2 > r.request_time + r.max_wait + EPS {
                        continue;
                    }
                    w.status[i] = 1;
                    go(w, r.origin, t2, load + 1, cost, left - 1);
                    w.status[i] = 0;
                }
                1 => {
                    let t2 = t + w.net.tt(at, r.destination);
                    let ideal = r.request_time + r.direct_time;
                    if t2 > ideal + r.max_delay + EPS {
                        continue;
                    }
                    w.status[i] = 2;
                    go(w, r.destination, t2, load - 1, cost + (t2 - ideal), left - 1);
                    w.status[i] = 1;
                }
                _ => {}
            }
        }
    }
    let riders: Vec<&Request> = case.onboard.iter().chain(&case.new).collect();
    let status: Vec<u8> = riders
        .iter()
        .map(|r| u8::from(r.state == RequestState::Onboard))
        .collect();
    let left = status.iter().map(|&s| if s == 1 { 1 } else { 2 }).sum();
    let (at, t) = case.vehicle.departure(case.now);
    let mut w = Walk {
        net,
        riders,
        capacity: case.vehicle.capacity,
        status,
        best: f64::INFINITY,
    };
    if case.onboard.len() <= w.capacity {
        go(&mut w, at, t, case.onboard.len(), 0.0, left);
    }
    (w.best.is_finite(), w.best)
}

/// Partial-route totals of the pruned and unpruned searches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PruneCounts {
    pub pruned: u64,
    pub unpruned: u64,
}

impl PruneCounts {
    pub fn ratio(&self) -> f64 {
        self.pruned as f64 / self.unpruned.max(1) as f64
    }
}

/// Pruned search against unpruned search and against full enumeration.
pub fn pdp_suite(cases: usize, seed: u64) -> (SuiteResult, PruneCounts, usize) {
    let net = query_network();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = PruneCounts::default();
    let mut failures = 0;
    let mut feasible = 0;
    for _ in 0..cases {
        let case = random_query(&mut rng, &net);
        let q = case.query();
        let p = best_route_exhaustive(&q, &net, true);
        let u = best_route_exhaustive(&q, &net, false);
        let (ok, cost) = enumerate_pdp(&case, &net);
        counts.pruned += p.stats.partial_routes;
        counts.unpruned += u.stats.partial_routes;
        feasible += usize::from(ok);
        let agree = p.feasible == u.feasible
            && p.feasible == ok
            && (!ok || (p.cost == u.cost && p.cost == cost));
        if !agree {
            failures += 1;
        }
    }
    (
        SuiteResult {
            name: "pdp",
            cases,
            failures,
            note: format!("{feasible} feasible"),
        },
        counts,
        feasible,
    )
}

/// A random trip-vehicle graph with at most 5 vehicles and 8 trips.
pub fn random_rtv(rng: &mut ChaCha8Rng) -> (RtvGraph, Vec<RequestId>) {
    let n_vehicles = rng.random_range(1..=5u32);
    let n_requests = rng.random_range(1..=6u32);
    let n_trips = rng.random_range(1..=8);
    let mut g = RtvGraph::default();
    let mut trips: BTreeSet<Vec<RequestId>> = BTreeSet::new();
    while trips.len() < n_trips {
        let size = rng.random_range(1..=3.min(n_requests));
        let mut trip: Vec<RequestId> = Vec::new();
        while trip.len() < size as usize {
            let r = RequestId(rng.random_range(0..n_requests));
            if !trip.contains(&r) {
                trip.push(r);
            }
        }
        trip.sort_unstable();
        trips.insert(trip);
        if trips.len() as u32 >= (1 << n_requests) - 1 {
            break;
        }
    }
    for trip in trips {
        for v in 0..n_vehicles {
            if rng.random_bool(0.5) {
                g.tv_edges.insert(
                    (VehicleId(v), trip.clone()),
                    TvEdge {
                        cost: f64::from(rng.random_range(0..900u32)),
                        route: Vec::new(),
                    },
                );
            }
        }
    }
    (g, (0..n_requests).map(RequestId).collect())
}

/// Best objective by trying every choice of at most one trip per vehicle.
pub fn enumerate_assignment(g: &RtvGraph, pending: &[RequestId], params: &CostParams) -> Seconds {
    let mut per_vehicle: BTreeMap<VehicleId, Vec<(&Vec<RequestId>, Seconds)>> = BTreeMap::new();
    for ((v, trip), e) in &g.tv_edges {
        per_vehicle.entry(*v).or_default().push((trip, e.cost));
    }
    let lists: Vec<Vec<(&Vec<RequestId>, Seconds)>> = per_vehicle.into_values().collect();
    fn rec(
        lists: &[Vec<(&Vec<RequestId>, Seconds)>],
        i: usize,
        covered: &mut BTreeSet<RequestId>,
        cost: Seconds,
        pending: &[RequestId],
        penalty: Seconds,
        best: &mut Seconds,
    ) {
        if i == lists.len() {
            let missing = pending.iter().filter(|r| !covered.contains(r)).count() as f64;
            *best = best.min(cost + missing * penalty);
            return;
        }
        rec(lists, i + 1, covered, cost, pending, penalty, best);
        for (trip, c) in &lists[i] {
            if trip.iter().any(|r| covered.contains(r)) {
                continue;
            }
            covered.extend(trip.iter().copied());
            rec(lists, i + 1, covered, cost + c, pending, penalty, best);
            for r in trip.iter() {
                covered.remove(r);
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(
        &lists,
        0,
        &mut BTreeSet::new(),
        0.0,
        pending,
        params.unassigned_penalty,
        &mut best,
    );
    best
}

pub fn assignment_suite(cases: usize, seed: u64) -> SuiteResult {
    let params = CostParams::default_for(QUERY_OMEGA, QUERY_DELTA);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..cases {
        let (g, pending) = random_rtv(&mut rng);
        let ip = build_assignment_ip(&g, &pending, &params);
        let ok = match solve_assignment(&ip, None, Budget::Unlimited) {
            Ok((sol, _)) => sol.status == SolveStatus::Optimal && sol.objective == enumerate_assignment(&g, &pending, &params),
            Err(_) => false,
        };
        failures += usize::from(!ok);
    }
    SuiteResult {
        name: "assignment",
        cases,
        failures,
        note: String::new(),
    }
}

/// Textbook O(n^2 m) Hungarian method; transposes when rows exceed columns.
pub fn hungarian(costs: &[Vec<f64>]) -> f64 {
    let n = costs.len();
    if n == 0 {
        return 0.0;
    }
    let m = costs[0].len();
    if n > m {
        let t: Vec<Vec<f64>> = (0..m).map(|c| (0..n).map(|r| costs[r][c]).collect()).collect();
        return hungarian(&t);
    }
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = costs[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=m).filter(|&j| p[j] != 0).map(|j| costs[p[j] - 1][j - 1]).sum()
}

/// Vehicle-to-target LP: each side used at most once, exactly
/// `min(rows, cols)` pairs.
pub fn one_to_one_lp(costs: &[Vec<f64>]) -> IpInstance {
    let rows = costs.len();
    let cols = costs.first().map_or(0, Vec::len);
    let mut inst = IpInstance::new();
    for (r, row) in costs.iter().enumerate() {
        for (c, &w) in row.iter().enumerate() {
            inst.add_var(Variable::continuous(format!("y_{r}_{c}"), 0.0, 1.0), w);
        }
    }
    for r in 0..rows {
        inst.add_constraint(format!("veh_{r}"), (0..cols).map(|c| (r * cols + c, 1.0)).collect(), Relation::Le, 1.0);
    }
    for c in 0..cols {
        inst.add_constraint(format!("tgt_{c}"), (0..rows).map(|r| (r * cols + c, 1.0)).collect(), Relation::Le, 1.0);
    }
    inst.add_constraint(
        "total",
        (0..rows * cols).map(|k| (k, 1.0)).collect(),
        Relation::Eq,
        rows.min(cols) as f64,
    );
    inst
}

pub fn matching_suite(cases: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let rows = rng.random_range(1..=8);
        let cols = rng.random_range(1..=8);
        let costs: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.random_range(0.0..1000.0)).collect())
            .collect();
        let m = min_cost_matching(&MatchingInstance::new(costs.clone(), rows.min(cols)));
        let h = hungarian(&costs);
        let ok = match solve_lp(&one_to_one_lp(&costs)) {
            Ok(lp) if lp.status == SolveStatus::Optimal && m.status == SolveStatus::Optimal => {
                let d = (m.cost - lp.objective).abs().max((m.cost - h).abs());
                worst = worst.max(d);
                d <= 1e-9
            }
            _ => false,
        };
        failures += usize::from(!ok);
    }
    SuiteResult {
        name: "matching",
        cases,
        failures,
        note: format!("max gap {worst:.1e}"),
    }
}

/// Random distribution over 0..=n_max with a few zero entries.
pub fn random_distribution(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let len = rng.random_range(1..=12);
    let mut w: Vec<f64> = (0..len)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..1.0) })
        .collect();
    if w.iter().sum::<f64>() == 0.0 {
        w[len - 1] = 1.0;
    }
    let s: f64 = w.iter().sum();
    let mut p: Vec<f64> = w.iter().map(|x| x / s).collect();
    // Push the rounding residue into the largest entry so the sum is 1.
    let resid = 1.0 - p.iter().sum::<f64>();
    let big = (0..len).max_by(|&a, &b| p[a].total_cmp(&p[b])).expect("non-empty");
    p[big] += resid;
    p
}

pub fn marginal_suite(cases: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let p = random_distribution(&mut rng);
        let Ok(m) = marginal_probabilities(&p) else {
            failures += 1;
            continue;
        };
        let suffix_ok = (0..m.len()).all(|i| {
            let s: f64 = p[i + 1..].iter().sum();
            (m[i] - s).abs() <= 1e-12
        });
        let mono = m.windows(2).all(|w| w[0] >= w[1]);
        let lhs: f64 = m.iter().sum();
        let rhs: f64 = p.iter().enumerate().map(|(n, q)| n as f64 * q).sum();
        worst = worst.max((lhs - rhs).abs());
        if !(suffix_ok && mono && (lhs - rhs).abs() <= 1e-12 && m.len() + 1 == p.len()) {
            failures += 1;
        }
    }
    SuiteResult {
        name: "marginals",
        cases,
        failures,
        note: format!("max gap {worst:.1e}"),
    }
}

/// Requests drawn around two centres and vehicles spread over the square;
/// a vehicle is a candidate when within `reach` of the origin.
pub struct PartitionInstance {
    pub requests: Vec<(RequestId, Point)>,
    pub vehicles: BTreeMap<RequestId, BTreeSet<VehicleId>>,
}

pub fn two_blob_instance(rng: &mut ChaCha8Rng, n_requests: usize, n_vehicles: usize) -> PartitionInstance {
    let centres = [(1.0, 1.0), (4.0, 4.0)];
    let spread = Normal::new(0.0, 0.4).expect("valid sd");
    let fleet: Vec<Point> = (0..n_vehicles)
        .map(|_| (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)))
        .collect();
    let reach = 1.0;
    let mut requests = Vec::new();
    let mut vehicles = BTreeMap::new();
    for i in 0..n_requests {
        let c = centres[i % 2];
        let p = (c.0 + spread.sample(rng), c.1 + spread.sample(rng));
        let id = RequestId(i as u32);
        let near = fleet
            .iter()
            .enumerate()
            .filter(|(_, v)| ((v.0 - p.0).powi(2) + (v.1 - p.1).powi(2)).sqrt() <= reach)
            .map(|(k, _)| VehicleId(k as u32))
            .collect();
        requests.push((id, p));
        vehicles.insert(id, near);
    }
    PartitionInstance { requests, vehicles }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PartitionOutcome {
    pub instances: usize,
    pub kmeans_not_worse: usize,
    pub small_instances: usize,
    pub small_optimal: usize,
}

/// `instances` runs at `n_requests`, plus `instances` runs at 4..=10
/// requests compared with the exhaustive optimum.
pub fn partition_suite(instances: usize, n_requests: usize, n_vehicles: usize, k: usize, seed: u64) -> PartitionOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = PartitionOutcome {
        instances,
        small_instances: instances,
        ..Default::default()
    };
    for _ in 0..instances {
        let inst = two_blob_instance(&mut rng, n_requests, n_vehicles);
        let km = partition_requests(&inst.requests, k, &KMeansPartitioner, &mut rng, &inst.vehicles);
        let rnd = partition_requests(&inst.requests, k, &RandomPartitioner, &mut rng, &inst.vehicles);
        out.kmeans_not_worse += usize::from(km.io_cost <= rnd.io_cost);
    }
    for _ in 0..instances {
        let n = rng.random_range(4..=10);
        let inst = two_blob_instance(&mut rng, n, n_vehicles);
        let km = partition_requests(&inst.requests, k, &KMeansPartitioner, &mut rng, &inst.vehicles);
        let ids: Vec<RequestId> = inst.requests.iter().map(|r| r.0).collect();
        let best = optimal_partition(&ids, k, &inst.vehicles);
        out.small_optimal += usize::from(km.io_cost == best.io_cost);
    }
    out
}
