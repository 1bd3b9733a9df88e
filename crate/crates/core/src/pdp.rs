//! Per-(vehicle, trip) stop ordering under capacity, waiting and delay limits.

use crate::error::{Error, Result};
use crate::fleet::{Request, RequestId, Stop, StopKind, VehicleState};
use crate::network::{Network, Seconds};

/// Slack for deadline comparisons.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct PdpQuery<'a> {
    pub vehicle: &'a VehicleState,
    /// Requests of the vehicle's current passengers.
    pub onboard: Vec<&'a Request>,
    pub new_requests: Vec<&'a Request>,
    pub now: Seconds,
}

impl<'a> PdpQuery<'a> {
    pub fn new(
        vehicle: &'a VehicleState,
        onboard: Vec<&'a Request>,
        new_requests: Vec<&'a Request>,
        now: Seconds,
    ) -> Self {
        Self {
            vehicle,
            onboard,
            new_requests,
            now,
        }
    }

    pub fn num_riders(&self) -> usize {
        self.onboard.len() + self.new_requests.len()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    /// Partial routes generated (one per stop appended).
    pub partial_routes: u64,
    pub complete_routes: u64,
}

impl std::ops::AddAssign for SearchStats {
    fn add_assign(&mut self, o: Self) {
        self.partial_routes += o.partial_routes;
        self.complete_routes += o.complete_routes;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdpResult {
    pub feasible: bool,
    pub route: Vec<Stop>,
    pub cost: Seconds,
    pub stats: SearchStats,
}

impl PdpResult {
    fn infeasible(stats: SearchStats) -> Self {
        Self {
            feasible: false,
            route: Vec::new(),
            cost: f64::INFINITY,
            stats,
        }
    }
}

struct Rider {
    id: RequestId,
    onboard: bool,
    /// Local point index of the pickup (unused for passengers).
    pickup: usize,
    dropoff: usize,
    request_time: Seconds,
    wait_deadline: Seconds,
    ideal: Seconds,
    drop_deadline: Seconds,
}

/// Riders sorted by id with a small travel-time matrix over their stops.
struct Local {
    riders: Vec<Rider>,
    dist: Vec<Vec<Seconds>>,
    start_time: Seconds,
    capacity: usize,
    n_onboard: usize,
}

impl Local {
    fn new(q: &PdpQuery<'_>, net: &Network) -> Self {
        let (start_node, start_time) = q.vehicle.departure(q.now);
        let mut reqs: Vec<(&Request, bool)> = q
            .onboard
            .iter()
            .map(|r| (*r, true))
            .chain(q.new_requests.iter().map(|r| (*r, false)))
            .collect();
        reqs.sort_by_key(|(r, _)| r.id);
        assert!(reqs.len() <= 32, "at most 32 riders per query");
        let mut nodes = vec![start_node];
        let riders = reqs
            .iter()
            .map(|(r, onboard)| {
                nodes.push(r.origin);
                nodes.push(r.destination);
                Rider {
                    id: r.id,
                    onboard: *onboard,
                    pickup: nodes.len() - 2,
                    dropoff: nodes.len() - 1,
                    request_time: r.request_time,
                    wait_deadline: r.pickup_deadline(),
                    ideal: r.earliest_arrival(),
                    drop_deadline: r.dropoff_deadline(),
                }
            })
            .collect();
        let dist = nodes
            .iter()
            .map(|&a| nodes.iter().map(|&b| net.tt(a, b)).collect())
            .collect();
        Self {
            riders,
            dist,
            start_time,
            capacity: q.vehicle.capacity,
            n_onboard: q.onboard.len(),
        }
    }

    fn point(&self, kind: StopKind, i: usize) -> usize {
        match kind {
            StopKind::Pickup => self.riders[i].pickup,
            StopKind::Dropoff => self.riders[i].dropoff,
        }
    }

    /// Time and cost of a complete or partial sequence, or `None` when a
    /// limit is broken on the way.
    fn evaluate(&self, seq: &[(StopKind, usize)]) -> Option<Seconds> {
        let mut cur = 0;
        let mut t = self.start_time;
        let mut load = self.n_onboard;
        let mut cost = 0.0;
        for &(kind, i) in seq {
            let p = self.point(kind, i);
            t += self.dist[cur][p];
            cur = p;
            let r = &self.riders[i];
            match kind {
                StopKind::Pickup => {
                    load += 1;
                    if load > self.capacity || t > r.wait_deadline + EPS {
                        return None;
                    }
                }
                StopKind::Dropoff => {
                    if t > r.drop_deadline + EPS {
                        return None;
                    }
                    load -= 1;
                    cost += t - r.ideal;
                }
            }
        }
        Some(cost)
    }

    fn to_stops(&self, seq: &[(StopKind, usize)], q: &PdpQuery<'_>) -> Vec<Stop> {
        seq.iter()
            .map(|&(kind, i)| {
                let id = self.riders[i].id;
                let r = q
                    .onboard
                    .iter()
                    .chain(q.new_requests.iter())
                    .find(|r| r.id == id)
                    .expect("rider comes from the query");
                match kind {
                    StopKind::Pickup => Stop::pickup(r),
                    StopKind::Dropoff => Stop::dropoff(r),
                }
            })
            .collect()
    }
}

struct Dfs<'l> {
    local: &'l Local,
    prune: bool,
    all: u32,
    seq: Vec<(StopKind, usize)>,
    best: Option<(Seconds, Vec<(StopKind, usize)>)>,
    stats: SearchStats,
}

impl Dfs<'_> {
    /// True when some rider can no longer meet its limits even by heading
    /// straight to its remaining stops.
    fn doomed(&self, cur: usize, t: Seconds, picked: u32, dropped: u32) -> bool {
        let d = &self.local.dist[cur];
        self.local.riders.iter().enumerate().any(|(i, r)| {
            let bit = 1u32 << i;
            if dropped & bit != 0 {
                false
            } else if picked & bit != 0 {
                t + d[r.dropoff] > r.drop_deadline + EPS
            } else {
                let at_pickup = t + d[r.pickup];
                at_pickup > r.wait_deadline + EPS
                    || at_pickup + self.local.dist[r.pickup][r.dropoff] > r.drop_deadline + EPS
            }
        })
    }

    fn search(&mut self, cur: usize, t: Seconds, picked: u32, dropped: u32, load: usize, cost: Seconds) {
        if dropped == self.all {
            self.stats.complete_routes += 1;
            if self.best.as_ref().is_none_or(|(c, _)| cost < *c) {
                self.best = Some((cost, self.seq.clone()));
            }
            return;
        }
        let n = self.local.riders.len();
        // Pickups before dropoffs, each by request id.
        for kind in [StopKind::Pickup, StopKind::Dropoff] {
            for i in 0..n {
                let bit = 1u32 << i;
                let open = match kind {
                    StopKind::Pickup => picked & bit == 0,
                    StopKind::Dropoff => picked & bit != 0 && dropped & bit == 0,
                };
                if !open {
                    continue;
                }
                self.stats.partial_routes += 1;
                let r = &self.local.riders[i];
                let p = self.local.point(kind, i);
                let arr = t + self.local.dist[cur][p];
                let (np, nd, nl, nc) = match kind {
                    StopKind::Pickup => {
                        if load + 1 > self.local.capacity || arr > r.wait_deadline + EPS {
                            continue;
                        }
                        (picked | bit, dropped, load + 1, cost)
                    }
                    StopKind::Dropoff => {
                        if arr > r.drop_deadline + EPS {
                            continue;
                        }
                        (picked, dropped | bit, load - 1, cost + (arr - r.ideal))
                    }
                };
                if self.prune && self.doomed(p, arr, np, nd) {
                    continue;
                }
                self.seq.push((kind, i));
                self.search(p, arr, np, nd, nl, nc);
                self.seq.pop();
            }
        }
    }
}

/// Exact search over every interleaving of the remaining stops.
///
/// With `prune`, a partial route is dropped once any rider's remaining stop
/// cannot be reached in time even directly. Both modes return the same
/// result; pruning only changes how many partial routes are generated.
pub fn best_route_exhaustive(q: &PdpQuery<'_>, net: &Network, prune: bool) -> PdpResult {
    let local = Local::new(q, net);
    let n = local.riders.len();
    let picked0 = local
        .riders
        .iter()
        .enumerate()
        .filter(|(_, r)| r.onboard)
        .fold(0u32, |m, (i, _)| m | (1 << i));
    let mut dfs = Dfs {
        local: &local,
        prune,
        all: if n == 32 { u32::MAX } else { (1u32 << n) - 1 },
        seq: Vec::with_capacity(2 * n),
        best: None,
        stats: SearchStats::default(),
    };
    if local.n_onboard > local.capacity || (prune && dfs.doomed(0, local.start_time, picked0, 0)) {
        return PdpResult::infeasible(dfs.stats);
    }
    dfs.search(0, local.start_time, picked0, 0, local.n_onboard, 0.0);
    let stats = dfs.stats;
    match dfs.best {
        Some((cost, seq)) => PdpResult {
            feasible: true,
            route: local.to_stops(&seq, q),
            cost,
            stats,
        },
        None => PdpResult::infeasible(stats),
    }
}

/// Single-pass cheapest insertion into the passengers' committed dropoff
/// order, new requests taken by (request time, id).
pub fn best_route_insertion(q: &PdpQuery<'_>, net: &Network) -> PdpResult {
    let local = Local::new(q, net);
    let mut stats = SearchStats::default();
    let index_of = |id: RequestId| local.riders.iter().position(|r| r.id == id);
    let mut seq: Vec<(StopKind, usize)> = q
        .vehicle
        .route
        .iter()
        .filter(|s| s.kind == StopKind::Dropoff)
        .filter_map(|s| index_of(s.request).filter(|&i| local.riders[i].onboard))
        .map(|i| (StopKind::Dropoff, i))
        .collect();
    // Passengers missing from the committed route go last, by id.
    for (i, r) in local.riders.iter().enumerate() {
        if r.onboard && !seq.iter().any(|&(_, j)| j == i) {
            seq.push((StopKind::Dropoff, i));
        }
    }
    if local.n_onboard > local.capacity || local.evaluate(&seq).is_none() {
        return PdpResult::infeasible(stats);
    }
    let mut order: Vec<usize> = (0..local.riders.len()).filter(|&i| !local.riders[i].onboard).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&local.riders[a], &local.riders[b]);
        ra.request_time.total_cmp(&rb.request_time).then(ra.id.cmp(&rb.id))
    });
    let mut cost = local.evaluate(&seq).unwrap_or(f64::INFINITY);
    for i in order {
        let mut best: Option<(Seconds, Vec<(StopKind, usize)>)> = None;
        for a in 0..=seq.len() {
            for b in a..=seq.len() {
                let mut cand = Vec::with_capacity(seq.len() + 2);
                cand.extend_from_slice(&seq[..a]);
                cand.push((StopKind::Pickup, i));
                cand.extend_from_slice(&seq[a..b]);
                cand.push((StopKind::Dropoff, i));
                cand.extend_from_slice(&seq[b..]);
                stats.partial_routes += 1;
                if let Some(c) = local.evaluate(&cand) {
                    stats.complete_routes += 1;
                    if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
                        best = Some((c, cand));
                    }
                }
            }
        }
        match best {
            Some((c, s)) => {
                cost = c;
                seq = s;
            }
            None => return PdpResult::infeasible(stats),
        }
    }
    PdpResult {
        feasible: true,
        route: local.to_stops(&seq, q),
        cost,
        stats,
    }
}

/// Replays `route` from the vehicle's position. Returns `(false, inf)` when a
/// limit is broken and an error when the route is not well formed for the
/// given passengers and requests.
pub fn check_route(
    vehicle: &VehicleState,
    route: &[Stop],
    requests: &[&Request],
    now: Seconds,
    net: &Network,
) -> Result<(bool, Seconds)> {
    let find = |id: RequestId| {
        requests
            .iter()
            .find(|r| r.id == id)
            .copied()
            .ok_or_else(|| Error::Invariant(format!("route names unknown request {id}")))
    };
    let mut picked: Vec<RequestId> = vehicle.onboard.clone();
    let mut dropped: Vec<RequestId> = Vec::new();
    for s in route {
        let r = find(s.request)?;
        let expected = match s.kind {
            StopKind::Pickup => r.origin,
            StopKind::Dropoff => r.destination,
        };
        if s.node != expected {
            return Err(Error::Invariant(format!("{:?} stop of {} at wrong node", s.kind, r.id)));
        }
        match s.kind {
            StopKind::Pickup => {
                if picked.contains(&r.id) {
                    return Err(Error::Invariant(format!("{} picked up twice", r.id)));
                }
                picked.push(r.id);
            }
            StopKind::Dropoff => {
                if !picked.contains(&r.id) || dropped.contains(&r.id) {
                    return Err(Error::Invariant(format!("dropoff of {} out of order", r.id)));
                }
                dropped.push(r.id);
            }
        }
    }
    if let Some(id) = picked.iter().find(|id| !dropped.contains(id)) {
        return Err(Error::Invariant(format!("{id} is never dropped off")));
    }

    let (mut cur, mut t) = vehicle.departure(now);
    let mut load = vehicle.onboard.len();
    let mut cost = 0.0;
    if load > vehicle.capacity {
        return Ok((false, f64::INFINITY));
    }
    for s in route {
        let r = find(s.request)?;
        t += net.tt(cur, s.node);
        cur = s.node;
        match s.kind {
            StopKind::Pickup => {
                load += 1;
                if load > vehicle.capacity || t > r.pickup_deadline() + EPS {
                    return Ok((false, f64::INFINITY));
                }
            }
            StopKind::Dropoff => {
                if t > r.dropoff_deadline() + EPS {
                    return Ok((false, f64::INFINITY));
                }
                load -= 1;
                cost += t - r.earliest_arrival();
            }
        }
    }
    Ok((true, cost))
}

/// How queries are routed to the exact search or the insertion heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Planner {
    pub prune: bool,
    /// Largest passengers + new requests count solved exactly.
    pub exhaustive_limit: usize,
}

impl Default for Planner {
    fn default() -> Self {
        Self {
            prune: true,
            exhaustive_limit: 4,
        }
    }
}

impl Planner {
    pub fn plan(&self, q: &PdpQuery<'_>, net: &Network) -> PdpResult {
        if q.num_riders() <= self.exhaustive_limit {
            best_route_exhaustive(q, net, self.prune)
        } else {
            best_route_insertion(q, net)
        }
    }

    /// Always exact: single-request checks feed the feasible-vehicle cache,
    /// which relies on infeasibility persisting over time.
    pub fn plan_exact(&self, q: &PdpQuery<'_>, net: &Network) -> PdpResult {
        best_route_exhaustive(q, net, self.prune)
    }
}
