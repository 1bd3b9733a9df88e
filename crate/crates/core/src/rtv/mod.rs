//! Shareability graphs: request-vehicle and request-trip-vehicle.

pub mod cache;
pub mod partition;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::fleet::{Request, RequestId, Stop, VehicleId, VehicleState};
use crate::network::{Network, Seconds};
use crate::pdp::{PdpQuery, Planner, SearchStats, EPS};

pub use cache::FeasibleVehicleCache;
pub use partition::{io_cost, optimal_partition, partition_requests, Partitioner, RequestPartition};

/// Read-only state handed to the graph builders.
#[derive(Clone, Copy)]
pub struct Snapshot<'a> {
    pub net: &'a Network,
    pub requests: &'a BTreeMap<RequestId, Request>,
    pub fleet: &'a [VehicleState],
    pub now: Seconds,
}

impl<'a> Snapshot<'a> {
    pub fn request(&self, id: RequestId) -> &'a Request {
        &self.requests[&id]
    }

    pub fn vehicle(&self, id: VehicleId) -> &'a VehicleState {
        &self.fleet[id.0 as usize]
    }

    pub fn passengers(&self, v: &VehicleState) -> Vec<&'a Request> {
        v.onboard.iter().map(|id| self.request(*id)).collect()
    }
}

/// Vehicles able to reach the origin directly before the pickup deadline.
pub fn candidate_vehicles(r: &Request, fleet: &[VehicleState], now: Seconds, net: &Network) -> BTreeSet<VehicleId> {
    fleet
        .iter()
        .filter(|v| {
            let (from, t0) = v.departure(now);
            t0 + net.tt(from, r.origin) - r.request_time <= r.max_wait + EPS
        })
        .map(|v| v.id)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvEdge {
    pub cost: Seconds,
    pub route: Vec<Stop>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RvGraph {
    /// Unordered pairs stored as (smaller, larger).
    pub rr_edges: BTreeSet<(RequestId, RequestId)>,
    pub rv_edges: BTreeMap<(RequestId, VehicleId), TvEdge>,
    /// Feasible vehicles of every request checked this epoch.
    pub feasible: BTreeMap<RequestId, BTreeSet<VehicleId>>,
    pub pdp_calls: u64,
    pub stats: SearchStats,
}

impl RvGraph {
    pub fn shares(&self, a: RequestId, b: RequestId) -> bool {
        self.rr_edges.contains(&(a.min(b), a.max(b)))
    }
}

struct SlotOutput {
    rv: Vec<((RequestId, VehicleId), TvEdge)>,
    feasible: Vec<(RequestId, BTreeSet<VehicleId>)>,
    calls: u64,
    stats: SearchStats,
}

/// Empty vehicle of capacity 2 standing at `node` right now.
fn virtual_vehicle(node: usize, now: Seconds) -> VehicleState {
    let mut v = VehicleState::parked(VehicleId(u32::MAX), 2, node);
    v.arrival_time = now;
    v
}

/// `candidates[r]` lists the vehicles to check for request `r`; requests are
/// taken from the partition slots, which only decide where work runs.
pub fn build_rv(
    snap: &Snapshot<'_>,
    partition: &RequestPartition,
    candidates: &BTreeMap<RequestId, BTreeSet<VehicleId>>,
    planner: &Planner,
) -> RvGraph {
    let outputs: Vec<SlotOutput> = partition
        .slots
        .par_iter()
        .map(|slot| {
            let mut out = SlotOutput {
                rv: Vec::new(),
                feasible: Vec::new(),
                calls: 0,
                stats: SearchStats::default(),
            };
            for &rid in slot {
                let r = snap.request(rid);
                let mut ok = BTreeSet::new();
                for &vid in candidates.get(&rid).into_iter().flatten() {
                    let v = snap.vehicle(vid);
                    let q = PdpQuery::new(v, snap.passengers(v), vec![r], snap.now);
                    let res = planner.plan_exact(&q, snap.net);
                    out.calls += 1;
                    out.stats += res.stats;
                    if res.feasible {
                        ok.insert(vid);
                        out.rv.push((
                            (rid, vid),
                            TvEdge {
                                cost: res.cost,
                                route: res.route,
                            },
                        ));
                    }
                }
                out.feasible.push((rid, ok));
            }
            out
        })
        .collect();

    let mut g = RvGraph::default();
    for o in outputs {
        g.rv_edges.extend(o.rv);
        g.feasible.extend(o.feasible);
        g.pdp_calls += o.calls;
        g.stats += o.stats;
    }

    let ids: Vec<RequestId> = partition.slots.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let pairs: Vec<(Option<(RequestId, RequestId)>, u64, SearchStats)> = (0..ids.len())
        .into_par_iter()
        .flat_map_iter(|i| (i + 1..ids.len()).map(move |j| (i, j)))
        .map(|(i, j)| {
            let (a, b) = (snap.request(ids[i]), snap.request(ids[j]));
            let mut calls = 0;
            let mut stats = SearchStats::default();
            let mut shared = false;
            for node in [a.origin, b.origin] {
                let v = virtual_vehicle(node, snap.now);
                let q = PdpQuery::new(&v, vec![], vec![a, b], snap.now);
                let res = planner.plan_exact(&q, snap.net);
                calls += 1;
                stats += res.stats;
                if res.feasible {
                    shared = true;
                    break;
                }
            }
            (shared.then_some((a.id, b.id)), calls, stats)
        })
        .collect();
    for (edge, calls, stats) in pairs {
        if let Some(e) = edge {
            g.rr_edges.insert(e);
        }
        g.pdp_calls += calls;
        g.stats += stats;
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtvBudget {
    Unlimited,
    /// Route searches for trips of two or more requests, per vehicle.
    Steps(u64),
    WallClock(Duration),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RtvGraph {
    /// Keyed by vehicle, then by the ascending request ids of the trip.
    pub tv_edges: BTreeMap<(VehicleId, Vec<RequestId>), TvEdge>,
    /// Whether trip growth finished within budget, per vehicle.
    pub complete: BTreeMap<VehicleId, bool>,
    pub pdp_calls: u64,
    pub stats: SearchStats,
}

impl RtvGraph {
    pub fn trips(&self) -> BTreeSet<&Vec<RequestId>> {
        self.tv_edges.keys().map(|(_, t)| t).collect()
    }

    pub fn trips_of(&self, v: VehicleId) -> impl Iterator<Item = (&Vec<RequestId>, &TvEdge)> {
        self.tv_edges
            .range((v, Vec::new())..)
            .take_while(move |((w, _), _)| *w == v)
            .map(|((_, t), e)| (t, e))
    }

    pub fn num_edges(&self) -> usize {
        self.tv_edges.len()
    }
}

struct VehicleTrips {
    edges: Vec<(Vec<RequestId>, TvEdge)>,
    complete: bool,
    calls: u64,
    stats: SearchStats,
}

fn grow_trips(snap: &Snapshot<'_>, v: &VehicleState, rv: &RvGraph, planner: &Planner, budget: RtvBudget) -> VehicleTrips {
    let start = Instant::now();
    let mut out = VehicleTrips {
        edges: Vec::new(),
        complete: true,
        calls: 0,
        stats: SearchStats::default(),
    };
    let mut level: Vec<Vec<RequestId>> = Vec::new();
    for ((rid, vid), e) in &rv.rv_edges {
        if *vid == v.id {
            level.push(vec![*rid]);
            out.edges.push((vec![*rid], e.clone()));
        }
    }
    let passengers = snap.passengers(v);
    let mut searches = 0u64;
    'grow: for k in 2..=v.capacity {
        let prev: BTreeSet<&Vec<RequestId>> = level.iter().collect();
        let mut cands: BTreeSet<Vec<RequestId>> = BTreeSet::new();
        for (i, a) in level.iter().enumerate() {
            for b in &level[i + 1..] {
                let mut u: Vec<RequestId> = a.iter().chain(b.iter()).copied().collect();
                u.sort_unstable();
                u.dedup();
                if u.len() == k {
                    cands.insert(u);
                }
            }
        }
        let mut next = Vec::new();
        for trip in cands {
            let subsets_ok = (0..k).all(|skip| {
                let sub: Vec<RequestId> = trip
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != skip)
                    .map(|(_, r)| *r)
                    .collect();
                prev.contains(&sub)
            });
            if !subsets_ok || (k == 2 && !rv.shares(trip[0], trip[1])) {
                continue;
            }
            let exhausted = match budget {
                RtvBudget::Unlimited => false,
                RtvBudget::Steps(n) => searches >= n,
                RtvBudget::WallClock(d) => start.elapsed() >= d,
            };
            if exhausted {
                out.complete = false;
                break 'grow;
            }
            searches += 1;
            let new: Vec<&Request> = trip.iter().map(|id| snap.request(*id)).collect();
            let q = PdpQuery::new(v, passengers.clone(), new, snap.now);
            let res = planner.plan(&q, snap.net);
            out.calls += 1;
            out.stats += res.stats;
            if res.feasible {
                out.edges.push((
                    trip.clone(),
                    TvEdge {
                        cost: res.cost,
                        route: res.route,
                    },
                ));
                next.push(trip);
            }
        }
        if next.is_empty() {
            break;
        }
        level = next;
    }
    out
}

/// Grows trips per vehicle from its single-request edges, one size at a time.
pub fn build_rtv(snap: &Snapshot<'_>, rv: &RvGraph, planner: &Planner, budget: RtvBudget) -> RtvGraph {
    let per_vehicle: Vec<(VehicleId, VehicleTrips)> = snap
        .fleet
        .par_iter()
        .map(|v| (v.id, grow_trips(snap, v, rv, planner, budget)))
        .collect();
    let mut g = RtvGraph::default();
    for (vid, t) in per_vehicle {
        for (trip, e) in t.edges {
            g.tv_edges.insert((vid, trip), e);
        }
        g.complete.insert(vid, t.complete);
        g.pdp_calls += t.calls;
        g.stats += t.stats;
    }
    g
}
