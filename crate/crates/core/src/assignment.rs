//! Trip-vehicle assignment: integer program, greedy start, and commitment.

use std::collections::{BTreeMap, BTreeSet};

use ridepool_optim::{solve_ip, Budget, IpInstance, Relation, SolveStats, SolveStatus, Variable};

use crate::error::{Error, Result};
use crate::fleet::{CostParams, Request, RequestId, RequestState, Stop, VehicleId, VehicleState};
use crate::network::{Network, Seconds};
use crate::pdp::check_route;
use crate::rtv::RtvGraph;

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentSolution {
    /// Chosen (vehicle, trip) pairs, ascending.
    pub chosen: Vec<(VehicleId, Vec<RequestId>)>,
    pub unassigned: BTreeSet<RequestId>,
    pub objective: Seconds,
    pub status: SolveStatus,
}

/// The program plus the meaning of each column: one per trip-vehicle edge in
/// graph order, then one per pending request.
#[derive(Debug, Clone)]
pub struct AssignmentIp {
    pub instance: IpInstance,
    pub edges: Vec<(VehicleId, Vec<RequestId>)>,
    pub pending: Vec<RequestId>,
}

impl AssignmentIp {
    pub fn values_for(&self, sol: &AssignmentSolution) -> Vec<f64> {
        let chosen: BTreeSet<&(VehicleId, Vec<RequestId>)> = sol.chosen.iter().collect();
        self.edges
            .iter()
            .map(|e| if chosen.contains(e) { 1.0 } else { 0.0 })
            .chain(
                self.pending
                    .iter()
                    .map(|r| if sol.unassigned.contains(r) { 1.0 } else { 0.0 }),
            )
            .collect()
    }

    pub fn solution_from(&self, values: &[f64], objective: Seconds, status: SolveStatus) -> AssignmentSolution {
        let chosen = self
            .edges
            .iter()
            .zip(values)
            .filter(|(_, &x)| x > 0.5)
            .map(|(e, _)| e.clone())
            .collect();
        let unassigned = self
            .pending
            .iter()
            .zip(&values[self.edges.len()..])
            .filter(|(_, &x)| x > 0.5)
            .map(|(r, _)| *r)
            .collect();
        AssignmentSolution {
            chosen,
            unassigned,
            objective,
            status,
        }
    }
}

/// `pending` lists every request that may still be (re)assigned.
pub fn build_assignment_ip(rtv: &RtvGraph, pending: &[RequestId], params: &CostParams) -> AssignmentIp {
    let mut pending = pending.to_vec();
    pending.sort_unstable();
    pending.dedup();
    let mut inst = IpInstance::new();
    let mut edges = Vec::with_capacity(rtv.num_edges());
    let mut by_vehicle: BTreeMap<VehicleId, Vec<(usize, f64)>> = BTreeMap::new();
    let mut by_request: BTreeMap<RequestId, Vec<(usize, f64)>> = BTreeMap::new();
    for ((v, trip), e) in &rtv.tv_edges {
        let name = format!(
            "x_{}_{}",
            v.0,
            trip.iter().map(|r| r.0.to_string()).collect::<Vec<_>>().join("_")
        );
        let col = inst.add_var(Variable::binary(name), e.cost);
        by_vehicle.entry(*v).or_default().push((col, 1.0));
        for r in trip {
            by_request.entry(*r).or_default().push((col, 1.0));
        }
        edges.push((*v, trip.clone()));
    }
    for r in &pending {
        let col = inst.add_var(Variable::binary(format!("chi_{}", r.0)), params.unassigned_penalty);
        by_request.entry(*r).or_default().push((col, 1.0));
    }
    for (v, row) in by_vehicle {
        inst.add_constraint(format!("veh_{}", v.0), row, Relation::Le, 1.0);
    }
    for r in &pending {
        let row = by_request.remove(r).unwrap_or_default();
        inst.add_constraint(format!("req_{}", r.0), row, Relation::Eq, 1.0);
    }
    AssignmentIp {
        instance: inst,
        edges,
        pending,
    }
}

/// Larger trips first, then cheaper, then by ids.
pub fn greedy_warm_start(rtv: &RtvGraph, pending: &[RequestId], params: &CostParams) -> AssignmentSolution {
    let mut edges: Vec<(&(VehicleId, Vec<RequestId>), Seconds)> =
        rtv.tv_edges.iter().map(|(k, e)| (k, e.cost)).collect();
    edges.sort_by(|(a, ca), (b, cb)| {
        b.1.len()
            .cmp(&a.1.len())
            .then(ca.total_cmp(cb))
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    let mut used: BTreeSet<VehicleId> = BTreeSet::new();
    let mut covered: BTreeSet<RequestId> = BTreeSet::new();
    let mut chosen = Vec::new();
    let mut objective = 0.0;
    for ((v, trip), cost) in edges {
        if used.contains(v) || trip.iter().any(|r| covered.contains(r)) {
            continue;
        }
        used.insert(*v);
        covered.extend(trip.iter().copied());
        chosen.push((*v, trip.clone()));
        objective += cost;
    }
    chosen.sort();
    let unassigned: BTreeSet<RequestId> = pending.iter().filter(|r| !covered.contains(r)).copied().collect();
    objective += unassigned.len() as f64 * params.unassigned_penalty;
    AssignmentSolution {
        chosen,
        unassigned,
        objective,
        status: SolveStatus::IncumbentBudgetExhausted,
    }
}

pub fn solve_assignment(
    ip: &AssignmentIp,
    warm: Option<&AssignmentSolution>,
    budget: Budget,
) -> Result<(AssignmentSolution, SolveStats)> {
    let ws = warm.map(|w| ip.values_for(w));
    let res = solve_ip(&ip.instance, ws.as_deref(), budget)?;
    if !res.status.has_solution() {
        return Err(Error::Invariant(format!("assignment program returned {}", res.status)));
    }
    Ok((ip.solution_from(&res.values, res.objective, res.status), res.stats))
}

/// Installs the chosen routes. Vehicles left out keep only their
/// passengers' dropoffs; requests that lost their vehicle become pending.
pub fn commit(
    sol: &AssignmentSolution,
    rtv: &RtvGraph,
    fleet: &mut [VehicleState],
    requests: &mut BTreeMap<RequestId, Request>,
    now: Seconds,
    net: &Network,
) -> Result<()> {
    let chosen: BTreeMap<VehicleId, &Vec<RequestId>> = sol.chosen.iter().map(|(v, t)| (*v, t)).collect();
    let mut served: BTreeSet<RequestId> = BTreeSet::new();
    for v in fleet.iter_mut() {
        let Some(trip) = chosen.get(&v.id) else {
            v.route = v.passenger_route();
            continue;
        };
        let edge = rtv
            .tv_edges
            .get(&(v.id, (*trip).clone()))
            .ok_or_else(|| Error::Invariant(format!("{} has no edge for its trip", v.id)))?;
        let riders: Vec<&Request> = v.onboard.iter().chain(trip.iter()).map(|id| &requests[id]).collect();
        let (ok, cost) = check_route(v, &edge.route, &riders, now, net)?;
        if !ok || cost != edge.cost {
            return Err(Error::Invariant(format!("route for {} fails re-validation", v.id)));
        }
        let dropped: BTreeSet<RequestId> = edge
            .route
            .iter()
            .filter(|s| s.kind == crate::fleet::StopKind::Dropoff)
            .map(|s: &Stop| s.request)
            .collect();
        if v.onboard.iter().any(|p| !dropped.contains(p)) {
            return Err(Error::Invariant(format!("{} would strand a passenger", v.id)));
        }
        v.route = edge.route.clone();
        v.rebalance_target = None;
        served.extend(trip.iter().copied());
    }
    for r in requests.values_mut() {
        match r.state {
            RequestState::Pending if served.contains(&r.id) => r.transition(RequestState::Assigned)?,
            RequestState::Assigned if !served.contains(&r.id) => r.transition(RequestState::Pending)?,
            _ => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rtv::TvEdge;

    fn rtv(edges: &[(u32, &[u32], f64)]) -> RtvGraph {
        let mut g = RtvGraph::default();
        for (v, trip, c) in edges {
            g.tv_edges.insert(
                (VehicleId(*v), trip.iter().map(|&r| RequestId(r)).collect()),
                TvEdge {
                    cost: *c,
                    route: Vec::new(),
                },
            );
        }
        g
    }

    fn ids(v: &[u32]) -> Vec<RequestId> {
        v.iter().map(|&r| RequestId(r)).collect()
    }

    const P: CostParams = CostParams {
        unassigned_penalty: 10_000.0,
    };

    #[test]
    fn no_edges_all_unassigned() {
        let g = rtv(&[]);
        let ip = build_assignment_ip(&g, &ids(&[0, 1, 2]), &P);
        let (sol, _) = solve_assignment(&ip, None, Budget::Unlimited).unwrap();
        assert_eq!(sol.objective, 30_000.0);
        assert_eq!(sol.unassigned.len(), 3);
    }

    #[test]
    fn single_trip_assigned() {
        let g = rtv(&[(0, &[0], 40.0)]);
        let ip = build_assignment_ip(&g, &ids(&[0]), &P);
        let (sol, _) = solve_assignment(&ip, None, Budget::Unlimited).unwrap();
        assert_eq!(sol.objective, 40.0);
        assert_eq!(sol.chosen, vec![(VehicleId(0), ids(&[0]))]);
    }

    #[test]
    fn overlapping_trips() {
        let g = rtv(&[
            (0, &[0, 1], 100.0),
            (0, &[2], 5.0),
            (1, &[1, 2], 50.0),
            (1, &[0], 20.0),
            (0, &[0], 1.0),
        ]);
        let ip = build_assignment_ip(&g, &ids(&[0, 1, 2]), &P);
        let (sol, _) = solve_assignment(&ip, None, Budget::Unlimited).unwrap();
        // Options covering everything: {0,1}@0 + nothing else for 2 (penalty),
        // {2}@0 + {0}@1 leaves 1, {0}@0 + {1,2}@1 = 51.
        assert_eq!(sol.objective, 51.0);
    }

    #[test]
    fn greedy_prefers_larger_trips() {
        let g = rtv(&[(0, &[0, 1], 100.0), (0, &[0], 10.0)]);
        let w = greedy_warm_start(&g, &ids(&[0, 1]), &P);
        assert_eq!(w.chosen, vec![(VehicleId(0), ids(&[0, 1]))]);
        assert_eq!(w.objective, 100.0);
        let empty = greedy_warm_start(&rtv(&[]), &ids(&[3]), &P);
        assert!(empty.chosen.is_empty());
        assert_eq!(empty.unassigned, ids(&[3]).into_iter().collect());
    }

    #[test]
    fn warm_start_respected_at_zero_budget() {
        let g = rtv(&[(0, &[0], 40.0), (1, &[0], 30.0)]);
        let ip = build_assignment_ip(&g, &ids(&[0]), &P);
        let w = greedy_warm_start(&g, &ids(&[0]), &P);
        let (sol, _) = solve_assignment(&ip, Some(&w), Budget::Nodes(0)).unwrap();
        assert_eq!(sol.status, SolveStatus::IncumbentBudgetExhausted);
        assert_eq!(sol.objective, w.objective);
    }
}
