//! Idle-vehicle repositioning.

pub mod demand;
pub mod proactive;

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use ridepool_optim::{min_cost_matching, solve_lp, IpInstance, MatchingInstance, Relation, SolveStatus, Variable};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fleet::{Request, RequestId, VehicleId, VehicleState};
use crate::network::{Network, NodeId, Seconds};

pub use demand::{
    build_clusters, fit_demand, generate_virtual_requests, marginal_probabilities, suppress_served_virtuals,
    ClusterModel, DemandModel, SuppressionMode, VirtualRequest,
};
pub use proactive::ProactiveRebalancer;

/// What a rebalancing vehicle is sent towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Target {
    Request { id: RequestId },
    Virtual { cluster: usize, rank: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebalanceTask {
    pub vehicle: VehicleId,
    pub target: Target,
    pub node: NodeId,
    pub tau: Seconds,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RebalanceCaps {
    pub gamma: f64,
    pub v_max: usize,
    pub r_max: usize,
}

impl Default for RebalanceCaps {
    fn default() -> Self {
        Self {
            gamma: 3.0,
            v_max: 300,
            r_max: 600,
        }
    }
}

pub struct RebalanceInput<'a> {
    pub net: &'a Network,
    /// Empty vehicles with no route that are not already rebalancing.
    pub idle: Vec<&'a VehicleState>,
    /// Pending requests left without a vehicle this epoch.
    pub unserved: Vec<&'a Request>,
    pub now: Seconds,
    pub max_wait: Seconds,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RebalanceOutcome {
    pub tasks: Vec<RebalanceTask>,
    /// Cardinality asked of the matching or LP.
    pub requested: usize,
    /// Simplex pivots or matching augmentations.
    pub steps: u64,
    pub virtuals: usize,
}

pub trait Rebalancer: Send + Sync {
    fn name(&self) -> &'static str;
    fn plan(&self, input: &RebalanceInput<'_>, rng: &mut ChaCha8Rng) -> Result<RebalanceOutcome>;
}

/// Leaves idle vehicles where they are.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoRebalancer;

impl Rebalancer for NoRebalancer {
    fn name(&self) -> &'static str {
        "none"
    }

    fn plan(&self, _input: &RebalanceInput<'_>, _rng: &mut ChaCha8Rng) -> Result<RebalanceOutcome> {
        Ok(RebalanceOutcome::default())
    }
}

fn tau(v: &VehicleState, node: NodeId, now: Seconds, net: &Network) -> Seconds {
    v.time_to(net, node, now)
}

/// LP over all idle vehicles and unserved requests; the total number of
/// moves is fixed and each vehicle moves at most once, but several vehicles
/// may head for the same request.
pub fn rebalance_baseline(
    idle: &[&VehicleState],
    unserved: &[&Request],
    now: Seconds,
    net: &Network,
) -> Result<RebalanceOutcome> {
    let m = idle.len().min(unserved.len());
    if m == 0 {
        return Ok(RebalanceOutcome::default());
    }
    let mut inst = IpInstance::new();
    let mut cols = Vec::new();
    for v in idle {
        for r in unserved {
            let t = tau(v, r.origin, now, net);
            if t.is_finite() {
                let c = inst.add_var(Variable::continuous(format!("y_{}_{}", v.id.0, r.id.0), 0.0, 1.0), t);
                cols.push((c, *v, *r, t));
            }
        }
    }
    for v in idle {
        let row: Vec<(usize, f64)> = cols.iter().filter(|x| x.1.id == v.id).map(|x| (x.0, 1.0)).collect();
        inst.add_constraint(format!("veh_{}", v.id.0), row, Relation::Le, 1.0);
    }
    inst.add_constraint("total", cols.iter().map(|x| (x.0, 1.0)).collect(), Relation::Eq, m as f64);
    let res = solve_lp(&inst)?;
    let mut out = RebalanceOutcome {
        requested: m,
        steps: res.stats.pivots,
        ..Default::default()
    };
    if res.status != SolveStatus::Optimal {
        return Ok(out);
    }
    for &(c, v, r, t) in &cols {
        if res.values[c] > 0.5 {
            out.tasks.push(RebalanceTask {
                vehicle: v.id,
                target: Target::Request { id: r.id },
                node: r.origin,
                tau: t,
            });
        }
    }
    Ok(out)
}

/// Caps the request set at `r_max`, then the vehicle set at
/// `min(v_max, gamma * min(|requests|, r_max))`, sampling uniformly without
/// replacement. Returns ascending indices into the inputs.
pub fn sample_for_rebalance(
    n_idle: usize,
    n_unserved: usize,
    caps: &RebalanceCaps,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let reqs = capped_sample(n_unserved, caps.r_max, rng);
    let v_cap = vehicle_cap(n_unserved, caps);
    (capped_sample(n_idle, v_cap, rng), reqs)
}

pub fn vehicle_cap(n_unserved: usize, caps: &RebalanceCaps) -> usize {
    let scaled = (caps.gamma * n_unserved.min(caps.r_max) as f64).floor() as usize;
    caps.v_max.min(scaled)
}

fn capped_sample(n: usize, cap: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    let mut idx = sample(rng, n, cap).into_vec();
    idx.sort_unstable();
    idx
}

/// A rebalancing destination with its matching weight (1 for real demand).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetSpec {
    pub target: Target,
    pub node: NodeId,
    pub probability: f64,
}

/// Min-cost one-to-one matching of vehicles to targets with the largest
/// possible number of pairs.
pub fn rebalance_one_to_one(
    idle: &[&VehicleState],
    targets: &[TargetSpec],
    now: Seconds,
    net: &Network,
    weight_by_probability: bool,
) -> RebalanceOutcome {
    let taus: Vec<Vec<Seconds>> = idle
        .iter()
        .map(|v| targets.iter().map(|t| tau(v, t.node, now, net)).collect())
        .collect();
    let costs: Vec<Vec<f64>> = taus
        .iter()
        .map(|row| {
            row.iter()
                .zip(targets)
                .map(|(&t, s)| if weight_by_probability { t / s.probability } else { t })
                .collect()
        })
        .collect();
    let requested = idle.len().min(targets.len());
    let m = min_cost_matching(&MatchingInstance::new(costs, requested));
    let tasks = m
        .pairs
        .iter()
        .map(|&(vi, ti)| RebalanceTask {
            vehicle: idle[vi].id,
            target: targets[ti].target,
            node: targets[ti].node,
            tau: taus[vi][ti],
        })
        .collect();
    RebalanceOutcome {
        tasks,
        requested,
        steps: m.augmentations,
        virtuals: 0,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReactiveRebalancer;

impl Rebalancer for ReactiveRebalancer {
    fn name(&self) -> &'static str {
        "reactive"
    }

    fn plan(&self, input: &RebalanceInput<'_>, _rng: &mut ChaCha8Rng) -> Result<RebalanceOutcome> {
        rebalance_baseline(&input.idle, &input.unserved, input.now, input.net)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OneToOneRebalancer {
    pub caps: RebalanceCaps,
    pub weight_by_probability: bool,
}

impl Rebalancer for OneToOneRebalancer {
    fn name(&self) -> &'static str {
        "one_to_one"
    }

    fn plan(&self, input: &RebalanceInput<'_>, rng: &mut ChaCha8Rng) -> Result<RebalanceOutcome> {
        let (vi, ri) = sample_for_rebalance(input.idle.len(), input.unserved.len(), &self.caps, rng);
        let idle: Vec<&VehicleState> = vi.iter().map(|&i| input.idle[i]).collect();
        let targets: Vec<TargetSpec> = ri
            .iter()
            .map(|&i| TargetSpec {
                target: Target::Request {
                    id: input.unserved[i].id,
                },
                node: input.unserved[i].origin,
                probability: 1.0,
            })
            .collect();
        Ok(rebalance_one_to_one(&idle, &targets, input.now, input.net, self.weight_by_probability))
    }
}

/// Violations of the one-vehicle-per-target and one-task-per-vehicle rules.
pub fn one_to_one_violations(tasks: &[RebalanceTask]) -> usize {
    let mut vehicles = BTreeSet::new();
    let mut targets = BTreeSet::new();
    tasks
        .iter()
        .filter(|t| !vehicles.insert(t.vehicle) | !targets.insert(t.target))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::RequestId;
    use rand::SeedableRng;

    fn line(n: usize) -> Network {
        Network::grid(1, n, 10.0, 0.1).unwrap()
    }

    fn req(id: u32, o: usize, net: &Network) -> Request {
        let d = if o == 0 { 1 } else { 0 };
        Request::new(RequestId(id), o, d, 0.0, 300.0, 600.0, net).unwrap()
    }

    #[test]
    fn baseline_sends_nearest_only() {
        let net = line(10);
        let v0 = VehicleState::parked(VehicleId(0), 4, 0);
        let v1 = VehicleState::parked(VehicleId(1), 4, 7);
        let r = req(0, 8, &net);
        let out = rebalance_baseline(&[&v0, &v1], &[&r], 0.0, &net).unwrap();
        assert_eq!(out.tasks.len(), 1);
        assert_eq!(out.tasks[0].vehicle, VehicleId(1));
        assert!(rebalance_baseline(&[], &[&r], 0.0, &net).unwrap().tasks.is_empty());
        let single = rebalance_baseline(&[&v0], &[&r], 0.0, &net).unwrap();
        assert_eq!((single.tasks[0].vehicle, single.tasks[0].node), (VehicleId(0), 8));
    }

    #[test]
    fn sampling_caps() {
        let caps = RebalanceCaps::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (v, r) = sample_for_rebalance(100, 10, &caps, &mut rng);
        assert_eq!((v.len(), r.len()), (30, 10));
        let (_, r) = sample_for_rebalance(1000, 700, &caps, &mut rng);
        assert_eq!(r.len(), 600);
        let (v, _) = sample_for_rebalance(5, 10, &caps, &mut rng);
        assert_eq!(v, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn one_to_one_cases() {
        // tau = [[10, 30], [20, 15]] on a line: targets at 1 and 3, vehicles at 0 and ...
        let net = Network::load(
            &(0..4)
                .map(|i| crate::network::NodeRecord {
                    node_id: i.to_string(),
                    x: i as f64,
                    y: 0.0,
                })
                .collect::<Vec<_>>(),
            &[(0, 2, 10.0), (0, 3, 30.0), (1, 2, 20.0), (1, 3, 15.0)]
                .iter()
                .map(|&(a, b, t)| crate::network::EdgeRecord {
                    from: a.to_string(),
                    to: b.to_string(),
                    travel_time_seconds: t,
                })
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let v0 = VehicleState::parked(VehicleId(0), 4, 0);
        let v1 = VehicleState::parked(VehicleId(1), 4, 1);
        let t = |node, id| TargetSpec {
            target: Target::Request { id: RequestId(id) },
            node,
            probability: 1.0,
        };
        let out = rebalance_one_to_one(&[&v0, &v1], &[t(2, 0), t(3, 1)], 0.0, &net, false);
        let pairs: Vec<(VehicleId, NodeId)> = out.tasks.iter().map(|x| (x.vehicle, x.node)).collect();
        assert_eq!(pairs, vec![(VehicleId(0), 2), (VehicleId(1), 3)]);
        assert_eq!(out.tasks.iter().map(|x| x.tau).sum::<f64>(), 25.0);
        assert!(rebalance_one_to_one(&[&v0, &v1], &[], 0.0, &net, false).tasks.is_empty());
    }

    #[test]
    fn one_target_many_vehicles() {
        let net = line(10);
        let vs: Vec<VehicleState> = [0, 5, 9].iter().enumerate().map(|(i, &n)| VehicleState::parked(VehicleId(i as u32), 4, n)).collect();
        let refs: Vec<&VehicleState> = vs.iter().collect();
        let target = TargetSpec {
            target: Target::Request { id: RequestId(0) },
            node: 6,
            probability: 1.0,
        };
        let out = rebalance_one_to_one(&refs, &[target], 0.0, &net, false);
        assert_eq!(out.tasks.len(), 1);
        assert_eq!(out.tasks[0].vehicle, VehicleId(1));
        assert_eq!(one_to_one_violations(&out.tasks), 0);
    }
}
