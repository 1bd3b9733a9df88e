//! Rebalancing towards unserved requests and likely near-future demand.

use std::sync::Arc;

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use super::demand::{generate_virtual_requests, suppress_served_virtuals, ClusterModel, DemandModel, SuppressionMode};
use super::{rebalance_one_to_one, vehicle_cap, RebalanceCaps, RebalanceInput, RebalanceOutcome, Rebalancer, Target, TargetSpec};
use crate::error::Result;
use crate::fleet::VehicleState;

#[derive(Debug, Clone)]
pub struct ProactiveRebalancer {
    pub clusters: Arc<ClusterModel>,
    pub demand: Arc<DemandModel>,
    pub caps: RebalanceCaps,
    pub p_min: f64,
    pub lookahead_bins: usize,
    pub suppression: SuppressionMode,
    pub weight_by_probability: bool,
    /// Also target real unserved requests, not only virtual ones.
    pub include_real: bool,
}

/// Keeps real requests first when the target list is cut to `cap`.
fn cap_targets(real: Vec<TargetSpec>, virtuals: Vec<TargetSpec>, cap: usize, rng: &mut ChaCha8Rng) -> Vec<TargetSpec> {
    let pick = |items: Vec<TargetSpec>, n: usize, rng: &mut ChaCha8Rng| -> Vec<TargetSpec> {
        if items.len() <= n {
            return items;
        }
        let mut idx = sample(rng, items.len(), n).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| items[i]).collect()
    };
    if real.len() >= cap {
        return pick(real, cap, rng);
    }
    let room = cap - real.len();
    let mut out = real;
    out.extend(pick(virtuals, room, rng));
    out
}

impl Rebalancer for ProactiveRebalancer {
    fn name(&self) -> &'static str {
        "proactive"
    }

    fn plan(&self, input: &RebalanceInput<'_>, rng: &mut ChaCha8Rng) -> Result<RebalanceOutcome> {
        let raw = generate_virtual_requests(&self.demand, &self.clusters, input.now, self.lookahead_bins, self.p_min)?;
        let virtuals = suppress_served_virtuals(&raw, &input.idle, input.max_wait, input.now, input.net, self.suppression);
        let real: Vec<TargetSpec> = if self.include_real {
            input
                .unserved
                .iter()
                .map(|r| TargetSpec {
                    target: Target::Request { id: r.id },
                    node: r.origin,
                    probability: 1.0,
                })
                .collect()
        } else {
            Vec::new()
        };
        let virt: Vec<TargetSpec> = virtuals
            .iter()
            .map(|v| TargetSpec {
                target: Target::Virtual {
                    cluster: v.cluster,
                    rank: v.rank,
                },
                node: v.node,
                probability: v.probability,
            })
            .collect();
        let targets = cap_targets(real, virt, self.caps.r_max, rng);
        let v_cap = vehicle_cap(targets.len(), &self.caps);
        let idle: Vec<&VehicleState> = if input.idle.len() > v_cap {
            let mut idx = sample(rng, input.idle.len(), v_cap).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| input.idle[i]).collect()
        } else {
            input.idle.clone()
        };
        let mut out = rebalance_one_to_one(&idle, &targets, input.now, input.net, self.weight_by_probability);
        out.virtuals = virtuals.len();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::{Request, RequestId, VehicleId};
    use crate::network::Network;
    use rand::SeedableRng;

    fn setup() -> (Network, ClusterModel, DemandModel) {
        let net = Network::grid(1, 30, 60.0, 0.1).unwrap();
        let clusters = ClusterModel::from_centroids(&net, vec![(0.0, 0.0), (1.5, 0.0), (2.9, 0.0)]);
        let mut demand = DemandModel::uniform_zero(3, 300.0);
        for c in 0..3 {
            demand.dist[c][1] = vec![0.0, 1.0];
        }
        (net, clusters, demand)
    }

    fn rebalancer(clusters: ClusterModel, demand: DemandModel, r_max: usize) -> ProactiveRebalancer {
        ProactiveRebalancer {
            clusters: Arc::new(clusters),
            demand: Arc::new(demand),
            caps: RebalanceCaps {
                r_max,
                ..RebalanceCaps::default()
            },
            p_min: 0.75,
            lookahead_bins: 1,
            suppression: SuppressionMode::PerVehicle,
            weight_by_probability: false,
            include_real: true,
        }
    }

    #[test]
    fn virtuals_only() {
        let (net, clusters, demand) = setup();
        let reps = clusters.representatives.clone();
        // Vehicles far (> 150 s) from every representative.
        let fleet: Vec<VehicleState> = [5, 9, 20, 24, 25]
            .iter()
            .enumerate()
            .map(|(i, &n)| VehicleState::parked(VehicleId(i as u32), 4, n))
            .collect();
        let input = RebalanceInput {
            net: &net,
            idle: fleet.iter().collect(),
            unserved: vec![],
            now: 0.0,
            max_wait: 300.0,
        };
        let out = rebalancer(clusters, demand, 600).plan(&input, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.tasks.len(), 3);
        let mut nodes: Vec<usize> = out.tasks.iter().map(|t| t.node).collect();
        nodes.sort_unstable();
        let mut expect = reps;
        expect.sort_unstable();
        assert_eq!(nodes, expect);
    }

    #[test]
    fn no_idle_no_tasks() {
        let (net, clusters, demand) = setup();
        let input = RebalanceInput {
            net: &net,
            idle: vec![],
            unserved: vec![],
            now: 0.0,
            max_wait: 300.0,
        };
        let out = rebalancer(clusters, demand, 600).plan(&input, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(out.tasks.is_empty());
    }

    #[test]
    fn real_request_takes_priority() {
        let (net, clusters, mut demand) = setup();
        demand.dist[2][1] = vec![1.0];
        let r = Request::new(RequestId(4), 12, 13, 0.0, 300.0, 600.0, &net).unwrap();
        let fleet = [VehicleState::parked(VehicleId(0), 4, 29), VehicleState::parked(VehicleId(1), 4, 28)];
        let input = RebalanceInput {
            net: &net,
            idle: fleet.iter().collect(),
            unserved: vec![&r],
            now: 0.0,
            max_wait: 300.0,
        };
        let out = rebalancer(clusters, demand, 1).plan(&input, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.tasks.len(), 1);
        assert_eq!(out.tasks[0].target, Target::Request { id: r.id });
    }
}
