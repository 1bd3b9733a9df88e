//! Splitting pending requests over worker slots, and the vehicle-transfer
//! cost of a split.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::fleet::{RequestId, VehicleId};
use crate::kmeans::{kmeans, Point};

/// Assigns each point to one of `k` slots.
pub trait Partitioner: Send + Sync {
    fn name(&self) -> &'static str;
    fn assign(&self, points: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct KMeansPartitioner;

impl Partitioner for KMeansPartitioner {
    fn name(&self) -> &'static str {
        "kmeans"
    }

    fn assign(&self, points: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        kmeans(points, k, rng).labels
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPartitioner;

impl Partitioner for RandomPartitioner {
    fn name(&self) -> &'static str {
        "random"
    }

    fn assign(&self, points: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        points.iter().map(|_| rng.random_range(0..k)).collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RoundRobinPartitioner;

impl Partitioner for RoundRobinPartitioner {
    fn name(&self) -> &'static str {
        "round_robin"
    }

    fn assign(&self, points: &[Point], k: usize, _rng: &mut ChaCha8Rng) -> Vec<usize> {
        (0..points.len()).map(|i| i % k).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestPartition {
    /// Request ids per slot, ascending. Slots may be empty.
    pub slots: Vec<Vec<RequestId>>,
    pub io_cost: usize,
}

impl RequestPartition {
    pub fn single(ids: &[RequestId], vehicles: &BTreeMap<RequestId, BTreeSet<VehicleId>>) -> Self {
        let slots = vec![ids.to_vec()];
        let io_cost = io_cost(&slots, vehicles);
        Self { slots, io_cost }
    }

    pub fn k(&self) -> usize {
        self.slots.len()
    }

    pub fn nonempty_slots(&self) -> usize {
        self.slots.iter().filter(|s| !s.is_empty()).count()
    }
}

/// Sum over slots of the number of distinct vehicles their requests need.
pub fn io_cost(slots: &[Vec<RequestId>], vehicles: &BTreeMap<RequestId, BTreeSet<VehicleId>>) -> usize {
    slots
        .iter()
        .map(|slot| {
            slot.iter()
                .filter_map(|r| vehicles.get(r))
                .flatten()
                .collect::<BTreeSet<_>>()
                .len()
        })
        .sum()
}

/// `requests` pairs each id with the coordinates of its origin.
pub fn partition_requests(
    requests: &[(RequestId, Point)],
    k: usize,
    partitioner: &dyn Partitioner,
    rng: &mut ChaCha8Rng,
    vehicles: &BTreeMap<RequestId, BTreeSet<VehicleId>>,
) -> RequestPartition {
    assert!(k >= 1, "k must be positive");
    let points: Vec<Point> = requests.iter().map(|r| r.1).collect();
    let labels = partitioner.assign(&points, k, rng);
    let slots_needed = labels.iter().max().map_or(k, |m| k.max(m + 1));
    let mut slots = vec![Vec::new(); slots_needed];
    for (&(id, _), &l) in requests.iter().zip(&labels) {
        slots[l].push(id);
    }
    for s in &mut slots {
        s.sort_unstable();
    }
    let io_cost = io_cost(&slots, vehicles);
    RequestPartition { slots, io_cost }
}

/// Exhaustive search over all splits into at most `k` slots; for small
/// instances only.
pub fn optimal_partition(
    ids: &[RequestId],
    k: usize,
    vehicles: &BTreeMap<RequestId, BTreeSet<VehicleId>>,
) -> RequestPartition {
    assert!(ids.len() <= 12, "exhaustive partitioning is limited to 12 requests");
    // Restricted growth strings enumerate each set partition once.
    fn rec(
        i: usize,
        blocks: usize,
        label: &mut Vec<usize>,
        ids: &[RequestId],
        k: usize,
        vehicles: &BTreeMap<RequestId, BTreeSet<VehicleId>>,
        best: &mut Option<RequestPartition>,
    ) {
        if i == ids.len() {
            let mut slots = vec![Vec::new(); k];
            for (&id, &l) in ids.iter().zip(label.iter()) {
                slots[l].push(id);
            }
            let cost = io_cost(&slots, vehicles);
            if best.as_ref().is_none_or(|b| cost < b.io_cost) {
                *best = Some(RequestPartition { slots, io_cost: cost });
            }
            return;
        }
        for l in 0..(blocks + 1).min(k) {
            label.push(l);
            rec(i + 1, blocks.max(l + 1), label, ids, k, vehicles, best);
            label.pop();
        }
    }
    let mut best = None;
    rec(0, 0, &mut Vec::new(), ids, k, vehicles, &mut best);
    best.expect("at least one partition exists")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn vsets(sets: &[&[u32]]) -> BTreeMap<RequestId, BTreeSet<VehicleId>> {
        sets.iter()
            .enumerate()
            .map(|(i, s)| (RequestId(i as u32), s.iter().map(|&v| VehicleId(v)).collect()))
            .collect()
    }

    #[test]
    fn single_slot_cost_is_union() {
        let v = vsets(&[&[0, 1], &[1, 2], &[5]]);
        let ids: Vec<RequestId> = v.keys().copied().collect();
        assert_eq!(RequestPartition::single(&ids, &v).io_cost, 4);
    }

    #[test]
    fn blobs_beat_random() {
        let v = vsets(&[&[0, 1], &[0, 1], &[7, 8], &[7, 8]]);
        let reqs: Vec<(RequestId, Point)> = vec![
            (RequestId(0), (0.0, 0.0)),
            (RequestId(1), (0.1, 0.0)),
            (RequestId(2), (5.0, 5.0)),
            (RequestId(3), (5.1, 5.0)),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let km = partition_requests(&reqs, 2, &KMeansPartitioner, &mut rng, &v);
        assert_eq!(km.io_cost, 4);
        let rnd = partition_requests(&reqs, 2, &RandomPartitioner, &mut rng, &v);
        assert!(km.io_cost <= rnd.io_cost);
    }

    #[test]
    fn one_location_one_slot() {
        let v = vsets(&[&[0], &[0], &[0], &[0]]);
        let reqs: Vec<(RequestId, Point)> = (0..4).map(|i| (RequestId(i), (1.0, 1.0))).collect();
        let p = partition_requests(&reqs, 3, &KMeansPartitioner, &mut ChaCha8Rng::seed_from_u64(5), &v);
        assert_eq!(p.nonempty_slots(), 1);
    }

    #[test]
    fn exhaustive_optimum() {
        let v = vsets(&[&[0, 1], &[2], &[0]]);
        let ids: Vec<RequestId> = v.keys().copied().collect();
        let best = optimal_partition(&ids, 2, &v);
        assert_eq!(best.io_cost, 3);
    }
}
