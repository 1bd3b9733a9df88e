//! Node clusters, per-cluster demand histograms and the virtual requests
//! derived from them.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::VehicleState;
use crate::kmeans::{kmeans, nearest, Point};
use crate::network::{read_records, write_records, Network, NodeId, Seconds};

pub const DAY_SECONDS: f64 = 86_400.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centroids: Vec<Point>,
    pub node_cluster: Vec<usize>,
    pub representatives: Vec<NodeId>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Clusters from explicit centroids; each node joins the nearest one.
    pub fn from_centroids(net: &Network, centroids: Vec<Point>) -> Self {
        let n = net.num_nodes();
        let node_cluster = (0..n).map(|v| nearest(net.coords(v), &centroids)).collect();
        let representatives = centroids
            .iter()
            .map(|&c| {
                (0..n)
                    .min_by(|&a, &b| dist2(net.coords(a), c).total_cmp(&dist2(net.coords(b), c)).then(a.cmp(&b)))
                    .expect("network has nodes")
            })
            .collect();
        Self {
            centroids,
            node_cluster,
            representatives,
        }
    }
}

fn dist2(a: Point, b: Point) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Number of clusters so that each covers about one walking disc.
pub fn cluster_count(area: f64, alpha_miles: f64) -> usize {
    ((area / (2.0 * PI * alpha_miles * alpha_miles)).round() as usize).max(1)
}

pub fn build_clusters(net: &Network, alpha_miles: f64, seed: u64) -> Result<ClusterModel> {
    if !(alpha_miles > 0.0) {
        return Err(Error::Config(format!("alpha_miles must be positive, got {alpha_miles}")));
    }
    let k = cluster_count(net.hull_area(), alpha_miles);
    let points: Vec<Point> = (0..net.num_nodes()).map(|v| net.coords(v)).collect();
    let c = kmeans(&points, k, &mut ChaCha8Rng::seed_from_u64(seed));
    let mut model = ClusterModel::from_centroids(net, c.centroids);
    // Keep the K-means labels; they already point at the nearest centroid
    // except where a repair moved a centroid after the last assignment.
    model.node_cluster = c.labels;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandModel {
    pub bin_seconds: Seconds,
    /// `dist[cluster][bin][n]` = P(n requests).
    pub dist: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandRecord {
    pub cluster_id: usize,
    pub bin_index: usize,
    pub count_value: usize,
    pub probability: f64,
}

impl DemandModel {
    pub fn bins_per_day(bin_seconds: Seconds) -> usize {
        (DAY_SECONDS / bin_seconds).ceil() as usize
    }

    pub fn uniform_zero(k: usize, bin_seconds: Seconds) -> Self {
        let bins = Self::bins_per_day(bin_seconds);
        Self {
            bin_seconds,
            dist: vec![vec![vec![1.0]; bins]; k],
        }
    }

    pub fn bin_of(&self, t: Seconds) -> usize {
        let bins = self.dist.first().map_or(1, Vec::len);
        ((t.rem_euclid(DAY_SECONDS) / self.bin_seconds).floor() as usize).min(bins - 1)
    }

    pub fn distribution(&self, cluster: usize, bin: usize) -> &[f64] {
        &self.dist[cluster][bin]
    }

    pub fn records(&self) -> Vec<DemandRecord> {
        let mut out = Vec::new();
        for (c, bins) in self.dist.iter().enumerate() {
            for (b, p) in bins.iter().enumerate() {
                for (n, &prob) in p.iter().enumerate() {
                    out.push(DemandRecord {
                        cluster_id: c,
                        bin_index: b,
                        count_value: n,
                        probability: prob,
                    });
                }
            }
        }
        out
    }

    pub fn from_records(records: &[DemandRecord], k: usize, bin_seconds: Seconds) -> Result<Self> {
        let mut model = Self::uniform_zero(k, bin_seconds);
        let bins = Self::bins_per_day(bin_seconds);
        let mut seen: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for r in records {
            if r.cluster_id >= k || r.bin_index >= bins {
                return Err(Error::Data(format!(
                    "demand record (cluster {}, bin {}) outside {k} clusters x {bins} bins",
                    r.cluster_id, r.bin_index
                )));
            }
            let p = seen.entry((r.cluster_id, r.bin_index)).or_default();
            if p.len() <= r.count_value {
                p.resize(r.count_value + 1, 0.0);
            }
            p[r.count_value] = r.probability;
        }
        for ((c, b), p) in seen {
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Data(format!("demand for cluster {c}, bin {b} sums to {total}")));
            }
            model.dist[c][b] = p;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_records(path, &self.records())
    }

    pub fn load(path: &Path, k: usize, bin_seconds: Seconds) -> Result<Self> {
        Self::from_records(&read_records(path)?, k, bin_seconds)
    }
}

/// `history[day]` lists (request time of day, origin node) pairs.
pub fn fit_demand(history: &[Vec<(Seconds, NodeId)>], clusters: &ClusterModel, bin_seconds: Seconds) -> DemandModel {
    let mut model = DemandModel::uniform_zero(clusters.k(), bin_seconds);
    if history.is_empty() {
        return model;
    }
    let bins = DemandModel::bins_per_day(bin_seconds);
    let k = clusters.k();
    let mut counts = vec![vec![vec![0usize; history.len()]; bins]; k];
    for (day, reqs) in history.iter().enumerate() {
        for &(t, origin) in reqs {
            let b = model.bin_of(t);
            counts[clusters.node_cluster[origin]][b][day] += 1;
        }
    }
    let days = history.len() as f64;
    for c in 0..k {
        for b in 0..bins {
            let per_day = &counts[c][b];
            let n_max = per_day.iter().copied().max().unwrap_or(0);
            let mut p = vec![0.0; n_max + 1];
            for &n in per_day {
                p[n] += 1.0;
            }
            for x in &mut p {
                *x /= days;
            }
            model.dist[c][b] = p;
        }
    }
    model
}

/// p_i = P(at least i requests), for i = 1..n_max.
pub fn marginal_probabilities(p: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = p.iter().sum();
    if p.is_empty() || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Data(format!("distribution sums to {total}, not 1")));
    }
    let mut out = vec![0.0; p.len() - 1];
    let mut acc = 0.0;
    for i in (1..p.len()).rev() {
        acc += p[i];
        out[i - 1] = acc;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualRequest {
    pub cluster: usize,
    pub node: NodeId,
    pub probability: f64,
    /// 1-based position in the cluster's ordering.
    pub rank: usize,
}

/// Virtual requests for the bin `lookahead_bins` ahead of `now`.
pub fn generate_virtual_requests(
    model: &DemandModel,
    clusters: &ClusterModel,
    now: Seconds,
    lookahead_bins: usize,
    p_min: f64,
) -> Result<Vec<VirtualRequest>> {
    let bin = model.bin_of(now + lookahead_bins as f64 * model.bin_seconds);
    let mut out = Vec::new();
    for c in 0..clusters.k() {
        for (i, &p) in marginal_probabilities(model.distribution(c, bin))?.iter().enumerate() {
            if p > p_min {
                out.push(VirtualRequest {
                    cluster: c,
                    node: clusters.representatives[c],
                    probability: p,
                    rank: i + 1,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuppressionMode {
    /// Each nearby idle vehicle cancels one virtual, least likely first.
    PerVehicle,
    /// Any nearby idle vehicle cancels the whole cluster.
    WholeCluster,
    Off,
}

/// Removes virtual requests already covered by idle vehicles within
/// `max_wait / 2` of the cluster representative.
pub fn suppress_served_virtuals(
    virtuals: &[VirtualRequest],
    idle: &[&VehicleState],
    max_wait: Seconds,
    now: Seconds,
    net: &Network,
    mode: SuppressionMode,
) -> Vec<VirtualRequest> {
    if mode == SuppressionMode::Off {
        return virtuals.to_vec();
    }
    let mut near: BTreeMap<usize, usize> = BTreeMap::new();
    let mut rep_of: BTreeMap<usize, NodeId> = BTreeMap::new();
    for v in virtuals {
        rep_of.insert(v.cluster, v.node);
    }
    for (&c, &node) in &rep_of {
        let n = idle
            .iter()
            .filter(|v| v.time_to(net, node, now) <= max_wait / 2.0)
            .count();
        near.insert(c, n);
    }
    let mut max_rank: BTreeMap<usize, usize> = BTreeMap::new();
    for v in virtuals {
        let e = max_rank.entry(v.cluster).or_default();
        *e = (*e).max(v.rank);
    }
    virtuals
        .iter()
        .filter(|v| {
            let n = near[&v.cluster];
            match mode {
                SuppressionMode::WholeCluster => n == 0,
                // Keep the n_max - n most likely ranks.
                _ => v.rank + n <= max_rank[&v.cluster],
            }
        })
        .copied()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::VehicleId;

    #[test]
    fn cluster_count_formula() {
        assert_eq!(cluster_count(10.0, 0.4), 10);
        assert_eq!(cluster_count(1.0, 5.0), 1);
        // 15 x 15 grid, 0.2 mi spacing: hull area 7.84 sq mi.
        let net = Network::grid(15, 15, 60.0, 0.2).unwrap();
        let alpha = (net.hull_area() / (9.0 * 2.0 * PI)).sqrt();
        let m = build_clusters(&net, alpha, 1).unwrap();
        assert_eq!(m.k(), 9);
        assert_eq!(m.node_cluster.len(), 225);
        assert!(m.node_cluster.iter().all(|&c| c < 9));
    }

    fn one_cluster(net: &Network) -> ClusterModel {
        ClusterModel::from_centroids(net, vec![(0.0, 0.0)])
    }

    #[test]
    fn fit_counts() {
        let net = Network::grid(2, 2, 60.0, 0.2).unwrap();
        let c = one_cluster(&net);
        let day = |n: usize| vec![(10.0, 0); n];
        let m = fit_demand(&[day(2), day(3), day(2)], &c, 300.0);
        let p = m.distribution(0, 0);
        assert_eq!(p.len(), 4);
        assert!((p[2] - 2.0 / 3.0).abs() < 1e-15 && (p[3] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.distribution(0, 5), &[1.0]);
        let single = fit_demand(&[day(5)], &c, 300.0);
        assert_eq!(single.distribution(0, 0)[5], 1.0);
        let empty = fit_demand(&[], &c, 300.0);
        assert_eq!(empty.distribution(0, 0), &[1.0]);
    }

    #[test]
    fn marginals() {
        let p = marginal_probabilities(&[0.2, 0.5, 0.3]).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15 && (p[1] - 0.3).abs() < 1e-15);
        assert!(marginal_probabilities(&[1.0]).unwrap().is_empty());
        assert_eq!(marginal_probabilities(&[0.0, 0.0, 0.0, 1.0]).unwrap(), vec![1.0, 1.0, 1.0]);
        assert!(marginal_probabilities(&[0.5, 0.2]).is_err());
    }

    fn model_with(p: Vec<f64>) -> DemandModel {
        let mut m = DemandModel::uniform_zero(1, 300.0);
        m.dist[0][1] = p;
        m
    }

    #[test]
    fn virtual_threshold() {
        let net = Network::grid(2, 2, 60.0, 0.2).unwrap();
        let c = one_cluster(&net);
        // p = [0.9, 0.8, 0.4]
        let m = model_with(vec![0.1, 0.1, 0.4, 0.4]);
        let v = generate_virtual_requests(&m, &c, 0.0, 1, 0.75).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(generate_virtual_requests(&m, &c, 0.0, 1, 0.95).unwrap().len(), 0);
        let half = model_with(vec![0.5, 0.5]);
        assert_eq!(generate_virtual_requests(&half, &c, 0.0, 1, 0.0).unwrap().len(), 1);
    }

    #[test]
    fn suppression() {
        let net = Network::grid(1, 10, 50.0, 0.1).unwrap();
        let vr = |rank| VirtualRequest {
            cluster: 0,
            node: 0,
            probability: 1.0 - rank as f64 * 0.1,
            rank,
        };
        let near = VehicleState::parked(VehicleId(0), 4, 1);
        let near2 = VehicleState::parked(VehicleId(1), 4, 2);
        let far = VehicleState::parked(VehicleId(2), 4, 9);
        let two = [vr(1), vr(2)];
        let out = suppress_served_virtuals(&two, &[&near, &far], 300.0, 0.0, &net, SuppressionMode::PerVehicle);
        assert_eq!(out, vec![vr(1)]);
        assert_eq!(suppress_served_virtuals(&two, &[], 300.0, 0.0, &net, SuppressionMode::PerVehicle), two.to_vec());
        let out = suppress_served_virtuals(&[vr(1)], &[&near, &near2], 300.0, 0.0, &net, SuppressionMode::PerVehicle);
        assert!(out.is_empty());
        let out = suppress_served_virtuals(&two, &[&near], 300.0, 0.0, &net, SuppressionMode::WholeCluster);
        assert!(out.is_empty());
    }

    #[test]
    fn records_round_trip() {
        let m = model_with(vec![0.25, 0.5, 0.25]);
        let back = DemandModel::from_records(&m.records(), 1, 300.0).unwrap();
        assert_eq!(back, m);
    }
}
