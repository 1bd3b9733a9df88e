//! Static road network and shortest-path travel times.
//!
//! Travel times never change during a run. Distance rows are computed by
//! Dijkstra from each origin; for networks up to [`EAGER_LIMIT`] nodes all rows
//! are filled at load time, larger networks fill rows on first use.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type Seconds = f64;

pub const EAGER_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node_id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: String,
    pub to: String,
    pub travel_time_seconds: f64,
}

pub struct Network {
    external: Vec<String>,
    index: HashMap<String, NodeId>,
    coords: Vec<(f64, f64)>,
    /// Outgoing edges sorted by head node id.
    out: Vec<Vec<(NodeId, Seconds)>>,
    n_edges: usize,
    rows: Vec<OnceLock<Box<[Seconds]>>>,
}

impl std::fmt::Debug for Network {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("nodes", &self.num_nodes())
            .field("edges", &self.n_edges)
            .finish()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem(Seconds, NodeId);
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl Network {
    pub fn load(nodes: &[NodeRecord], edges: &[EdgeRecord]) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        let mut external = Vec::with_capacity(nodes.len());
        let mut coords = Vec::with_capacity(nodes.len());
        for n in nodes {
            if !n.x.is_finite() || !n.y.is_finite() {
                return Err(Error::Data(format!("node {:?} has non-finite coordinates", n.node_id)));
            }
            if index.insert(n.node_id.clone(), external.len()).is_some() {
                return Err(Error::Data(format!("duplicate node id {:?}", n.node_id)));
            }
            external.push(n.node_id.clone());
            coords.push((n.x, n.y));
        }
        let mut out: Vec<Vec<(NodeId, Seconds)>> = vec![Vec::new(); nodes.len()];
        for e in edges {
            let from = *index.get(&e.from).ok_or_else(|| {
                Error::Data(format!("edge {} -> {} references unknown node {:?}", e.from, e.to, e.from))
            })?;
            let to = *index.get(&e.to).ok_or_else(|| {
                Error::Data(format!("edge {} -> {} references unknown node {:?}", e.from, e.to, e.to))
            })?;
            if !(e.travel_time_seconds > 0.0) || !e.travel_time_seconds.is_finite() {
                return Err(Error::Data(format!(
                    "edge {} -> {} has non-positive travel time {}",
                    e.from, e.to, e.travel_time_seconds
                )));
            }
            out[from].push((to, e.travel_time_seconds));
        }
        for adj in &mut out {
            // Parallel edges keep only their fastest copy.
            adj.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            adj.dedup_by_key(|e| e.0);
        }
        let n = nodes.len();
        let net = Self {
            external,
            index,
            coords,
            out,
            n_edges: edges.len(),
            rows: (0..n).map(|_| OnceLock::new()).collect(),
        };
        if n <= EAGER_LIMIT {
            (0..n).into_par_iter().for_each(|a| {
                net.row(a);
            });
        }
        Ok(net)
    }

    pub fn from_files(node_path: &Path, edge_path: &Path) -> Result<Self> {
        let nodes: Vec<NodeRecord> = read_records(node_path)?;
        let edges: Vec<EdgeRecord> = read_records(edge_path)?;
        Self::load(&nodes, &edges)
    }

    /// Directed grid with `edge_seconds` between 4-neighbours; node `r * cols + c`
    /// sits at `(c * spacing, r * spacing)` miles.
    pub fn grid(rows: usize, cols: usize, edge_seconds: Seconds, spacing_miles: f64) -> Result<Self> {
        let (nodes, edges) = grid_records(rows, cols, edge_seconds, spacing_miles);
        Self::load(&nodes, &edges)
    }

    pub fn num_nodes(&self) -> usize {
        self.external.len()
    }

    pub fn num_edges(&self) -> usize {
        self.n_edges
    }

    pub fn coords(&self, node: NodeId) -> (f64, f64) {
        self.coords[node]
    }

    pub fn external_id(&self, node: NodeId) -> &str {
        &self.external[node]
    }

    pub fn node_index(&self, external: &str) -> Option<NodeId> {
        self.index.get(external).copied()
    }

    pub fn out_edges(&self, node: NodeId) -> &[(NodeId, Seconds)] {
        &self.out[node]
    }

    pub fn node_records(&self) -> Vec<NodeRecord> {
        (0..self.num_nodes())
            .map(|i| NodeRecord {
                node_id: self.external[i].clone(),
                x: self.coords[i].0,
                y: self.coords[i].1,
            })
            .collect()
    }

    pub fn edge_records(&self) -> Vec<EdgeRecord> {
        let mut v = Vec::with_capacity(self.n_edges);
        for (a, adj) in self.out.iter().enumerate() {
            for &(b, t) in adj {
                v.push(EdgeRecord {
                    from: self.external[a].clone(),
                    to: self.external[b].clone(),
                    travel_time_seconds: t,
                });
            }
        }
        v
    }

    fn row(&self, origin: NodeId) -> &[Seconds] {
        self.rows[origin].get_or_init(|| self.dijkstra(origin))
    }

    fn dijkstra(&self, origin: NodeId) -> Box<[Seconds]> {
        let mut dist = vec![f64::INFINITY; self.num_nodes()];
        let mut heap = BinaryHeap::new();
        dist[origin] = 0.0;
        heap.push(HeapItem(0.0, origin));
        while let Some(HeapItem(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, w) in &self.out[u] {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(HeapItem(nd, v));
                }
            }
        }
        dist.into_boxed_slice()
    }

    fn check(&self, node: NodeId) -> Result<()> {
        if node < self.num_nodes() {
            Ok(())
        } else {
            Err(Error::Query(format!("node index {node} out of range")))
        }
    }

    /// Shortest-path duration, `None` when `b` is unreachable from `a`.
    pub fn travel_time(&self, a: NodeId, b: NodeId) -> Result<Option<Seconds>> {
        self.check(a)?;
        self.check(b)?;
        let t = self.tt(a, b);
        Ok(t.is_finite().then_some(t))
    }

    /// Unchecked travel time; `f64::INFINITY` when unreachable.
    #[inline]
    pub fn tt(&self, a: NodeId, b: NodeId) -> Seconds {
        if a == b {
            0.0
        } else {
            self.row(a)[b]
        }
    }

    /// First node after `a` on the canonical shortest path to `b`.
    pub fn next_hop(&self, a: NodeId, b: NodeId) -> Option<NodeId> {
        if a == b || !self.tt(a, b).is_finite() {
            return None;
        }
        let mut best: Option<(NodeId, Seconds)> = None;
        for &(w, e) in &self.out[a] {
            let via = e + self.tt(w, b);
            if best.is_none_or(|(_, bv)| via < bv) {
                best = Some((w, via));
            }
        }
        best.map(|(w, _)| w)
    }

    /// Canonical shortest path; among equal-duration continuations the
    /// smallest next node id is taken at every step.
    pub fn shortest_path(&self, a: NodeId, b: NodeId) -> Result<Vec<NodeId>> {
        self.check(a)?;
        self.check(b)?;
        if !self.tt(a, b).is_finite() {
            return Err(Error::Query(format!(
                "{} is unreachable from {}",
                self.external[b], self.external[a]
            )));
        }
        let mut path = vec![a];
        let mut cur = a;
        while cur != b {
            cur = self.next_hop(cur, b).expect("reachable target has a next hop");
            path.push(cur);
        }
        Ok(path)
    }

    pub fn edge_time(&self, a: NodeId, b: NodeId) -> Option<Seconds> {
        self.out[a]
            .binary_search_by_key(&b, |e| e.0)
            .ok()
            .map(|i| self.out[a][i].1)
    }

    /// Area of the convex hull of all node coordinates, in square miles.
    pub fn hull_area(&self) -> f64 {
        convex_hull_area(&self.coords)
    }
}

pub fn grid_records(
    rows: usize,
    cols: usize,
    edge_seconds: Seconds,
    spacing_miles: f64,
) -> (Vec<NodeRecord>, Vec<EdgeRecord>) {
    let mut nodes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            nodes.push(NodeRecord {
                node_id: (r * cols + c).to_string(),
                x: c as f64 * spacing_miles,
                y: r as f64 * spacing_miles,
            });
        }
    }
    let mut edges = Vec::new();
    let mut link = |a: usize, b: usize| {
        edges.push(EdgeRecord {
            from: a.to_string(),
            to: b.to_string(),
            travel_time_seconds: edge_seconds,
        });
    };
    for r in 0..rows {
        for c in 0..cols {
            let id = r * cols + c;
            if c + 1 < cols {
                link(id, id + 1);
                link(id + 1, id);
            }
            if r + 1 < rows {
                link(id, id + cols);
                link(id + cols, id);
            }
        }
    }
    (nodes, edges)
}

fn convex_hull_area(points: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return 0.0;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    let mut twice = 0.0;
    for i in 0..hull.len() {
        let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
        twice += a.0 * b.1 - b.0 * a.1;
    }
    twice.abs() / 2.0
}

pub(crate) fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    rdr.deserialize().collect::<std::result::Result<Vec<T>, _>>().map_err(|e| Error::csv(path, e))
}

pub(crate) fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
