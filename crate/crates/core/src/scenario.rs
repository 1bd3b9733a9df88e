//! Synthetic scenarios: grid network, Poisson demand with a moving hotspot,
//! and i.i.d. history days; plus their on-disk form.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::config::{Config, ScenarioSpec};
use crate::error::{Error, Result};
use crate::network::{grid_records, read_records, write_records, EdgeRecord, Network, NodeId, NodeRecord, Seconds};

const STREAM_HOTSPOT: u64 = 1;
const STREAM_DAY: u64 = 2;
const STREAM_HISTORY: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trip {
    pub request_time: Seconds,
    pub origin: NodeId,
    pub destination: NodeId,
}

/// One line of a request file; nodes use external ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRow {
    pub request_time_s: f64,
    pub origin_node: String,
    pub dest_node: String,
}

#[derive(Debug)]
pub struct Scenario {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    pub net: Network,
    pub demand: Vec<Trip>,
    pub history: Vec<Vec<Trip>>,
}

impl Scenario {
    /// (time of day, origin) per history day, as the demand fit wants it.
    pub fn history_origins(&self) -> Vec<Vec<(Seconds, NodeId)>> {
        self.history
            .iter()
            .map(|day| day.iter().map(|t| (t.request_time, t.origin)).collect())
            .collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("history")).map_err(|e| Error::io(dir, e))?;
        write_records(&dir.join("nodes.csv"), &self.nodes)?;
        write_records(&dir.join("edges.csv"), &self.edges)?;
        write_trips(&dir.join("requests.csv"), &self.demand, &self.net)?;
        for (d, day) in self.history.iter().enumerate() {
            write_trips(&history_path(dir, d), day, &self.net)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let nodes: Vec<NodeRecord> = read_records(&dir.join("nodes.csv"))?;
        let edges: Vec<EdgeRecord> = read_records(&dir.join("edges.csv"))?;
        let net = Network::load(&nodes, &edges)?;
        let demand = read_trips(&dir.join("requests.csv"), &net)?;
        let mut history = Vec::new();
        loop {
            let p = history_path(dir, history.len());
            if !p.exists() {
                break;
            }
            history.push(read_trips(&p, &net)?);
        }
        Ok(Self {
            nodes,
            edges,
            net,
            demand,
            history,
        })
    }
}

fn history_path(dir: &Path, day: usize) -> PathBuf {
    dir.join("history").join(format!("day_{day:03}.csv"))
}

pub fn write_trips(path: &Path, trips: &[Trip], net: &Network) -> Result<()> {
    let rows: Vec<RequestRow> = trips
        .iter()
        .map(|t| RequestRow {
            request_time_s: t.request_time,
            origin_node: net.external_id(t.origin).to_string(),
            dest_node: net.external_id(t.destination).to_string(),
        })
        .collect();
    write_records(path, &rows)
}

/// Reads a request file; rows are returned sorted by time (stable).
pub fn read_trips(path: &Path, net: &Network) -> Result<Vec<Trip>> {
    let rows: Vec<RequestRow> = read_records(path)?;
    let node = |id: &str| {
        net.node_index(id)
            .ok_or_else(|| Error::Data(format!("{}: unknown node {id:?}", path.display())))
    };
    let mut trips = rows
        .iter()
        .map(|r| {
            if !r.request_time_s.is_finite() || r.request_time_s < 0.0 {
                return Err(Error::Data(format!("{}: bad request time {}", path.display(), r.request_time_s)));
            }
            let (origin, destination) = (node(&r.origin_node)?, node(&r.dest_node)?);
            if origin == destination {
                return Err(Error::Data(format!("{}: trip from {} to itself", path.display(), r.origin_node)));
            }
            Ok(Trip {
                request_time: r.request_time_s,
                origin,
                destination,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    trips.sort_by(|a, b| a.request_time.total_cmp(&b.request_time));
    Ok(trips)
}

/// Hotspot centres (row, col), one per period, shared by every day.
pub fn hotspot_schedule(spec: &ScenarioSpec, duration: Seconds, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_HOTSPOT);
    let periods = ((duration / spec.hotspot_period_s).ceil() as usize).max(1);
    (0..periods)
        .map(|_| (rng.random_range(0..spec.grid_rows), rng.random_range(0..spec.grid_cols)))
        .collect()
}

fn generate_day(
    spec: &ScenarioSpec,
    epoch_s: Seconds,
    duration: Seconds,
    centres: &[(usize, usize)],
    rng: &mut ChaCha8Rng,
) -> Vec<Trip> {
    let n = spec.grid_rows * spec.grid_cols;
    let rate = spec.rate_per_epoch / epoch_s;
    let mut out = Vec::new();
    if rate <= 0.0 {
        return out;
    }
    let gap = Exp::new(rate).expect("positive rate");
    let mut t = gap.sample(rng);
    while t < duration {
        let period = ((t / spec.hotspot_period_s) as usize).min(centres.len() - 1);
        let origin = if rng.random_bool(spec.hotspot_share) {
            let (cr, cc) = centres[period];
            let rad = spec.hotspot_radius;
            let r = rng.random_range(cr.saturating_sub(rad)..=(cr + rad).min(spec.grid_rows - 1));
            let c = rng.random_range(cc.saturating_sub(rad)..=(cc + rad).min(spec.grid_cols - 1));
            r * spec.grid_cols + c
        } else {
            rng.random_range(0..n)
        };
        let mut destination = rng.random_range(0..n - 1);
        if destination >= origin {
            destination += 1;
        }
        out.push(Trip {
            request_time: t,
            origin,
            destination,
        });
        t += gap.sample(rng);
    }
    out
}

/// Demand day plus `history_days` days drawn from the same process.
pub fn generate_scenario(cfg: &Config, seed: u64) -> Result<Scenario> {
    cfg.validate()?;
    let spec = &cfg.scenario;
    let duration = cfg.sim.duration_s;
    let (nodes, edges) = grid_records(spec.grid_rows, spec.grid_cols, spec.edge_s, spec.spacing_miles);
    let net = Network::load(&nodes, &edges)?;
    let centres = hotspot_schedule(spec, duration, seed);
    let day = |stream: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        generate_day(spec, cfg.sim.epoch_s, duration, &centres, &mut rng)
    };
    let demand = day(STREAM_DAY);
    let history = (0..spec.history_days).map(|d| day(STREAM_HISTORY + d as u64)).collect();
    Ok(Scenario {
        nodes,
        edges,
        net,
        demand,
        history,
    })
}
