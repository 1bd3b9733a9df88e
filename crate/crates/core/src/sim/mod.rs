//! The epoch loop: move vehicles, take in requests, drop stale ones, build
//! the shareability graphs, assign, rebalance, and record what happened.

pub mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ridepool_optim::{write_lp, Budget, SolveStatus};

use crate::assignment::{build_assignment_ip, commit, greedy_warm_start, solve_assignment, AssignmentSolution};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::fleet::{CostParams, Request, RequestId, RequestState, StopKind, VehicleId, VehicleState};
use crate::network::{Network, NodeId, Seconds};
use crate::pdp::{best_route_exhaustive, PdpQuery, Planner};
use crate::rebalance::{build_clusters, fit_demand, ClusterModel, DemandModel, RebalanceInput, Rebalancer};
use crate::registry::{partitioners, rebalancers, BuildContext};
use crate::rtv::{
    build_rtv, build_rv, candidate_vehicles, partition_requests, FeasibleVehicleCache, Partitioner, RtvBudget,
    Snapshot,
};
use crate::scenario::Trip;

pub use report::{
    audit_rebalance_log, jsonl_string, write_jsonl, CacheAudit, DecisionRecord, EpochMetrics, RebalanceAudit,
    RebalanceRecord, RunReport,
};

/// Slack allowed between planned and executed stop times.
const EXEC_TOL: Seconds = 1e-6;

/// Node clustering is fixed per network so saved demand tables stay valid.
pub const CLUSTER_SEED: u64 = 0;

const STREAM_FLEET: u64 = 1;
const STREAM_PARTITION: u64 = 2;
const STREAM_REBALANCE: u64 = 3;
const STREAM_AUDIT: u64 = 4;

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

/// Clusters plus the demand histogram fitted on them.
#[derive(Debug, Clone)]
pub struct DemandFit {
    pub clusters: Arc<ClusterModel>,
    pub model: Arc<DemandModel>,
}

impl DemandFit {
    pub fn fit(net: &Network, cfg: &SimConfig, history: &[Vec<(Seconds, NodeId)>]) -> Result<Self> {
        let clusters = build_clusters(net, cfg.alpha_miles, CLUSTER_SEED)?;
        let model = fit_demand(history, &clusters, cfg.bin_s);
        Ok(Self {
            clusters: Arc::new(clusters),
            model: Arc::new(model),
        })
    }

    pub fn load(net: &Network, cfg: &SimConfig, path: &Path) -> Result<Self> {
        let clusters = build_clusters(net, cfg.alpha_miles, CLUSTER_SEED)?;
        let model = DemandModel::load(path, clusters.k(), cfg.bin_s)?;
        Ok(Self {
            clusters: Arc::new(clusters),
            model: Arc::new(model),
        })
    }
}

/// Everything a run leaves behind.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub decisions: Vec<DecisionRecord>,
    pub rebalances: Vec<RebalanceRecord>,
}

impl RunOutput {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let report = dir.join("report.json");
        std::fs::write(&report, self.report.to_json()?).map_err(|e| Error::io(&report, e))?;
        let summary = dir.join("summary.tsv");
        std::fs::write(&summary, self.report.summary()).map_err(|e| Error::io(&summary, e))?;
        write_jsonl(&dir.join("epochs.jsonl"), &self.report.series)?;
        write_jsonl(&dir.join("decisions.jsonl"), &self.decisions)?;
        write_jsonl(&dir.join("rebalance.jsonl"), &self.rebalances)
    }
}

pub struct Simulation<'a> {
    net: &'a Network,
    cfg: SimConfig,
    params: CostParams,
    planner: Planner,
    partitioner: Box<dyn Partitioner>,
    rebalancer: Box<dyn Rebalancer>,
    demand: Vec<Trip>,
    cursor: usize,
    horizon: Seconds,
    requests: BTreeMap<RequestId, Request>,
    fleet: Vec<VehicleState>,
    cache: Option<FeasibleVehicleCache>,
    rng_partition: ChaCha8Rng,
    rng_rebalance: ChaCha8Rng,
    rng_audit: ChaCha8Rng,
    now: Seconds,
    epoch: u64,
    metrics: Vec<EpochMetrics>,
    decisions: Vec<DecisionRecord>,
    rebalances: Vec<RebalanceRecord>,
    audit: CacheAudit,
    lp_dump: Option<PathBuf>,
}

impl<'a> Simulation<'a> {
    /// Strategies come from the built-in registries, by the names in `cfg`.
    pub fn new(net: &'a Network, cfg: &SimConfig, demand: Vec<Trip>, fit: Option<&DemandFit>) -> Result<Self> {
        cfg.validate()?;
        let ctx = BuildContext {
            config: cfg,
            clusters: fit.map(|f| &f.clusters),
            demand: fit.map(|f| &f.model),
        };
        let rebalancer = rebalancers().build(cfg.rebalancer_name(), &ctx)?;
        let partitioner = partitioners().build(cfg.partitioner_name(), &ctx)?;
        Self::with_strategies(net, cfg, demand, partitioner, rebalancer)
    }

    pub fn with_strategies(
        net: &'a Network,
        cfg: &SimConfig,
        mut demand: Vec<Trip>,
        partitioner: Box<dyn Partitioner>,
        rebalancer: Box<dyn Rebalancer>,
    ) -> Result<Self> {
        cfg.validate()?;
        let n = net.num_nodes();
        if n == 0 {
            return Err(Error::Data("network has no nodes".into()));
        }
        for t in &demand {
            if t.origin >= n || t.destination >= n || !(t.request_time >= 0.0) || !t.request_time.is_finite() {
                return Err(Error::Data(format!("bad trip {t:?}")));
            }
        }
        demand.sort_by(|a, b| a.request_time.total_cmp(&b.request_time));
        let horizon = demand.last().map_or(cfg.duration_s, |t| t.request_time.max(cfg.duration_s));
        let mut rng_fleet = stream(cfg.seed, STREAM_FLEET);
        let fleet = (0..cfg.fleet_size)
            .map(|i| VehicleState::parked(VehicleId(i as u32), cfg.capacity, rng_fleet.random_range(0..n)))
            .collect();
        Ok(Self {
            net,
            params: cfg.cost_params(),
            planner: Planner {
                prune: cfg.variant.uses_prune(),
                exhaustive_limit: cfg.exhaustive_limit,
            },
            partitioner,
            rebalancer,
            demand,
            cursor: 0,
            horizon,
            requests: BTreeMap::new(),
            fleet,
            cache: cfg.variant.uses_cache().then(FeasibleVehicleCache::new),
            rng_partition: stream(cfg.seed, STREAM_PARTITION),
            rng_rebalance: stream(cfg.seed, STREAM_REBALANCE),
            rng_audit: stream(cfg.seed, STREAM_AUDIT),
            now: 0.0,
            epoch: 0,
            metrics: Vec::new(),
            decisions: Vec::new(),
            rebalances: Vec::new(),
            audit: CacheAudit::default(),
            lp_dump: None,
            cfg: cfg.clone(),
        })
    }

    /// Writes each epoch's assignment program to `dir/epoch_NNNNN.lp`.
    pub fn dump_lp_to(&mut self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.lp_dump = Some(dir.to_path_buf());
        Ok(())
    }

    pub fn now(&self) -> Seconds {
        self.now
    }

    pub fn fleet(&self) -> &[VehicleState] {
        &self.fleet
    }

    pub fn fleet_mut(&mut self) -> &mut [VehicleState] {
        &mut self.fleet
    }

    pub fn requests(&self) -> &BTreeMap<RequestId, Request> {
        &self.requests
    }

    pub fn metrics(&self) -> &[EpochMetrics] {
        &self.metrics
    }

    pub fn decisions(&self) -> &[DecisionRecord] {
        &self.decisions
    }

    fn open_requests(&self) -> Vec<RequestId> {
        self.requests
            .values()
            .filter(|r| matches!(r.state, RequestState::Pending | RequestState::Assigned))
            .map(|r| r.id)
            .collect()
    }

    fn count(&self, s: RequestState) -> usize {
        self.requests.values().filter(|r| r.state == s).count()
    }

    /// Moves every vehicle from `from` to `until`, executing the stops it
    /// reaches. Returns the requests picked up, ascending.
    pub fn advance(&mut self, from: Seconds, until: Seconds) -> Result<Vec<RequestId>> {
        let mut picked = Vec::new();
        for v in &mut self.fleet {
            advance_vehicle(v, from, until, self.net, &mut self.requests, self.cache.as_mut(), &mut picked)?;
        }
        picked.sort_unstable();
        Ok(picked)
    }

    fn ingest(&mut self, now: Seconds) -> Result<usize> {
        let start = self.cursor;
        while self.cursor < self.demand.len() && self.demand[self.cursor].request_time <= now {
            let t = self.demand[self.cursor];
            let id = RequestId(self.cursor as u32);
            let r = Request::new(
                id,
                t.origin,
                t.destination,
                t.request_time,
                self.cfg.omega_s,
                self.cfg.delta_s,
                self.net,
            )?;
            self.requests.insert(id, r);
            self.cursor += 1;
        }
        Ok(self.cursor - start)
    }

    /// Rejects open requests that have waited longer than their bound and
    /// strips their stops from vehicle routes.
    pub fn expire(&mut self, now: Seconds) -> Result<Vec<RequestId>> {
        let stale: Vec<RequestId> = self
            .requests
            .values()
            .filter(|r| matches!(r.state, RequestState::Pending | RequestState::Assigned))
            .filter(|r| now - r.request_time > r.max_wait)
            .map(|r| r.id)
            .collect();
        self.reject(&stale)?;
        Ok(stale)
    }

    fn reject(&mut self, ids: &[RequestId]) -> Result<()> {
        if ids.is_empty() {
            return Ok(());
        }
        let set: BTreeSet<RequestId> = ids.iter().copied().collect();
        for id in ids {
            self.requests
                .get_mut(id)
                .expect("known request")
                .transition(RequestState::Rejected)?;
            if let Some(c) = self.cache.as_mut() {
                c.forget(*id);
            }
        }
        for v in &mut self.fleet {
            v.route.retain(|s| !set.contains(&s.request));
        }
        Ok(())
    }

    /// One epoch of the pipeline.
    pub fn step(&mut self) -> Result<&EpochMetrics> {
        let from = self.now;
        self.epoch += 1;
        let now = self.epoch as f64 * self.cfg.epoch_s;
        let picked = self.advance(from, now)?;
        self.now = now;
        let new = self.ingest(now)?;
        self.expire(now)?;

        let clock = Instant::now();
        let net = self.net;
        let open = self.open_requests();
        let mut m = EpochMetrics {
            epoch: self.epoch,
            time: now,
            new,
            picked_up: picked.len(),
            ..Default::default()
        };

        // Candidate vehicles, narrowed by the cache.
        let mut candidates: BTreeMap<RequestId, BTreeSet<VehicleId>> = BTreeMap::new();
        let mut excluded: Vec<(RequestId, VehicleId)> = Vec::new();
        for &rid in &open {
            let r = &self.requests[&rid];
            let mut c = candidate_vehicles(r, &self.fleet, now, net);
            if let Some(entry) = self.cache.as_ref().and_then(|c| c.get(rid)) {
                excluded.extend(c.iter().filter(|v| !entry.vehicles.contains(v)).map(|&v| (rid, v)));
                c.retain(|v| entry.vehicles.contains(v));
                if entry.vehicles.is_empty() {
                    m.cache_dropped += 1;
                    continue;
                }
            }
            candidates.insert(rid, c);
        }

        let points: Vec<(RequestId, (f64, f64))> = candidates
            .keys()
            .map(|&rid| (rid, net.coords(self.requests[&rid].origin)))
            .collect();
        let partition = partition_requests(
            &points,
            self.cfg.workers,
            &*self.partitioner,
            &mut self.rng_partition,
            &candidates,
        );
        m.io_cost = partition.io_cost;

        let snap = Snapshot {
            net,
            requests: &self.requests,
            fleet: &self.fleet,
            now,
        };
        let rv = build_rv(&snap, &partition, &candidates, &self.planner);
        let budget = match (self.cfg.rtv_steps, self.cfg.rtv_seconds) {
            (Some(n), _) => RtvBudget::Steps(n),
            (None, Some(s)) => RtvBudget::WallClock(Duration::from_secs_f64(s)),
            (None, None) => RtvBudget::Unlimited,
        };
        let rtv = build_rtv(&snap, &rv, &self.planner, budget);

        self.audit_cache(&excluded, now);
        if let Some(c) = self.cache.as_mut() {
            c.update(&rv.feasible, self.epoch);
            m.cache_entries = c.len();
        }

        let (sol, stats) = if open.is_empty() {
            let empty = AssignmentSolution {
                chosen: Vec::new(),
                unassigned: BTreeSet::new(),
                objective: 0.0,
                status: SolveStatus::Optimal,
            };
            (empty, Default::default())
        } else {
            let warm = greedy_warm_start(&rtv, &open, &self.params);
            let ip = build_assignment_ip(&rtv, &open, &self.params);
            if let Some(dir) = &self.lp_dump {
                let path = dir.join(format!("epoch_{:05}.lp", self.epoch));
                std::fs::write(&path, write_lp(&ip.instance)).map_err(|e| Error::io(&path, e))?;
            }
            let budget = self.cfg.ilp_nodes.map_or(Budget::Unlimited, Budget::Nodes);
            solve_assignment(&ip, Some(&warm), budget)?
        };
        commit(&sol, &rtv, &mut self.fleet, &mut self.requests, now, net)?;

        m.rv_calls = rv.pdp_calls;
        m.rtv_calls = rtv.pdp_calls;
        m.partial_routes = rv.stats.partial_routes + rtv.stats.partial_routes;
        m.rr_edges = rv.rr_edges.len();
        m.rv_edges = rv.rv_edges.len();
        m.tv_edges = rtv.num_edges();
        m.rtv_complete = rtv.complete.values().all(|&c| c);
        m.ilp_status = if open.is_empty() { "skipped" } else { sol.status.as_str() }.to_string();
        m.ilp_nodes = stats.nodes;
        m.ilp_pivots = stats.pivots;
        m.objective = sol.objective;

        // Rebalancing.
        let outcome = {
            let input = RebalanceInput {
                net,
                idle: self.fleet.iter().filter(|v| v.is_idle()).collect(),
                unserved: self
                    .requests
                    .values()
                    .filter(|r| r.state == RequestState::Pending)
                    .collect(),
                now,
                max_wait: self.cfg.omega_s,
            };
            self.rebalancer.plan(&input, &mut self.rng_rebalance)?
        };
        for t in &outcome.tasks {
            let v = &mut self.fleet[t.vehicle.0 as usize];
            let was_rebalancing = v.is_rebalancing();
            v.set_rebalance_target(t.node)?;
            self.rebalances.push(RebalanceRecord {
                epoch: self.epoch,
                time: now,
                vehicle: t.vehicle,
                target: t.target,
                node: t.node,
                tau: t.tau,
                was_rebalancing,
            });
        }
        m.rebalance_tasks = outcome.tasks.len();
        m.virtual_requests = outcome.virtuals;
        m.comp_steps = m.partial_routes + stats.pivots + stats.nodes + outcome.steps;
        m.comp_seconds = if self.cfg.wall_clock {
            clock.elapsed().as_secs_f64()
        } else {
            0.0
        };

        m.pending = self.count(RequestState::Pending);
        m.assigned = self.count(RequestState::Assigned);
        m.onboard = self.count(RequestState::Onboard);
        m.completed = self.count(RequestState::Completed);
        m.rejected = self.count(RequestState::Rejected);
        self.decisions.push(DecisionRecord {
            epoch: self.epoch,
            time: now,
            objective: sol.objective,
            assignments: sol.chosen,
            unassigned: sol.unassigned.into_iter().collect(),
            picked_up: picked,
        });
        self.metrics.push(m);
        Ok(self.metrics.last().expect("just pushed"))
    }

    /// Re-checks a random sample of cache-excluded pairs by direct search.
    fn audit_cache(&mut self, excluded: &[(RequestId, VehicleId)], now: Seconds) {
        let n = self.cfg.cache_audit.min(excluded.len());
        if n == 0 {
            return;
        }
        let mut idx = sample(&mut self.rng_audit, excluded.len(), n).into_vec();
        idx.sort_unstable();
        for i in idx {
            let (rid, vid) = excluded[i];
            let v = &self.fleet[vid.0 as usize];
            let onboard: Vec<&Request> = v.onboard.iter().map(|p| &self.requests[p]).collect();
            let q = PdpQuery::new(v, onboard, vec![&self.requests[&rid]], now);
            let res = best_route_exhaustive(&q, self.net, false);
            self.audit.pairs += 1;
            if res.feasible {
                self.audit.violations += 1;
            }
        }
    }

    fn finished(&self) -> bool {
        self.cursor == self.demand.len()
            && self.now >= self.horizon
            && self
                .requests
                .values()
                .all(|r| r.state.is_terminal())
    }

    /// Runs to the end of demand plus a bounded drain, then reports.
    pub fn run(mut self) -> Result<RunOutput> {
        let cap = self.horizon + 2.0 * (self.cfg.omega_s + self.cfg.delta_s);
        while !self.finished() && self.now < cap {
            self.step()?;
        }
        let left: Vec<RequestId> = self.open_requests();
        self.reject(&left)?;
        self.finish()
    }

    fn finish(self) -> Result<RunOutput> {
        let ingested = self.requests.len();
        let completed = self.count(RequestState::Completed);
        let rejected = self.count(RequestState::Rejected);
        let onboard = self.count(RequestState::Onboard);
        if completed + rejected + onboard != ingested {
            return Err(Error::Invariant(format!(
                "request conservation broken: {ingested} ingested, {completed} completed, {onboard} onboard, {rejected} rejected"
            )));
        }
        let mut waits = Vec::new();
        let mut delays = Vec::new();
        let mut violations = 0;
        for r in self.requests.values() {
            if let Some(p) = r.pickup_time {
                waits.push(p - r.request_time);
            }
            if r.state == RequestState::Completed {
                let w = r.waiting_time()?;
                let d = r.total_delay()?;
                delays.push(d);
                if w > r.max_wait + EXEC_TOL || d > r.max_delay + EXEC_TOL {
                    violations += 1;
                }
            }
        }
        let mean = |xs: &[f64]| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
        let epochs = self.metrics.len();
        let total_steps: u64 = self.metrics.iter().map(|m| m.comp_steps).sum();
        let secs: Vec<f64> = self.metrics.iter().map(|m| m.comp_seconds).collect();
        let picked_up = waits.len();
        let report = RunReport {
            variant: self.cfg.variant.as_str().to_string(),
            rebalancer: self.rebalancer.name().to_string(),
            partitioner: self.partitioner.name().to_string(),
            seed: self.cfg.seed,
            ingested,
            picked_up,
            completed,
            rejected,
            onboard_at_end: onboard,
            empty: ingested == 0,
            service_rate: if ingested == 0 {
                1.0
            } else {
                picked_up as f64 / ingested as f64
            },
            mean_waiting_s: mean(&waits),
            mean_total_delay_s: mean(&delays),
            mean_epoch_seconds: mean(&secs),
            mean_epoch_steps: if epochs == 0 { 0.0 } else { total_steps as f64 / epochs as f64 },
            total_steps,
            epochs,
            constraint_violations: violations,
            cache_audit: self.audit,
            rebalance: audit_rebalance_log(&self.rebalances),
            series: self.metrics,
        };
        Ok(RunOutput {
            report,
            decisions: self.decisions,
            rebalances: self.rebalances,
        })
    }
}

fn advance_vehicle(
    v: &mut VehicleState,
    from: Seconds,
    until: Seconds,
    net: &Network,
    requests: &mut BTreeMap<RequestId, Request>,
    mut cache: Option<&mut FeasibleVehicleCache>,
    picked: &mut Vec<RequestId>,
) -> Result<()> {
    loop {
        if v.arrival_time > until {
            // Mid-edge: keep the residual.
            return Ok(());
        }
        let t = v.arrival_time.max(from);
        let node = v.next_node;
        v.current_node = node;
        while let Some(&s) = v.route.first().filter(|s| s.node == node) {
            let r = requests
                .get_mut(&s.request)
                .ok_or_else(|| Error::Invariant(format!("{} has a stop for unknown {}", v.id, s.request)))?;
            match s.kind {
                StopKind::Pickup => {
                    if v.onboard.len() >= v.capacity {
                        return Err(Error::Invariant(format!("{} over capacity picking up {}", v.id, r.id)));
                    }
                    if t - r.request_time > r.max_wait + EXEC_TOL {
                        return Err(Error::Invariant(format!("{} picked up {} late at {t}", v.id, r.id)));
                    }
                    r.transition(RequestState::Onboard)?;
                    r.pickup_time = Some(t);
                    let pos = v.onboard.binary_search(&r.id).unwrap_err();
                    v.onboard.insert(pos, r.id);
                    if let Some(c) = cache.as_deref_mut() {
                        c.forget(r.id);
                    }
                    picked.push(r.id);
                }
                StopKind::Dropoff => {
                    let pos = v
                        .onboard
                        .binary_search(&r.id)
                        .map_err(|_| Error::Invariant(format!("{} drops {} it does not carry", v.id, r.id)))?;
                    if t > r.dropoff_deadline() + EXEC_TOL {
                        return Err(Error::Invariant(format!("{} dropped {} late at {t}", v.id, r.id)));
                    }
                    v.onboard.remove(pos);
                    r.transition(RequestState::Completed)?;
                    r.dropoff_time = Some(t);
                }
            }
            v.route.remove(0);
        }
        if v.route.is_empty() && v.rebalance_target == Some(node) {
            v.rebalance_target = None;
        }
        let Some(goal) = v.route.first().map(|s| s.node).or(v.rebalance_target) else {
            return Ok(());
        };
        let hop = net
            .next_hop(node, goal)
            .ok_or_else(|| Error::Invariant(format!("{} cannot reach node {goal}", v.id)))?;
        let e = net
            .edge_time(node, hop)
            .ok_or_else(|| Error::Invariant(format!("no edge {node} -> {hop}")))?;
        v.next_node = hop;
        v.arrival_time = t + e;
    }
}
