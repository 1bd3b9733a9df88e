//! Per-epoch metrics, decision logs and the end-of-run report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::{RequestId, VehicleId};
use crate::network::{NodeId, Seconds};
use crate::rebalance::{one_to_one_violations, RebalanceTask, Target};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: u64,
    pub time: Seconds,
    pub new: usize,
    pub pending: usize,
    pub assigned: usize,
    pub onboard: usize,
    pub completed: usize,
    pub rejected: usize,
    pub picked_up: usize,
    pub io_cost: usize,
    pub rv_calls: u64,
    pub rtv_calls: u64,
    pub partial_routes: u64,
    pub rr_edges: usize,
    pub rv_edges: usize,
    pub tv_edges: usize,
    pub rtv_complete: bool,
    pub cache_entries: usize,
    pub cache_dropped: usize,
    pub ilp_status: String,
    pub ilp_nodes: u64,
    pub ilp_pivots: u64,
    pub objective: f64,
    pub rebalance_tasks: usize,
    pub virtual_requests: usize,
    /// Zero unless wall-clock timing is switched on.
    pub comp_seconds: f64,
    /// Route-search nodes, simplex pivots, B&B nodes and matching
    /// augmentations spent in the timed part of the epoch.
    pub comp_steps: u64,
}

/// What the assignment decided; identical across exact variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub epoch: u64,
    pub time: Seconds,
    pub objective: f64,
    pub assignments: Vec<(VehicleId, Vec<RequestId>)>,
    pub unassigned: Vec<RequestId>,
    pub picked_up: Vec<RequestId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebalanceRecord {
    pub epoch: u64,
    pub time: Seconds,
    pub vehicle: VehicleId,
    pub target: Target,
    pub node: NodeId,
    pub tau: Seconds,
    /// The vehicle already had a rebalancing target when it got this task.
    pub was_rebalancing: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RebalanceAudit {
    pub tasks: usize,
    pub one_to_one_violations: usize,
    pub rerouted: usize,
}

/// Checks the rebalancing log: at most one vehicle per target and one task
/// per vehicle within an epoch, and no task given to a moving rebalancer.
pub fn audit_rebalance_log(log: &[RebalanceRecord]) -> RebalanceAudit {
    let mut by_epoch: BTreeMap<u64, Vec<RebalanceTask>> = BTreeMap::new();
    for r in log {
        by_epoch.entry(r.epoch).or_default().push(RebalanceTask {
            vehicle: r.vehicle,
            target: r.target,
            node: r.node,
            tau: r.tau,
        });
    }
    RebalanceAudit {
        tasks: log.len(),
        one_to_one_violations: by_epoch.values().map(|t| one_to_one_violations(t)).sum(),
        rerouted: log.iter().filter(|r| r.was_rebalancing).count(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CacheAudit {
    pub pairs: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: String,
    pub rebalancer: String,
    pub partitioner: String,
    pub seed: u64,
    pub ingested: usize,
    pub picked_up: usize,
    pub completed: usize,
    pub rejected: usize,
    pub onboard_at_end: usize,
    /// No request was ingested; the service rate is then reported as 1.
    pub empty: bool,
    /// Picked-up requests over all ingested requests.
    pub service_rate: f64,
    /// Over picked-up requests.
    pub mean_waiting_s: f64,
    /// Over completed requests.
    pub mean_total_delay_s: f64,
    pub mean_epoch_seconds: f64,
    pub mean_epoch_steps: f64,
    pub total_steps: u64,
    pub epochs: usize,
    /// Completed requests that broke their waiting or delay bound.
    pub constraint_violations: usize,
    pub cache_audit: CacheAudit,
    pub rebalance: RebalanceAudit,
    pub series: Vec<EpochMetrics>,
}

impl RunReport {
    pub const SUMMARY_HEADER: &'static str =
        "variant\tseed\tingested\tservice_rate\tmean_waiting_s\tmean_total_delay_s\tmean_epoch_seconds\tmean_epoch_steps";

    pub fn summary_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{:.4}\t{:.2}\t{:.2}\t{:.4}\t{:.1}",
            self.variant,
            self.seed,
            self.ingested,
            self.service_rate,
            self.mean_waiting_s,
            self.mean_total_delay_s,
            self.mean_epoch_seconds,
            self.mean_epoch_steps
        )
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", Self::SUMMARY_HEADER);
        let _ = writeln!(s, "{}", self.summary_row());
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for it in items {
        serde_json::to_writer(&mut buf, it)?;
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn jsonl_string<T: Serialize>(items: &[T]) -> Result<String> {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it)?);
        s.push('\n');
    }
    Ok(s)
}
