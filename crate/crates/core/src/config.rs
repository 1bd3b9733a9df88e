//! Flat `key = value` configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Unknown keys are errors.
//!
//! | key | meaning |
//! |-----|---------|
//! | `fleet_size` | number of vehicles |
//! | `capacity` | seats per vehicle |
//! | `omega_s` | maximum waiting time Ω, seconds |
//! | `delta_s` | maximum total delay Δ, seconds |
//! | `epoch_s` | assignment period, seconds |
//! | `duration_s` | length of the demand window, seconds |
//! | `seed` | master seed |
//! | `variant` | `original`, `speedup` or `speedup_proactive` |
//! | `rebalancer` | override: `none`, `reactive`, `one_to_one`, `proactive` |
//! | `partitioner` | override: `kmeans`, `random`, `round_robin` |
//! | `workers` | number of request partitions |
//! | `rtv_steps` | per-vehicle trip search budget in route searches (`unlimited` allowed) |
//! | `rtv_seconds` | per-vehicle trip search budget in wall-clock seconds |
//! | `ilp_nodes` | branch-and-bound node budget (`unlimited` allowed) |
//! | `exhaustive_limit` | largest passengers + requests solved by exact search |
//! | `c_ko` | penalty for an unassigned request; default 10 (Ω + Δ) |
//! | `alpha_miles` | walking range α for demand clusters |
//! | `p_min` | minimum probability of a virtual request |
//! | `gamma` | idle vehicles considered per target, γ |
//! | `v_max` | vehicle cap V^max |
//! | `r_max` | target cap R^max |
//! | `lookahead_bins` | demand bins ahead of the current time |
//! | `bin_s` | demand histogram bin width, seconds |
//! | `suppression_mode` | `per_vehicle`, `whole_cluster` or `off` |
//! | `weight_by_probability` | divide matching costs by target probability |
//! | `proactive_targets` | `union` (real and virtual) or `virtual` |
//! | `wall_clock` | record wall-clock epoch times (breaks byte-identical reports) |
//! | `cache_audit` | excluded request-vehicle pairs re-checked per epoch |
//! | `grid_rows`, `grid_cols`, `edge_s`, `spacing_miles` | synthetic grid |
//! | `rate_per_epoch` | mean requests per epoch |
//! | `hotspot_period_s`, `hotspot_share`, `hotspot_radius` | moving hotspot |
//! | `history_days` | days of history generated for demand fitting |

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::CostParams;
use crate::rebalance::{RebalanceCaps, SuppressionMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Original,
    Speedup,
    SpeedupProactive,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Original, Variant::Speedup, Variant::SpeedupProactive];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Speedup => "speedup",
            Variant::SpeedupProactive => "speedup_proactive",
        }
    }

    pub fn uses_cache(self) -> bool {
        self != Variant::Original
    }

    pub fn uses_prune(self) -> bool {
        self != Variant::Original
    }

    pub fn default_rebalancer(self) -> &'static str {
        match self {
            Variant::Original => "reactive",
            Variant::Speedup => "one_to_one",
            Variant::SpeedupProactive => "proactive",
        }
    }

    pub fn default_partitioner(self) -> &'static str {
        match self {
            Variant::Original => "random",
            _ => "kmeans",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProactiveTargets {
    Union,
    Virtual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub edge_s: f64,
    pub spacing_miles: f64,
    pub rate_per_epoch: f64,
    pub hotspot_period_s: f64,
    pub hotspot_share: f64,
    pub hotspot_radius: usize,
    pub history_days: usize,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            grid_rows: 15,
            grid_cols: 15,
            edge_s: 60.0,
            spacing_miles: 0.2,
            rate_per_epoch: 4.0,
            hotspot_period_s: 1800.0,
            hotspot_share: 0.6,
            hotspot_radius: 2,
            history_days: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub fleet_size: usize,
    pub capacity: usize,
    pub omega_s: f64,
    pub delta_s: f64,
    pub epoch_s: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub variant: Variant,
    pub rebalancer: Option<String>,
    pub partitioner: Option<String>,
    pub workers: usize,
    pub rtv_steps: Option<u64>,
    pub rtv_seconds: Option<f64>,
    pub ilp_nodes: Option<u64>,
    pub exhaustive_limit: usize,
    pub c_ko: Option<f64>,
    pub alpha_miles: f64,
    pub p_min: f64,
    pub gamma: f64,
    pub v_max: usize,
    pub r_max: usize,
    pub lookahead_bins: usize,
    pub bin_s: f64,
    pub suppression_mode: SuppressionMode,
    pub weight_by_probability: bool,
    pub proactive_targets: ProactiveTargets,
    pub wall_clock: bool,
    pub cache_audit: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            fleet_size: 40,
            capacity: 4,
            omega_s: 300.0,
            delta_s: 600.0,
            epoch_s: 30.0,
            duration_s: 6.0 * 3600.0,
            seed: 1,
            variant: Variant::Speedup,
            rebalancer: None,
            partitioner: None,
            workers: 4,
            rtv_steps: None,
            rtv_seconds: None,
            ilp_nodes: Some(20_000),
            exhaustive_limit: 4,
            c_ko: None,
            alpha_miles: 0.4,
            p_min: 0.75,
            gamma: 3.0,
            v_max: 300,
            r_max: 600,
            lookahead_bins: 1,
            bin_s: 300.0,
            suppression_mode: SuppressionMode::PerVehicle,
            weight_by_probability: false,
            proactive_targets: ProactiveTargets::Union,
            wall_clock: false,
            cache_audit: 0,
        }
    }
}

impl SimConfig {
    pub fn rebalancer_name(&self) -> &str {
        self.rebalancer.as_deref().unwrap_or(self.variant.default_rebalancer())
    }

    pub fn partitioner_name(&self) -> &str {
        self.partitioner.as_deref().unwrap_or(self.variant.default_partitioner())
    }

    pub fn cost_params(&self) -> CostParams {
        match self.c_ko {
            Some(c) => CostParams { unassigned_penalty: c },
            None => CostParams::default_for(self.omega_s, self.delta_s),
        }
    }

    pub fn caps(&self) -> RebalanceCaps {
        RebalanceCaps {
            gamma: self.gamma,
            v_max: self.v_max,
            r_max: self.r_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.epoch_s > 0.0) {
            return bad("epoch_s must be positive");
        }
        if self.capacity == 0 {
            return bad("capacity must be at least 1");
        }
        if !(self.omega_s > 0.0) || self.delta_s < self.omega_s {
            return bad("need omega_s > 0 and delta_s >= omega_s");
        }
        if !(self.duration_s >= 0.0) {
            return bad("duration_s must be non-negative");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if !(self.bin_s > 0.0) || !(self.alpha_miles > 0.0) {
            return bad("bin_s and alpha_miles must be positive");
        }
        if !(self.gamma > 0.0) || self.v_max == 0 || self.r_max == 0 {
            return bad("gamma, v_max and r_max must be positive");
        }
        if !(0.0..=1.0).contains(&self.p_min) {
            return bad("p_min must lie in [0, 1]");
        }
        self.cost_params().validate(self.omega_s, self.delta_s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub sim: SimConfig,
    pub scenario: ScenarioSpec,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_limit(key: &str, value: &str) -> Result<Option<u64>> {
    if value == "unlimited" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn parse_opt_f64(key: &str, value: &str) -> Result<Option<f64>> {
    if value == "default" || value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn show_limit(v: Option<u64>) -> String {
    v.map_or("unlimited".into(), |n| n.to_string())
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.sim;
        let sc = &mut self.scenario;
        match key {
            "fleet_size" => s.fleet_size = parse(key, value)?,
            "capacity" => s.capacity = parse(key, value)?,
            "omega_s" => s.omega_s = parse(key, value)?,
            "delta_s" => s.delta_s = parse(key, value)?,
            "epoch_s" => s.epoch_s = parse(key, value)?,
            "duration_s" => s.duration_s = parse(key, value)?,
            "seed" => s.seed = parse(key, value)?,
            "variant" => s.variant = value.parse()?,
            "rebalancer" => s.rebalancer = Some(value.to_string()),
            "partitioner" => s.partitioner = Some(value.to_string()),
            "workers" => s.workers = parse(key, value)?,
            "rtv_steps" => s.rtv_steps = parse_limit(key, value)?,
            "rtv_seconds" => s.rtv_seconds = parse_opt_f64(key, value)?,
            "ilp_nodes" => s.ilp_nodes = parse_limit(key, value)?,
            "exhaustive_limit" => s.exhaustive_limit = parse(key, value)?,
            "c_ko" => s.c_ko = parse_opt_f64(key, value)?,
            "alpha_miles" => s.alpha_miles = parse(key, value)?,
            "p_min" => s.p_min = parse(key, value)?,
            "gamma" => s.gamma = parse(key, value)?,
            "v_max" => s.v_max = parse(key, value)?,
            "r_max" => s.r_max = parse(key, value)?,
            "lookahead_bins" => s.lookahead_bins = parse(key, value)?,
            "bin_s" => s.bin_s = parse(key, value)?,
            "suppression_mode" => {
                s.suppression_mode = match value {
                    "per_vehicle" => SuppressionMode::PerVehicle,
                    "whole_cluster" => SuppressionMode::WholeCluster,
                    "off" => SuppressionMode::Off,
                    _ => return Err(Error::Config(format!("invalid value {value:?} for {key}"))),
                }
            }
            "weight_by_probability" => s.weight_by_probability = parse(key, value)?,
            "proactive_targets" => {
                s.proactive_targets = match value {
                    "union" => ProactiveTargets::Union,
                    "virtual" => ProactiveTargets::Virtual,
                    _ => return Err(Error::Config(format!("invalid value {value:?} for {key}"))),
                }
            }
            "wall_clock" => s.wall_clock = parse(key, value)?,
            "cache_audit" => s.cache_audit = parse(key, value)?,
            "grid_rows" => sc.grid_rows = parse(key, value)?,
            "grid_cols" => sc.grid_cols = parse(key, value)?,
            "edge_s" => sc.edge_s = parse(key, value)?,
            "spacing_miles" => sc.spacing_miles = parse(key, value)?,
            "rate_per_epoch" => sc.rate_per_epoch = parse(key, value)?,
            "hotspot_period_s" => sc.hotspot_period_s = parse(key, value)?,
            "hotspot_share" => sc.hotspot_share = parse(key, value)?,
            "hotspot_radius" => sc.hotspot_radius = parse(key, value)?,
            "history_days" => sc.history_days = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// `key=value` overrides, as given on the command line.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, pairs: &[S]) -> Result<()> {
        for p in pairs {
            let (k, v) = p
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {:?} is not key=value", p.as_ref())))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        let sc = &self.scenario;
        if sc.grid_rows == 0 || sc.grid_cols == 0 || sc.grid_rows * sc.grid_cols < 2 {
            return Err(Error::Config("grid needs at least two nodes".into()));
        }
        if !(sc.edge_s > 0.0) || !(sc.spacing_miles > 0.0) || !(sc.hotspot_period_s > 0.0) {
            return Err(Error::Config("edge_s, spacing_miles and hotspot_period_s must be positive".into()));
        }
        if !(sc.rate_per_epoch >= 0.0) || !(0.0..=1.0).contains(&sc.hotspot_share) {
            return Err(Error::Config("rate_per_epoch must be >= 0 and hotspot_share in [0, 1]".into()));
        }
        Ok(())
    }

    /// Every key with its current value, in a form `parse` reads back.
    pub fn to_text(&self) -> String {
        let s = &self.sim;
        let sc = &self.scenario;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("fleet_size", s.fleet_size.to_string());
        kv("capacity", s.capacity.to_string());
        kv("omega_s", s.omega_s.to_string());
        kv("delta_s", s.delta_s.to_string());
        kv("epoch_s", s.epoch_s.to_string());
        kv("duration_s", s.duration_s.to_string());
        kv("seed", s.seed.to_string());
        kv("variant", s.variant.as_str().into());
        kv("rebalancer", s.rebalancer_name().into());
        kv("partitioner", s.partitioner_name().into());
        kv("workers", s.workers.to_string());
        kv("rtv_steps", show_limit(s.rtv_steps));
        kv("rtv_seconds", s.rtv_seconds.map_or("none".into(), |v| v.to_string()));
        kv("ilp_nodes", show_limit(s.ilp_nodes));
        kv("exhaustive_limit", s.exhaustive_limit.to_string());
        kv("c_ko", s.cost_params().unassigned_penalty.to_string());
        kv("alpha_miles", s.alpha_miles.to_string());
        kv("p_min", s.p_min.to_string());
        kv("gamma", s.gamma.to_string());
        kv("v_max", s.v_max.to_string());
        kv("r_max", s.r_max.to_string());
        kv("lookahead_bins", s.lookahead_bins.to_string());
        kv("bin_s", s.bin_s.to_string());
        kv(
            "suppression_mode",
            match s.suppression_mode {
                SuppressionMode::PerVehicle => "per_vehicle",
                SuppressionMode::WholeCluster => "whole_cluster",
                SuppressionMode::Off => "off",
            }
            .into(),
        );
        kv("weight_by_probability", s.weight_by_probability.to_string());
        kv(
            "proactive_targets",
            match s.proactive_targets {
                ProactiveTargets::Union => "union",
                ProactiveTargets::Virtual => "virtual",
            }
            .into(),
        );
        kv("wall_clock", s.wall_clock.to_string());
        kv("cache_audit", s.cache_audit.to_string());
        kv("grid_rows", sc.grid_rows.to_string());
        kv("grid_cols", sc.grid_cols.to_string());
        kv("edge_s", sc.edge_s.to_string());
        kv("spacing_miles", sc.spacing_miles.to_string());
        kv("rate_per_epoch", sc.rate_per_epoch.to_string());
        kv("hotspot_period_s", sc.hotspot_period_s.to_string());
        kv("hotspot_share", sc.hotspot_share.to_string());
        kv("hotspot_radius", sc.hotspot_radius.to_string());
        kv("history_days", sc.history_days.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_round_trip() {
        let c = Config::parse("fleet_size = 12 # comment\n\nvariant=original\nrtv_steps = unlimited\n").unwrap();
        assert_eq!(c.sim.fleet_size, 12);
        assert_eq!(c.sim.variant, Variant::Original);
        assert_eq!(c.sim.rtv_steps, None);
        assert_eq!(c.sim.rebalancer_name(), "reactive");
        let back = Config::parse(&c.to_text()).unwrap();
        assert_eq!(back.to_text(), c.to_text());
    }

    #[test]
    fn errors_are_config_errors() {
        for bad in ["nope = 1", "fleet_size = x", "fleet_size", "variant = fast"] {
            let e = Config::parse(bad).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{bad}: {e}");
        }
        let mut c = Config::default();
        c.sim.c_ko = Some(100.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn overrides() {
        let mut c = Config::default();
        c.apply_overrides(&["seed=9", "p_min = 0.5"]).unwrap();
        assert_eq!((c.sim.seed, c.sim.p_min), (9, 0.5));
    }
}
