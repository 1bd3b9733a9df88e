//! Named factories for the pluggable strategies (rebalancers, partitioners).

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::config::{ProactiveTargets, SimConfig};
use crate::error::{Error, Result};
use crate::rebalance::{
    ClusterModel, DemandModel, NoRebalancer, OneToOneRebalancer, ProactiveRebalancer, ReactiveRebalancer, Rebalancer,
};
use crate::rtv::partition::{KMeansPartitioner, Partitioner, RandomPartitioner, RoundRobinPartitioner};

/// Everything a factory may need.
#[derive(Clone, Copy)]
pub struct BuildContext<'a> {
    pub config: &'a SimConfig,
    pub clusters: Option<&'a Arc<ClusterModel>>,
    pub demand: Option<&'a Arc<DemandModel>>,
}

type Factory<T> = Box<dyn Fn(&BuildContext<'_>) -> Result<Box<T>> + Send + Sync>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    factories: BTreeMap<String, Factory<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            factories: BTreeMap::new(),
        }
    }

    /// Replaces any factory already registered under `name`.
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&BuildContext<'_>) -> Result<Box<T>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn build(&self, name: &str, ctx: &BuildContext<'_>) -> Result<Box<T>> {
        let f = self.factories.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown {} {name:?}; known: {}",
                self.kind,
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        f(ctx)
    }
}

pub fn rebalancers() -> Registry<dyn Rebalancer> {
    let mut r: Registry<dyn Rebalancer> = Registry::new("rebalancer");
    r.register("none", |_| Ok(Box::new(NoRebalancer)));
    r.register("reactive", |_| Ok(Box::new(ReactiveRebalancer)));
    r.register("one_to_one", |ctx| {
        Ok(Box::new(OneToOneRebalancer {
            caps: ctx.config.caps(),
            weight_by_probability: ctx.config.weight_by_probability,
        }))
    });
    r.register("proactive", |ctx| {
        let (Some(clusters), Some(demand)) = (ctx.clusters, ctx.demand) else {
            return Err(Error::Config("the proactive rebalancer needs a fitted demand model".into()));
        };
        if clusters.k() != demand.dist.len() {
            return Err(Error::Config(format!(
                "demand model has {} clusters but the network has {}",
                demand.dist.len(),
                clusters.k()
            )));
        }
        let c = ctx.config;
        Ok(Box::new(ProactiveRebalancer {
            clusters: Arc::clone(clusters),
            demand: Arc::clone(demand),
            caps: c.caps(),
            p_min: c.p_min,
            lookahead_bins: c.lookahead_bins,
            suppression: c.suppression_mode,
            weight_by_probability: c.weight_by_probability,
            include_real: c.proactive_targets == ProactiveTargets::Union,
        }))
    });
    r
}

pub fn partitioners() -> Registry<dyn Partitioner> {
    let mut r: Registry<dyn Partitioner> = Registry::new("partitioner");
    r.register("kmeans", |_| Ok(Box::new(KMeansPartitioner)));
    r.register("random", |_| Ok(Box::new(RandomPartitioner)));
    r.register("round_robin", |_| Ok(Box::new(RoundRobinPartitioner)));
    r
}
