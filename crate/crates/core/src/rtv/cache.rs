//! Per-request record of the vehicles that may still serve it alone.

use std::collections::{BTreeMap, BTreeSet};

use crate::fleet::{RequestId, VehicleId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub vehicles: BTreeSet<VehicleId>,
    pub created_epoch: u64,
}

/// A vehicle that cannot serve a request on its own at some moment cannot
/// serve it later either (travel times are static and waiting only shrinks
/// the slack), so each set only ever loses members.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeasibleVehicleCache {
    entries: BTreeMap<RequestId, CacheEntry>,
}

impl FeasibleVehicleCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, r: RequestId) -> Option<&CacheEntry> {
        self.entries.get(&r)
    }

    pub fn allows(&self, r: RequestId, v: VehicleId) -> bool {
        self.entries.get(&r).is_none_or(|e| e.vehicles.contains(&v))
    }

    /// No vehicle left: the request is skipped by all graph work.
    pub fn is_dropped(&self, r: RequestId) -> bool {
        self.entries.get(&r).is_some_and(|e| e.vehicles.is_empty())
    }

    /// `feasible[r]` holds this epoch's feasible vehicles among those still
    /// allowed for `r`.
    pub fn update(&mut self, feasible: &BTreeMap<RequestId, BTreeSet<VehicleId>>, epoch: u64) {
        for (&r, now_ok) in feasible {
            match self.entries.get_mut(&r) {
                Some(e) => e.vehicles.retain(|v| now_ok.contains(v)),
                None => {
                    self.entries.insert(
                        r,
                        CacheEntry {
                            vehicles: now_ok.clone(),
                            created_epoch: epoch,
                        },
                    );
                }
            }
        }
    }

    pub fn forget(&mut self, r: RequestId) {
        self.entries.remove(&r);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RequestId, &CacheEntry)> {
        self.entries.iter()
    }
}
