//! Requests, vehicles, stops, and the service cost.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Network, NodeId, Seconds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestState {
    Pending,
    Assigned,
    Onboard,
    Completed,
    Rejected,
}

impl RequestState {
    pub fn can_become(self, next: RequestState) -> bool {
        use RequestState::*;
        matches!(
            (self, next),
            (Pending, Assigned)
                | (Assigned, Onboard)
                | (Onboard, Completed)
                | (Pending, Rejected)
                | (Assigned, Rejected)
                | (Assigned, Pending)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, RequestState::Completed | RequestState::Rejected)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    pub origin: NodeId,
    pub destination: NodeId,
    pub request_time: Seconds,
    pub max_wait: Seconds,
    pub max_delay: Seconds,
    /// Shortest-path duration origin -> destination.
    pub direct_time: Seconds,
    pub state: RequestState,
    pub pickup_time: Option<Seconds>,
    pub dropoff_time: Option<Seconds>,
}

impl Request {
    pub fn new(
        id: RequestId,
        origin: NodeId,
        destination: NodeId,
        request_time: Seconds,
        max_wait: Seconds,
        max_delay: Seconds,
        net: &Network,
    ) -> Result<Self> {
        if origin == destination {
            return Err(Error::Data(format!("{id}: origin equals destination")));
        }
        if !(max_wait > 0.0) {
            return Err(Error::Data(format!("{id}: max wait must be positive")));
        }
        if max_delay < max_wait {
            return Err(Error::Data(format!("{id}: max delay below max wait")));
        }
        let direct_time = net
            .travel_time(origin, destination)?
            .ok_or_else(|| Error::Data(format!("{id}: destination unreachable from origin")))?;
        Ok(Self {
            id,
            origin,
            destination,
            request_time,
            max_wait,
            max_delay,
            direct_time,
            state: RequestState::Pending,
            pickup_time: None,
            dropoff_time: None,
        })
    }

    /// t*: the earliest possible arrival, anchored at the request time.
    pub fn earliest_arrival(&self) -> Seconds {
        self.request_time + self.direct_time
    }

    pub fn pickup_deadline(&self) -> Seconds {
        self.request_time + self.max_wait
    }

    pub fn dropoff_deadline(&self) -> Seconds {
        self.earliest_arrival() + self.max_delay
    }

    pub fn transition(&mut self, next: RequestState) -> Result<()> {
        if !self.state.can_become(next) {
            return Err(Error::Invariant(format!(
                "{}: illegal transition {:?} -> {:?}",
                self.id, self.state, next
            )));
        }
        self.state = next;
        Ok(())
    }

    pub fn waiting_time(&self) -> Result<Seconds> {
        self.pickup_time
            .map(|p| p - self.request_time)
            .ok_or_else(|| Error::Query(format!("{} has not been picked up", self.id)))
    }

    pub fn total_delay(&self) -> Result<Seconds> {
        match (self.state, self.dropoff_time) {
            (RequestState::Completed, Some(d)) => Ok(d - self.earliest_arrival()),
            _ => Err(Error::Query(format!("{} is not completed", self.id))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopKind {
    Pickup,
    Dropoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stop {
    pub node: NodeId,
    pub kind: StopKind,
    pub request: RequestId,
}

impl Stop {
    pub fn pickup(r: &Request) -> Self {
        Self {
            node: r.origin,
            kind: StopKind::Pickup,
            request: r.id,
        }
    }

    pub fn dropoff(r: &Request) -> Self {
        Self {
            node: r.destination,
            kind: StopKind::Dropoff,
            request: r.id,
        }
    }

    /// Ordering key for deterministic tie-breaks.
    pub fn key(&self) -> (StopKind, RequestId) {
        (self.kind, self.request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    pub capacity: usize,
    /// Last node the vehicle left (equal to `next_node` when parked).
    pub current_node: NodeId,
    pub next_node: NodeId,
    pub arrival_time: Seconds,
    /// Passengers, sorted by id.
    pub onboard: Vec<RequestId>,
    pub route: Vec<Stop>,
    pub rebalance_target: Option<NodeId>,
}

impl VehicleState {
    pub fn parked(id: VehicleId, capacity: usize, node: NodeId) -> Self {
        Self {
            id,
            capacity,
            current_node: node,
            next_node: node,
            arrival_time: 0.0,
            onboard: Vec::new(),
            route: Vec::new(),
            rebalance_target: None,
        }
    }

    /// Where and when the vehicle can start a new plan.
    pub fn departure(&self, now: Seconds) -> (NodeId, Seconds) {
        (self.next_node, self.arrival_time.max(now))
    }

    /// Travel time from the vehicle's position at `now` to `node`.
    pub fn time_to(&self, net: &Network, node: NodeId, now: Seconds) -> Seconds {
        let (from, t0) = self.departure(now);
        (t0 - now) + net.tt(from, node)
    }

    /// Empty, no committed stops, and not heading to a rebalancing target.
    pub fn is_idle(&self) -> bool {
        self.onboard.is_empty() && self.route.is_empty() && self.rebalance_target.is_none()
    }

    pub fn is_rebalancing(&self) -> bool {
        self.rebalance_target.is_some()
    }

    pub fn set_rebalance_target(&mut self, target: NodeId) -> Result<()> {
        if !self.onboard.is_empty() || !self.route.is_empty() {
            return Err(Error::Invariant(format!("{} is not empty; cannot rebalance", self.id)));
        }
        self.rebalance_target = Some(target);
        Ok(())
    }

    /// Committed route restricted to the stops of current passengers.
    pub fn passenger_route(&self) -> Vec<Stop> {
        self.route
            .iter()
            .filter(|s| self.onboard.binary_search(&s.request).is_ok())
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Penalty for leaving a request unassigned in a round.
    pub unassigned_penalty: Seconds,
}

impl CostParams {
    pub fn default_for(max_wait: Seconds, max_delay: Seconds) -> Self {
        Self {
            unassigned_penalty: 10.0 * (max_wait + max_delay),
        }
    }

    pub fn validate(&self, max_wait: Seconds, max_delay: Seconds) -> Result<()> {
        if self.unassigned_penalty <= max_wait + max_delay {
            return Err(Error::Config(format!(
                "unassigned penalty {} must exceed max wait + max delay ({})",
                self.unassigned_penalty,
                max_wait + max_delay
            )));
        }
        Ok(())
    }
}

/// Delays of served and in-progress passengers plus the penalty for every
/// rejected request.
pub fn system_cost(
    completed_and_onboard_delays: &[Seconds],
    assigned_delay_bounds: &[Seconds],
    n_rejected: usize,
    params: &CostParams,
) -> Seconds {
    completed_and_onboard_delays.iter().sum::<Seconds>()
        + assigned_delay_bounds.iter().sum::<Seconds>()
        + n_rejected as f64 * params.unassigned_penalty
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> Network {
        Network::grid(1, 3, 50.0, 0.1).unwrap()
    }

    fn req(net: &Network) -> Request {
        Request::new(RequestId(1), 0, 2, 0.0, 120.0, 240.0, net).unwrap()
    }

    #[test]
    fn waiting_time_cases() {
        let net = net();
        let mut r = req(&net);
        assert!(r.waiting_time().is_err());
        r.request_time = 100.0;
        r.pickup_time = Some(150.0);
        assert_eq!(r.waiting_time().unwrap(), 50.0);
        r.pickup_time = Some(100.0);
        assert_eq!(r.waiting_time().unwrap(), 0.0);
    }

    #[test]
    fn total_delay_cases() {
        let net = net();
        let mut r = req(&net);
        assert_eq!(r.direct_time, 100.0);
        assert!(r.total_delay().is_err());
        r.state = RequestState::Completed;
        r.pickup_time = Some(0.0);
        r.dropoff_time = Some(150.0);
        assert_eq!(r.total_delay().unwrap(), 50.0);
        r.dropoff_time = Some(100.0);
        assert_eq!(r.total_delay().unwrap(), 0.0);
        // Waited 50 s, then rode directly for 100 s.
        r.pickup_time = Some(50.0);
        r.dropoff_time = Some(150.0);
        assert_eq!(r.total_delay().unwrap(), 50.0);
    }

    #[test]
    fn system_cost_cases() {
        let p = CostParams {
            unassigned_penalty: 10_000.0,
        };
        assert_eq!(system_cost(&[50.0, 30.0], &[], 1, &p), 10_080.0);
        assert_eq!(system_cost(&[], &[], 0, &p), 0.0);
        assert_eq!(system_cost(&[0.0, 0.0, 0.0], &[], 0, &p), 0.0);
    }

    #[test]
    fn request_validation() {
        let net = net();
        assert!(Request::new(RequestId(0), 1, 1, 0.0, 10.0, 20.0, &net).is_err());
        assert!(Request::new(RequestId(0), 0, 1, 0.0, 0.0, 20.0, &net).is_err());
        assert!(Request::new(RequestId(0), 0, 1, 0.0, 30.0, 20.0, &net).is_err());
    }

    #[test]
    fn state_machine_edges() {
        use RequestState::*;
        let all = [Pending, Assigned, Onboard, Completed, Rejected];
        let allowed = [
            (Pending, Assigned),
            (Assigned, Onboard),
            (Onboard, Completed),
            (Pending, Rejected),
            (Assigned, Rejected),
            (Assigned, Pending),
        ];
        for a in all {
            for b in all {
                assert_eq!(a.can_become(b), allowed.contains(&(a, b)), "{a:?} -> {b:?}");
            }
        }
    }

    #[test]
    fn rebalance_target_requires_empty_vehicle() {
        let net = net();
        let r = req(&net);
        let mut v = VehicleState::parked(VehicleId(0), 4, 0);
        v.route.push(Stop::pickup(&r));
        assert!(v.set_rebalance_target(2).is_err());
        v.route.clear();
        v.set_rebalance_target(2).unwrap();
        assert!(v.is_rebalancing() && !v.is_idle());
    }
}
