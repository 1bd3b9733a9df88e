//! Seeded ridepooling simulator: road network, shareability graphs, trip
//! assignment and idle-vehicle rebalancing.

mod error;
pub mod assignment;
pub mod config;
pub mod experiment;
pub mod fleet;
pub mod kmeans;
pub mod network;
pub mod oracle;
pub mod pdp;
pub mod rebalance;
pub mod registry;
pub mod rtv;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
