//! Supply-network evolution: stable-link extraction from transaction
//! records, parameter estimation, a stochastic growth model, network
//! statistics and systemic-risk scoring.

pub mod calibration;
pub mod engine;
pub mod esri;
pub mod error;
pub mod graph;
pub mod io;
pub mod linkfilter;
pub mod month;
pub mod netstats;
pub mod olsfit;
pub mod params;
pub mod synthbench;

pub use error::{Error, Result};
pub use graph::{FirmId, NetworkState, SectorId};
