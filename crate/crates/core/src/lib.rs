//! Mode-clustering dynamic equivalents of wind farms.
//!
//! The crate linearises a farm of full-converter turbines around its load
//! flow, finds the DC-voltage-control oscillation modes, clusters them,
//! groups turbines by their participation in each cluster and replaces
//! every group by one aggregated machine.

pub mod aggregation;
pub mod assembly;
pub mod clustering;
pub mod error;
pub mod farm;
pub mod modal;
pub mod network;
pub mod pipeline;
pub mod plot;
pub mod powerflow;
pub mod synth;
pub mod validation;
pub mod wt;

pub use error::{Error, Result};
pub use farm::{load_farm, FarmDescription, C64};
