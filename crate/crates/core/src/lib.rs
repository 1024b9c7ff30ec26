//! Thermal anomaly detection for modular EV charging stations.
//!
//! - [`station`]: stochastic charging sessions, post loads and
//!   efficiency-driven module allocation.
//! - [`thermal`]: per-module RC heat-sink model.
//! - [`dataset`]: loss/temperature records and 125-sample training windows.
//! - [`mlp`]: ReLU networks, Adam, training and ensembles.
//! - [`anomaly`]: normalized prediction errors, moving averages and the
//!   decision rule.
//! - [`pipeline`]: simulate → train → detect orchestration.

pub mod anomaly;
pub mod config;
pub mod dataset;
pub mod error;
pub mod mlp;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod station;
pub mod thermal;

pub use config::SimConfig;
pub use error::{Error, Result};
