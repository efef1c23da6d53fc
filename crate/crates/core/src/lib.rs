//! Deterministic agent-based simulation of bus networks for comparing how
//! route changes affect different passenger groups.

pub mod config;
pub mod data;
pub mod engine;
pub mod experiments;
pub mod error;
pub mod features;
pub mod geo;
pub mod network;
pub mod planner;
pub mod stats;
pub mod synth;

#[cfg(test)]
mod testutil;

pub use config::{SimConfig, SpeedParams};
pub use data::{Dataset, Group, SensitivityProfile, Weights};
pub use error::{Error, Result};
