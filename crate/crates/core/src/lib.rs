//! Mean-field Potts / random-cluster models and their Swendsen-Wang,
//! Chayes-Machta and FK Glauber dynamics: analytic drift maps, simulators,
//! exact small-`n` oracles and a reproducible experiment harness.

pub mod analytic;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod model;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
