//! Anomalous vertex detection from network topology.
//!
//! A random-forest link classifier is trained to tell existing edges from
//! random non-edges. Its per-edge "should not exist" probabilities are then
//! aggregated into seven per-vertex meta-features, which are used to rank
//! vertices or to train a second classifier.

pub mod anomaly;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod forest;
pub mod graph;
pub mod io;
pub mod sampling;

pub use error::{Error, Result};
