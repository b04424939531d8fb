//! Sequel-aware graph neural recommendation at desk scale.
//!
//! The crate builds a heterogeneous dynamic graph from timestamped
//! user-item interactions plus an ordered series catalog, samples
//! temporal m-order sub-graphs around a user, runs layered sequel-aware
//! message passing over them, and trains/evaluates next-item prediction
//! with leave-one-out ranking metrics. Everything is deterministic
//! given a seed.

pub mod adam;
pub mod checkpoint;
pub mod data;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod sampling;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
