//! Capability temporal logic for heterogeneous teams: parsing, monitoring,
//! normalization, trajectory repair and a learned distributed controller
//! with gated communication.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod monitor;
pub mod normalizer;
pub mod policy;
pub mod repair;
pub mod spec;
pub mod trainer;
pub mod synth;

pub use error::{CatlError, ParseError, Result};
