//! Simulator for agile acoustic and RF pest-control tricopters: field and
//! pest model, emitter physics, inward-spiral path planning, flight with
//! failsafes, neighbor-negotiated swarm partitioning and the daily
//! treatment engine.

pub mod acoustics;
pub mod cli;
pub mod config;
pub mod error;
pub mod field;
pub mod flight;
pub mod geometry;
pub mod path;
pub mod sim;
pub mod swarm;

pub use error::{Error, Result};
