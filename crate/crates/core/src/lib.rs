//! Optimal formation tracking for linear multi-agent systems.
//!
//! A group of double-integrator agents is steered so that its barycenter
//! follows a desired path, the agents settle into a distance-specified
//! formation, and the input energy is small. The trajectory is found by a
//! projection-operator Newton method: each iteration solves a time-varying
//! LQ problem for a search direction, backtracks along it, and projects the
//! result back onto the system trajectories with a PD tracking loop.

pub mod analysis;
pub mod cli;
pub mod cost;
pub mod error;
pub mod grid;
pub mod lq;
pub mod model;
pub mod potential;
pub mod projection;
pub mod pronto;
pub mod scenarios;

pub use error::{OiftError, Result};
