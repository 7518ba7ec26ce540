//! Simulation and limit theory for non-Markovian SIS, SIR, SIRS and SEIR epidemics.
//!
//! The crate covers exact event-driven simulation of the finite-population models, the
//! deterministic Volterra equations they converge to, the Gaussian fluctuation limits around
//! them, and the statistics needed to check one against the other.

pub mod agent_sim;
pub mod distributions;
pub mod equilibria;
pub mod error;
pub mod fclt;
pub mod fluid;
pub mod grid;
pub mod harness;
pub mod model;
pub mod rate;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use rate::ContactRate;
