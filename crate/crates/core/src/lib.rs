//! Tempered and generalized fractional Hawkes processes.
//!
//! A Hawkes process with exponentially decaying intensity is run on the random
//! clock of an inverse subordinator. The crate provides samplers for both
//! ingredients, closed-form and transform-based moments of the time-changed
//! intensity, and a Monte Carlo harness that checks one against the other.

pub mod analytics;
pub mod bernstein;
pub mod bridge;
pub mod error;
pub mod hawkes;
pub mod laplace;
pub mod montecarlo;
pub mod quadrature;
pub mod special;
pub mod subordinators;

pub use bernstein::{BernsteinFunction, BernsteinRegistry, BernsteinSpec};
pub use error::{Error, Result};
