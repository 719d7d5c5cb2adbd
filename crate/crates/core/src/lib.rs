//! Numerical laboratory for tug-of-war games whose deterministic-move
//! probability varies in space: geometry of coupled noise rotations,
//! probability coefficients, a dynamic-programming solver, a stochastic game
//! engine, two-point comparison machinery, and regularity measurements.

pub mod coeff;
pub mod comparison;
pub mod config;
pub mod dpp;
pub mod error;
pub mod game;
pub mod geom;
pub mod linalg;
pub mod regularity;

pub use error::{Error, Result};
